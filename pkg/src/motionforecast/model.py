"""Non-autoregressive transformer that forecasts canonical pose sequences.

The model consumes T1 embedded input frames and emits all T2 future frames in
a single decoder pass. Self-attention (encoder and decoder) is causal and
uses learned relative-position key embeddings; the decoder additionally
cross-attends to the encoder latent and, through a second cross-attention
branch, to the flattened graph embeddings that feed the encoder.

Everything here operates in the canonical frame. :class:`MotionPredictor`
wraps a model with the canonicalize/restore steps and numpy conversion for
end-to-end global-frame prediction.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .embedding import PoseSequenceEmbedding
from .skeleton import MotionSequence, Skeleton, build_adjacency
from .transform import canonicalize, compute_params, decanonicalize

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def torch_dtype(name: str) -> torch.dtype:
    try:
        return _DTYPES[name]
    except KeyError:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}, got {name!r}") from None


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or does not match the model."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and inference settings.

    The token width D is ``num_joints * j_dim`` and must divide evenly by
    ``num_heads``. ``rel_clip`` bounds the relative distances that get their
    own position embedding; it defaults to ``input_len + output_len``, the
    largest distance that can occur. The three ``no_*`` flags remove one
    component each for ablation runs, and ``use_transform`` controls whether
    prediction happens in the canonical frame (the default) or directly on
    raw coordinates.
    """

    num_joints: int
    input_len: int
    output_len: int
    j_dim: int = 32
    num_layers: int = 4
    num_heads: int = 8
    ffn_dim: int = 2048
    dropout: float = 0.1
    rel_clip: int | None = None
    gat_heads: int = 1
    no_gat: bool = False
    no_relative_attn: bool = False
    no_shared_attn: bool = False
    use_transform: bool = True
    direction_interval: int = 1
    dtype: str = "float64"

    def __post_init__(self):
        if self.num_joints < 2:
            raise ValueError(f"num_joints must be >= 2, got {self.num_joints}")
        if self.input_len < 2:
            raise ValueError(f"input_len must be >= 2, got {self.input_len}")
        if self.output_len < 1:
            raise ValueError(f"output_len must be >= 1, got {self.output_len}")
        if self.j_dim < 2 or self.j_dim % 2 != 0:
            raise ValueError(f"j_dim must be a positive even number, got {self.j_dim}")
        if self.num_layers < 0:
            raise ValueError(f"num_layers must be >= 0, got {self.num_layers}")
        if self.num_heads < 1:
            raise ValueError(f"num_heads must be >= 1, got {self.num_heads}")
        if self.model_dim % self.num_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by {self.num_heads} heads"
            )
        if self.ffn_dim < 1:
            raise ValueError(f"ffn_dim must be >= 1, got {self.ffn_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.rel_clip is None:
            object.__setattr__(self, "rel_clip", self.input_len + self.output_len)
        if self.rel_clip < 1:
            raise ValueError(f"rel_clip must be >= 1, got {self.rel_clip}")
        if self.gat_heads < 1:
            raise ValueError(f"gat_heads must be >= 1, got {self.gat_heads}")
        if not 1 <= self.direction_interval <= self.input_len - 1:
            raise ValueError(
                f"direction_interval must be in [1, input_len-1], "
                f"got {self.direction_interval} with input_len {self.input_len}"
            )
        torch_dtype(self.dtype)

    @property
    def model_dim(self) -> int:
        return self.num_joints * self.j_dim

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**data)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention, optionally causal and relative-position aware.

    With ``rel_clip`` set, a learned table of key embeddings indexed by the
    clipped signed distance between query and key positions is added to the
    logits (one table per layer, shared across heads). Cross-attention is
    selected by passing ``memory`` to :meth:`forward`; relative positions and
    causal masking only apply to self-attention.
    """

    def __init__(
        self,
        model_dim: int,
        num_heads: int,
        dropout: float = 0.0,
        rel_clip: int | None = None,
        causal: bool = False,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        if model_dim % num_heads != 0:
            raise ValueError(f"model_dim {model_dim} not divisible by {num_heads} heads")
        self.model_dim = model_dim
        self.num_heads = num_heads
        self.head_dim = model_dim // num_heads
        self.rel_clip = rel_clip
        self.causal = causal
        self.q_proj = nn.Linear(model_dim, model_dim, dtype=dtype)
        self.k_proj = nn.Linear(model_dim, model_dim, dtype=dtype)
        self.v_proj = nn.Linear(model_dim, model_dim, dtype=dtype)
        self.out_proj = nn.Linear(model_dim, model_dim, dtype=dtype)
        for lin in (self.q_proj, self.k_proj, self.v_proj, self.out_proj):
            nn.init.xavier_uniform_(lin.weight)
            nn.init.zeros_(lin.bias)
        if rel_clip is not None:
            if rel_clip < 1:
                raise ValueError(f"rel_clip must be >= 1, got {rel_clip}")
            table = torch.empty(2 * rel_clip + 1, self.head_dim, dtype=dtype)
            bound = math.sqrt(6.0 / (2 * rel_clip + 1 + self.head_dim))
            nn.init.uniform_(table, -bound, bound)
            self.rel_key = nn.Parameter(table)
        else:
            self.rel_key = None
        self.attn_dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(
        self,
        x: torch.Tensor,
        memory: torch.Tensor | None = None,
        return_attention: bool = False,
    ) -> torch.Tensor:
        if x.ndim != 3 or x.shape[-1] != self.model_dim:
            raise ValueError(f"expected (B, T, {self.model_dim}), got {tuple(x.shape)}")
        source = x if memory is None else memory
        if source.shape[-1] != self.model_dim or source.shape[0] != x.shape[0]:
            raise ValueError(
                f"memory shape {tuple(source.shape)} incompatible with {tuple(x.shape)}"
            )
        if memory is not None and (self.rel_key is not None or self.causal):
            raise ValueError("relative positions and causal masking are self-attention only")
        q = self._split(self.q_proj(x))
        k = self._split(self.k_proj(source))
        v = self._split(self.v_proj(source))
        logits = torch.matmul(q, k.transpose(-2, -1))
        t_q, t_k = q.shape[2], k.shape[2]
        if self.rel_key is not None:
            offsets = torch.arange(t_k, device=x.device) - torch.arange(t_q, device=x.device)[:, None]
            idx = offsets.clamp(-self.rel_clip, self.rel_clip) + self.rel_clip
            logits = logits + torch.einsum("bhid,ijd->bhij", q, self.rel_key[idx])
        logits = logits / math.sqrt(self.head_dim)
        if self.causal:
            future = torch.triu(
                torch.ones(t_q, t_k, dtype=torch.bool, device=x.device), diagonal=1
            )
            logits = logits.masked_fill(future, float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        weights = self.attn_dropout(weights)
        out = torch.matmul(weights, v)
        out = out.transpose(1, 2).reshape(x.shape[0], t_q, self.model_dim)
        out = self.out_proj(out)
        if return_attention:
            return out, weights
        return out


class FeedForward(nn.Module):
    def __init__(self, model_dim: int, hidden_dim: int, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.inner = nn.Linear(model_dim, hidden_dim, dtype=dtype)
        self.outer = nn.Linear(hidden_dim, model_dim, dtype=dtype)
        for lin in (self.inner, self.outer):
            nn.init.xavier_uniform_(lin.weight)
            nn.init.zeros_(lin.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.outer(torch.relu(self.inner(x)))


class EncoderLayer(nn.Module):
    """Causal relative self-attention and a feed-forward block, post-norm residuals."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        dtype = torch_dtype(cfg.dtype)
        rel = None if cfg.no_relative_attn else cfg.rel_clip
        self.self_attn = MultiHeadAttention(
            cfg.model_dim,
            cfg.num_heads,
            cfg.dropout,
            rel_clip=rel,
            causal=not cfg.no_relative_attn,
            dtype=dtype,
        )
        self.norm1 = nn.LayerNorm(cfg.model_dim, dtype=dtype)
        self.ffn = FeedForward(cfg.model_dim, cfg.ffn_dim, dtype=dtype)
        self.norm2 = nn.LayerNorm(cfg.model_dim, dtype=dtype)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.dropout(self.self_attn(x)))
        x = self.norm2(x + self.dropout(self.ffn(x)))
        return x


class DecoderLayer(nn.Module):
    """Decoder block: causal self-attention, cross-attention to the encoder
    latent, cross-attention to the graph embeddings, then feed-forward.

    When the graph-attention branch is ablated its residual slot keeps the
    layer norm, so a full model whose branch weights are all zero computes
    exactly the same function as the ablated one.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        dtype = torch_dtype(cfg.dtype)
        rel = None if cfg.no_relative_attn else cfg.rel_clip
        self.self_attn = MultiHeadAttention(
            cfg.model_dim,
            cfg.num_heads,
            cfg.dropout,
            rel_clip=rel,
            causal=not cfg.no_relative_attn,
            dtype=dtype,
        )
        self.norm1 = nn.LayerNorm(cfg.model_dim, dtype=dtype)
        self.cross_attn = MultiHeadAttention(cfg.model_dim, cfg.num_heads, cfg.dropout, dtype=dtype)
        self.norm2 = nn.LayerNorm(cfg.model_dim, dtype=dtype)
        if cfg.no_shared_attn:
            self.shared_attn = None
        else:
            self.shared_attn = MultiHeadAttention(
                cfg.model_dim, cfg.num_heads, cfg.dropout, dtype=dtype
            )
        self.norm3 = nn.LayerNorm(cfg.model_dim, dtype=dtype)
        self.ffn = FeedForward(cfg.model_dim, cfg.ffn_dim, dtype=dtype)
        self.norm4 = nn.LayerNorm(cfg.model_dim, dtype=dtype)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, z: torch.Tensor, graph_memory: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.dropout(self.self_attn(x)))
        x = self.norm2(x + self.dropout(self.cross_attn(x, memory=z)))
        if self.shared_attn is not None:
            x = self.norm3(x + self.dropout(self.shared_attn(x, memory=graph_memory)))
        else:
            x = self.norm3(x)
        x = self.norm4(x + self.dropout(self.ffn(x)))
        return x


class MotionTransformer(nn.Module):
    """Maps canonical input frames (B, T1, N, 3) to future frames (B, T2, N, 3).

    The forward pass is embed -> encode -> init queries -> decode -> project.
    The stages are exposed individually so tests can probe intermediate
    tensors; ``decode_calls`` counts decoder invocations to make the
    single-pass contract checkable.
    """

    def __init__(self, cfg: ModelConfig, adjacency: np.ndarray):
        super().__init__()
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.shape != (cfg.num_joints, cfg.num_joints):
            raise ValueError(
                f"adjacency shape {adjacency.shape} does not match "
                f"num_joints {cfg.num_joints}"
            )
        self.cfg = cfg
        dtype = torch_dtype(cfg.dtype)
        self.embedding = PoseSequenceEmbedding(
            adjacency,
            cfg.j_dim,
            max_len=cfg.input_len + cfg.output_len,
            num_heads=cfg.gat_heads,
            no_gat=cfg.no_gat,
            dtype=dtype,
        )
        self.encoder_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers))
        self.decoder_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.num_layers))
        self.out_proj = nn.Linear(cfg.model_dim, 3 * cfg.num_joints, dtype=dtype)
        nn.init.xavier_uniform_(self.out_proj.weight)
        nn.init.zeros_(self.out_proj.bias)
        self.decode_calls = 0

    def embed(self, frames: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.embedding(frames)

    def encode(self, tokens: torch.Tensor) -> torch.Tensor:
        z = tokens
        for layer in self.encoder_layers:
            z = layer(z)
        return z

    def init_queries(self, tokens: torch.Tensor, output_len: int | None = None) -> torch.Tensor:
        """Last input token repeated over the horizon, plus the horizon's
        frame-position rows."""
        t2 = self.cfg.output_len if output_len is None else output_len
        if t2 < 1:
            raise ValueError(f"output_len must be >= 1, got {t2}")
        t1 = tokens.shape[1]
        table = self.embedding.frame_table
        if t1 + t2 > table.shape[0]:
            raise ValueError(
                f"horizon {t1}+{t2} exceeds frame table length {table.shape[0]}"
            )
        last = tokens[:, t1 - 1 : t1, :]
        return last.expand(-1, t2, -1) + table[t1 : t1 + t2]

    def decode(
        self, queries: torch.Tensor, z: torch.Tensor, graph_memory: torch.Tensor
    ) -> torch.Tensor:
        self.decode_calls += 1
        h = queries
        for layer in self.decoder_layers:
            h = layer(h, z, graph_memory)
        return h

    def project(self, h: torch.Tensor) -> torch.Tensor:
        out = self.out_proj(h)
        return out.view(h.shape[0], h.shape[1], self.cfg.num_joints, 3)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.shape[1] != self.cfg.input_len:
            raise ValueError(
                f"expected {self.cfg.input_len} input frames, got {frames.shape[1]}"
            )
        tokens, graph_memory = self.embed(frames)
        z = self.encode(tokens)
        queries = self.init_queries(tokens)
        h = self.decode(queries, z, graph_memory)
        return self.project(h)


def count_params(cfg: ModelConfig) -> int:
    """Learnable-scalar count for a model built from ``cfg`` (closed form)."""
    d = cfg.model_dim
    attn = 4 * (d * d + d)
    rel = 0 if cfg.no_relative_attn else (2 * cfg.rel_clip + 1) * cfg.head_dim
    norm = 2 * d
    ffn = d * cfg.ffn_dim + cfg.ffn_dim + cfg.ffn_dim * d + d
    if cfg.no_gat:
        embed = 3 * cfg.num_joints * d + d
    else:
        embed = cfg.gat_heads * 6 * cfg.j_dim
    enc_layer = attn + rel + ffn + 2 * norm
    dec_layer = attn + rel + attn + ffn + 4 * norm
    if not cfg.no_shared_attn:
        dec_layer += attn
    out = d * 3 * cfg.num_joints + 3 * cfg.num_joints
    return embed + cfg.num_layers * (enc_layer + dec_layer) + out


class MotionPredictor:
    """End-to-end prediction on global-frame sequences.

    Canonicalizes the input (unless the model was configured with
    ``use_transform=False``), runs one forward pass without gradients, and
    maps the result back to the global frame. ``use_transform`` can be forced
    at construction to probe a model outside its training frame.
    """

    def __init__(
        self,
        model: MotionTransformer,
        skeleton: Skeleton,
        use_transform: bool | None = None,
    ):
        if skeleton.num_joints != model.cfg.num_joints:
            raise ValueError(
                f"skeleton has {skeleton.num_joints} joints, model expects "
                f"{model.cfg.num_joints}"
            )
        self.model = model
        self.skeleton = skeleton
        self.use_transform = model.cfg.use_transform if use_transform is None else use_transform

    @property
    def cfg(self) -> ModelConfig:
        return self.model.cfg

    def predict(self, s_in: MotionSequence) -> MotionSequence:
        cfg = self.model.cfg
        if len(s_in) != cfg.input_len:
            raise ValueError(f"expected {cfg.input_len} input frames, got {len(s_in)}")
        if s_in.skeleton.num_joints != cfg.num_joints:
            raise ValueError(
                f"sequence has {s_in.skeleton.num_joints} joints, model expects "
                f"{cfg.num_joints}"
            )
        if self.use_transform:
            params = compute_params(s_in, direction_interval=cfg.direction_interval)
            working = canonicalize(s_in, params)
        else:
            params = None
            working = s_in
        dtype = torch_dtype(cfg.dtype)
        x = torch.from_numpy(working.frames.copy()).to(dtype).unsqueeze(0)
        self.model.eval()
        with torch.no_grad():
            y = self.model(x)
        frames = y.squeeze(0).to(torch.float64).numpy()
        future = MotionSequence(self.skeleton, frames, s_in.fps)
        if params is not None:
            future = decanonicalize(future, params)
        return future


CHECKPOINT_FORMAT = "motionforecast-checkpoint-v1"


def save_checkpoint(path, model: MotionTransformer, skeleton: Skeleton) -> None:
    """Write config, skeleton, and all parameters to a single ``.npz`` file.

    Stored uncompressed: float64 weights barely compress and deflate makes
    the per-epoch checkpoint write the dominant training cost.
    """
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": model.cfg.as_dict(),
        "skeleton": {
            "num_joints": skeleton.num_joints,
            "joint_names": list(skeleton.joint_names),
            "edges": [list(e) for e in skeleton.edges],
            "root_index": skeleton.root_index,
        },
    }
    arrays = {
        name: tensor.detach().cpu().numpy()
        for name, tensor in model.state_dict().items()
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path, skeleton: Skeleton | None = None):
    """Rebuild a model from :func:`save_checkpoint` output.

    Returns ``(model, skeleton)``. When a skeleton is passed it must match
    the stored one; any config, shape, or format mismatch raises
    :class:`CheckpointError`.
    """
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with archive:
        if "__meta__" not in archive.files:
            raise CheckpointError(f"{path} is not a model checkpoint (no metadata entry)")
        try:
            meta = json.loads(str(archive["__meta__"][()]))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt checkpoint metadata in {path}") from exc
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(
                f"unsupported checkpoint format {meta.get('format')!r} in {path}"
            )
        try:
            cfg = ModelConfig.from_dict(meta["config"])
            sk_meta = meta["skeleton"]
            stored = Skeleton(
                num_joints=sk_meta["num_joints"],
                joint_names=tuple(sk_meta["joint_names"]),
                edges=tuple(tuple(e) for e in sk_meta["edges"]),
                root_index=sk_meta["root_index"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"invalid checkpoint metadata in {path}: {exc}") from exc
        if skeleton is not None and skeleton != stored:
            raise CheckpointError(
                "checkpoint skeleton does not match the requested skeleton"
            )
        model = MotionTransformer(cfg, build_adjacency(stored))
        state = model.state_dict()
        stored_names = set(archive.files) - {"__meta__"}
        missing = sorted(set(state) - stored_names)
        unexpected = sorted(stored_names - set(state))
        if missing or unexpected:
            raise CheckpointError(
                f"parameter names do not match model (missing {missing}, "
                f"unexpected {unexpected})"
            )
        dtype = torch_dtype(cfg.dtype)
        loaded = {}
        for name in state:
            arr = archive[name]
            if tuple(arr.shape) != tuple(state[name].shape):
                raise CheckpointError(
                    f"shape mismatch for {name}: checkpoint {tuple(arr.shape)}, "
                    f"model {tuple(state[name].shape)}"
                )
            loaded[name] = torch.from_numpy(arr.copy()).to(dtype)
    model.load_state_dict(loaded)
    return model, stored
