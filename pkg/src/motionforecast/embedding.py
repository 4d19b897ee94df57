"""Per-frame pose embeddings for the forecasting transformer.

Canonical poses become transformer tokens in three steps: a graph-attention
layer turns each joint's 3D coordinates into ``j_dim`` features using the
skeleton adjacency, a sinusoidal joint-position table is added so joints stay
distinguishable, and the per-joint features are flattened to one token of
width D = N * j_dim per frame, to which a sinusoidal frame-position table is
added.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn


def sinusoid_table(length: int, dim: int) -> np.ndarray:
    """Standard sinusoidal position table, shape (length, dim), float64.

    table[p, 2i] = sin(p / 10000^(2i/dim)), table[p, 2i+1] = cos(...).
    Deterministic, values in [-1, 1]; rows are pairwise distinct for any
    length up to the largest wavelength (10000 * 2 * pi positions).
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"encoding dim must be a positive even number, got {dim}")
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = np.exp(np.arange(0, dim, 2, dtype=np.float64) * (-math.log(10000.0) / dim))
    table = np.empty((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates)
    return table


def spatial_encoding(num_joints: int, j_dim: int) -> np.ndarray:
    """Joint-position table (num_joints, j_dim), indexed by joint order."""
    return sinusoid_table(num_joints, j_dim)


def temporal_encoding(t_len: int, model_dim: int) -> np.ndarray:
    """Frame-position table (t_len, model_dim), indexed by frame."""
    return sinusoid_table(t_len, model_dim)


def flatten_joints(x: torch.Tensor) -> torch.Tensor:
    """(..., N, F) -> (..., N*F), joint order preserved."""
    return x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])


def unflatten_joints(x: torch.Tensor, num_joints: int) -> torch.Tensor:
    """Inverse of :func:`flatten_joints`."""
    if x.shape[-1] % num_joints != 0:
        raise ValueError(f"width {x.shape[-1]} not divisible by {num_joints} joints")
    return x.reshape(*x.shape[:-1], num_joints, x.shape[-1] // num_joints)


class GraphAttention(nn.Module):
    """One masked attention layer over the skeleton adjacency.

    Per frame and head, joint i scores each neighbour j (adjacency row,
    self-loop included) with LeakyReLU(a . [W h_i || W h_j]), normalizes the
    scores with a softmax over the neighbour set, and aggregates the
    neighbours' projected features. Head outputs are averaged so the per-joint
    width stays ``out_features`` for any head count.

    Args:
        in_features: input features per joint (3 for raw coordinates).
        out_features: output features per joint.
        adjacency: (N, N) binary matrix; zero entries are masked out.
        num_heads: attention heads, averaged at the output.
        leaky_slope: negative slope of the scoring nonlinearity.
    """

    def __init__(
        self,
        in_features: int,
        out_features: int,
        adjacency: np.ndarray,
        num_heads: int = 1,
        leaky_slope: float = 0.2,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adjacency.shape}")
        if num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        self.in_features = in_features
        self.out_features = out_features
        self.num_joints = adjacency.shape[0]
        self.num_heads = num_heads
        self.leaky_slope = leaky_slope
        self.weight = nn.Parameter(torch.empty(num_heads, in_features, out_features, dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(num_heads, out_features, dtype=dtype))
        # One score vector of size 2*out_features per head; the first half
        # weighs the destination joint, the second half the neighbour.
        self.attn = nn.Parameter(torch.empty(num_heads, 2 * out_features, dtype=dtype))
        self.register_buffer(
            "blocked", torch.from_numpy(adjacency == 0.0), persistent=False
        )
        self.reset_parameters()

    def reset_parameters(self):
        for h in range(self.num_heads):
            nn.init.xavier_uniform_(self.weight[h])
        bound = math.sqrt(6.0 / (2 * self.out_features + 1))
        nn.init.uniform_(self.attn, -bound, bound)
        nn.init.zeros_(self.bias)

    def forward(self, x: torch.Tensor, return_attention: bool = False) -> torch.Tensor:
        """(..., N, in_features) -> (..., N, out_features).

        With ``return_attention`` also returns the (..., heads, N, N) weights.
        """
        if x.shape[-1] != self.in_features or x.shape[-2] != self.num_joints:
            raise ValueError(
                f"expected input (..., {self.num_joints}, {self.in_features}), "
                f"got {tuple(x.shape)}"
            )
        lead = x.shape[:-2]
        flat = x.reshape(-1, self.num_joints, self.in_features)
        # (M, H, N, out)
        h = torch.einsum("mni,hio->mhno", flat, self.weight) + self.bias[None, :, None, :]
        score_dst = (h * self.attn[None, :, None, : self.out_features]).sum(-1)
        score_src = (h * self.attn[None, :, None, self.out_features :]).sum(-1)
        scores = score_dst.unsqueeze(-1) + score_src.unsqueeze(-2)
        scores = nn.functional.leaky_relu(scores, negative_slope=self.leaky_slope)
        scores = scores.masked_fill(self.blocked, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        out = torch.matmul(weights, h).mean(dim=1)
        out = out.reshape(*lead, self.num_joints, self.out_features)
        if return_attention:
            return out, weights.reshape(*lead, self.num_heads, self.num_joints, self.num_joints)
        return out


class PoseSequenceEmbedding(nn.Module):
    """Canonical frames (B, T, N, 3) -> transformer tokens (B, T, D).

    ``forward`` returns both the tokens (graph features + joint table,
    flattened, + frame table) and the flattened graph features before the
    frame table is added; the decoder attends to the latter directly and
    initializes its queries from its last row.

    With ``no_gat`` the graph layer is replaced by a single per-frame linear
    map from the flattened pose to D, the component-ablation baseline.
    """

    def __init__(
        self,
        adjacency: np.ndarray,
        j_dim: int,
        max_len: int,
        num_heads: int = 1,
        leaky_slope: float = 0.2,
        no_gat: bool = False,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        num_joints = np.asarray(adjacency).shape[0]
        self.num_joints = num_joints
        self.j_dim = j_dim
        self.model_dim = num_joints * j_dim
        self.max_len = max_len
        self.no_gat = no_gat
        if no_gat:
            self.linear = nn.Linear(3 * num_joints, self.model_dim, dtype=dtype)
            nn.init.xavier_uniform_(self.linear.weight)
            nn.init.zeros_(self.linear.bias)
        else:
            self.graph = GraphAttention(
                3, j_dim, adjacency, num_heads=num_heads, leaky_slope=leaky_slope, dtype=dtype
            )
        self.register_buffer(
            "joint_table",
            torch.from_numpy(spatial_encoding(num_joints, j_dim)).to(dtype),
            persistent=False,
        )
        self.register_buffer(
            "frame_table",
            torch.from_numpy(temporal_encoding(max_len, self.model_dim)).to(dtype),
            persistent=False,
        )

    def forward(self, frames: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if frames.ndim != 4 or frames.shape[2] != self.num_joints or frames.shape[3] != 3:
            raise ValueError(
                f"expected frames (B, T, {self.num_joints}, 3), got {tuple(frames.shape)}"
            )
        t_len = frames.shape[1]
        if t_len > self.max_len:
            raise ValueError(f"sequence length {t_len} exceeds table length {self.max_len}")
        if self.no_gat:
            feats = unflatten_joints(self.linear(flatten_joints(frames)), self.num_joints)
        else:
            feats = self.graph(frames)
        graph_flat = flatten_joints(feats + self.joint_table)
        tokens = graph_flat + self.frame_table[:t_len]
        return tokens, graph_flat
