"""Loss, optimizer, and the training loop.

Training happens in the canonical frame: every window is canonicalized with
parameters computed from its own observed segment, and the loss compares the
model output against the canonicalized future. Models configured with
``use_transform=False`` train directly on raw global coordinates instead.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .model import (
    ModelConfig,
    MotionPredictor,
    MotionTransformer,
    save_checkpoint,
    torch_dtype,
)
from .skeleton import MotionSequence, build_adjacency
from .transform import canonicalize, compute_params


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class NonFiniteGradientError(RuntimeError):
    """Raised when a gradient contains NaN or infinity."""


def l2_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean over predicted frames of the L2 norm of the flattened pose error.

    Accepts (T2, N, 3) or batched (B, T2, N, 3) tensors; with a batch the
    mean also runs over batch members. Zero iff ``pred == gt``.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}")
    if pred.ndim < 3 or pred.shape[-1] != 3:
        raise ValueError(f"expected (..., T2, N, 3), got {tuple(pred.shape)}")
    diff = (pred - gt).reshape(*pred.shape[:-2], pred.shape[-2] * 3)
    return torch.linalg.vector_norm(diff, dim=-1).mean()


class AdamW(torch.optim.Optimizer):
    """Adam with decoupled weight decay.

    Each step first shrinks the parameter by ``lr * weight_decay`` and then
    applies the bias-corrected Adam update, so the decay never enters the
    moment estimates. Defaults follow the usual (0.9, 0.999, 1e-8) moments
    and the low learning rate / decay this model trains with.
    """

    def __init__(self, params, lr=1e-5, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-5):
        if lr <= 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= betas[0] < 1.0 or not 0.0 <= betas[1] < 1.0:
            raise ValueError(f"betas must be in [0, 1), got {betas}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        if weight_decay < 0.0:
            raise ValueError(f"weight decay must be >= 0, got {weight_decay}")
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            lr = group["lr"]
            beta1, beta2 = group["betas"]
            eps = group["eps"]
            wd = group["weight_decay"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if not torch.isfinite(grad).all():
                    raise NonFiniteGradientError(
                        f"non-finite gradient for parameter of shape {tuple(p.shape)}"
                    )
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                state["step"] += 1
                step = state["step"]
                if wd != 0.0:
                    p.mul_(1.0 - lr * wd)
                exp_avg, exp_avg_sq = state["exp_avg"], state["exp_avg_sq"]
                exp_avg.mul_(beta1).add_(grad, alpha=1.0 - beta1)
                exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)
                bias1 = 1.0 - beta1**step
                bias2 = 1.0 - beta2**step
                denom = exp_avg_sq.sqrt().div_(math.sqrt(bias2)).add_(eps)
                p.addcdiv_(exp_avg, denom, value=-lr / bias1)
        return loss


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; ablation flags here rewire the model at build time."""

    max_epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 1e-5
    weight_decay: float = 1e-5
    seed: int = 0
    no_gat: bool = False
    no_relative_attn: bool = False
    no_shared_attn: bool = False
    grad_clip: float | None = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.grad_clip is not None and self.grad_clip <= 0.0:
            raise ValueError(f"grad_clip must be positive, got {self.grad_clip}")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"train config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"train config {path} must hold a JSON object")
        return cls.from_dict(data)


@dataclass
class TrainResult:
    """What a training run produced: the model, per-epoch records, and paths."""

    model: MotionTransformer
    records: list[dict]
    checkpoint_path: str
    best_checkpoint_path: str | None = None


Window = tuple[MotionSequence, MotionSequence]


def prepare_window_tensors(
    windows: list[Window], cfg: ModelConfig
) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack windows into model-ready (inputs, targets) tensors.

    With ``use_transform`` on, each window is canonicalized with parameters
    from its own observed part, so the targets live in the same frame the
    model predicts in.
    """
    if not windows:
        raise ValueError("at least one training window is required")
    dtype = torch_dtype(cfg.dtype)
    xs, ys = [], []
    for s_in, s_out in windows:
        if len(s_in) != cfg.input_len or len(s_out) != cfg.output_len:
            raise ValueError(
                f"window horizon ({len(s_in)}, {len(s_out)}) does not match model "
                f"({cfg.input_len}, {cfg.output_len})"
            )
        if s_in.skeleton.num_joints != cfg.num_joints:
            raise ValueError(
                f"window has {s_in.skeleton.num_joints} joints, model expects "
                f"{cfg.num_joints}"
            )
        if cfg.use_transform:
            params = compute_params(s_in, direction_interval=cfg.direction_interval)
            s_in = canonicalize(s_in, params)
            s_out = canonicalize(s_out, params)
        xs.append(torch.from_numpy(s_in.frames.copy()))
        ys.append(torch.from_numpy(s_out.frames.copy()))
    return torch.stack(xs).to(dtype), torch.stack(ys).to(dtype)


def _resolve_ablations(model_cfg: ModelConfig, train_cfg: TrainConfig) -> ModelConfig:
    return dataclasses.replace(
        model_cfg,
        no_gat=model_cfg.no_gat or train_cfg.no_gat,
        no_relative_attn=model_cfg.no_relative_attn or train_cfg.no_relative_attn,
        no_shared_attn=model_cfg.no_shared_attn or train_cfg.no_shared_attn,
    )


def train(
    windows: list[Window],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir,
    val_windows: list[Window] | None = None,
    model: MotionTransformer | None = None,
) -> TrainResult:
    """Run the full training loop and checkpoint every epoch.

    A rolling ``last.npz`` is rewritten after each epoch; when validation
    windows are given, ``best.npz`` tracks the lowest validation trajectory
    error. Per-epoch records go to ``trainlog.jsonl`` in ``out_dir`` and are
    returned. Deterministic for a fixed seed on a single thread.
    """
    from .metrics import evaluate_windows  # local import, metrics stays model-free

    if not windows:
        raise ValueError("at least one training window is required")
    model_cfg = _resolve_ablations(model_cfg, train_cfg)
    torch.manual_seed(train_cfg.seed)
    skeleton = windows[0][0].skeleton
    if model is None:
        model = MotionTransformer(model_cfg, build_adjacency(skeleton))
    elif model.cfg != model_cfg:
        raise ValueError("resumed model config does not match the requested config")
    x_all, y_all = prepare_window_tensors(windows, model_cfg)
    optimizer = AdamW(
        model.parameters(),
        lr=train_cfg.learning_rate,
        weight_decay=train_cfg.weight_decay,
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    last_path = out_dir / "last.npz"
    best_path = out_dir / "best.npz"
    log_path = out_dir / "trainlog.jsonl"
    shuffle_rng = np.random.default_rng(train_cfg.seed)
    num_windows = x_all.shape[0]
    records: list[dict] = []
    best_val = math.inf
    have_best = False
    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(1, train_cfg.max_epochs + 1):
            started = time.perf_counter()
            order = shuffle_rng.permutation(num_windows)
            model.train()
            total = 0.0
            for start in range(0, num_windows, train_cfg.batch_size):
                idx = torch.from_numpy(order[start : start + train_cfg.batch_size].copy())
                optimizer.zero_grad(set_to_none=True)
                pred = model(x_all[idx])
                loss = l2_loss(pred, y_all[idx])
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(
                        f"training loss became non-finite at epoch {epoch}"
                    )
                loss.backward()
                if train_cfg.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
                optimizer.step()
                total += loss.item() * len(idx)
            mean_loss = total / num_windows
            record = {
                "epoch": epoch,
                "train_loss": mean_loss,
                "seconds": time.perf_counter() - started,
            }
            save_checkpoint(last_path, model, skeleton)
            record["checkpoint"] = str(last_path)
            if val_windows:
                report = evaluate_windows(MotionPredictor(model, skeleton), val_windows)
                record["val_ade_tr"] = report.ade_traj
                record["val_fde_tr"] = report.fde_traj
                record["val_ade_po"] = report.ade_pose
                record["val_fde_po"] = report.fde_pose
                if report.ade_traj < best_val:
                    best_val = report.ade_traj
                    save_checkpoint(best_path, model, skeleton)
                    have_best = True
                    record["checkpoint"] = str(best_path)
            records.append(record)
            log.write(json.dumps(record) + "\n")
            log.flush()
    return TrainResult(
        model=model,
        records=records,
        checkpoint_path=str(last_path),
        best_checkpoint_path=str(best_path) if have_best else None,
    )
