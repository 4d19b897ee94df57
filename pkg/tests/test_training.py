import json

import numpy as np
import pytest
import torch

from motionforecast import (
    AdamW,
    ModelConfig,
    MotionTransformer,
    NonFiniteGradientError,
    TrainConfig,
    TrainingDivergedError,
    build_adjacency,
    default_skeleton,
    l2_loss,
    load_checkpoint,
    sliding_windows,
    train,
)
from motionforecast.skeleton import HorizonSpec
from motionforecast.training import prepare_window_tensors
from motionforecast.transform import canonicalize, compute_params

from helpers import chain_skeleton, tiny_config, walking_sequence


def test_l2_loss_matches_naive_loops():
    rng = np.random.default_rng(0)
    for _ in range(10):
        b, t, n = (int(rng.integers(1, 4)) for _ in range(3))
        n += 1
        pred = rng.normal(size=(b, t, n, 3))
        gt = rng.normal(size=(b, t, n, 3))
        expected = 0.0
        for bi in range(b):
            for ti in range(t):
                sq = 0.0
                for ni in range(n):
                    for c in range(3):
                        sq += (pred[bi, ti, ni, c] - gt[bi, ti, ni, c]) ** 2
                expected += np.sqrt(sq)
        expected /= b * t
        got = l2_loss(torch.from_numpy(pred), torch.from_numpy(gt)).item()
        assert abs(got - expected) < 1e-12


def test_l2_loss_known_value_and_validation():
    pred = torch.ones(2, 4, 3)
    gt = torch.zeros(2, 4, 3)
    # every frame differs by the all-ones vector of length sqrt(3 * 4)
    assert l2_loss(pred, gt).item() == pytest.approx(np.sqrt(12.0))
    assert l2_loss(pred, pred).item() == 0.0
    with pytest.raises(ValueError):
        l2_loss(torch.zeros(2, 4, 3), torch.zeros(2, 5, 3))
    with pytest.raises(ValueError):
        l2_loss(torch.zeros(2, 4, 2), torch.zeros(2, 4, 2))
    with pytest.raises(ValueError):
        l2_loss(torch.zeros(4, 3), torch.zeros(4, 3))


def test_adamw_tracks_torch_reference():
    torch.manual_seed(0)
    shapes = [(4, 3), (7,), (2, 2, 2)]
    init = [torch.randn(s, dtype=torch.float64) for s in shapes]
    mine = [p.clone().requires_grad_(True) for p in init]
    ref = [p.clone().requires_grad_(True) for p in init]
    opt_mine = AdamW(mine, lr=1e-3, weight_decay=0.05)
    opt_ref = torch.optim.AdamW(
        ref, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.05
    )
    data = torch.randn(10, dtype=torch.float64)
    for step in range(7):
        for opt, params in ((opt_mine, mine), (opt_ref, ref)):
            opt.zero_grad()
            loss = sum(((p.sum() - data[step]) ** 2) for p in params)
            loss.backward()
            opt.step()
        for a, b in zip(mine, ref):
            assert torch.max(torch.abs(a - b)) < 1e-12, f"diverged at step {step}"


def test_adamw_validation_and_nonfinite_gradients():
    p = torch.zeros(3, requires_grad=True)
    with pytest.raises(ValueError):
        AdamW([p], lr=0.0)
    with pytest.raises(ValueError):
        AdamW([p], betas=(1.0, 0.999))
    with pytest.raises(ValueError):
        AdamW([p], eps=0.0)
    with pytest.raises(ValueError):
        AdamW([p], weight_decay=-1.0)
    opt = AdamW([p], lr=1e-3)
    p.grad = torch.tensor([1.0, float("nan"), 0.0])
    with pytest.raises(NonFiniteGradientError):
        opt.step()


def test_train_config_io(tmp_path):
    cfg = TrainConfig(max_epochs=3, batch_size=2, learning_rate=1e-3, seed=7)
    assert TrainConfig.from_dict(cfg.as_dict()) == cfg
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"max_epochs": 3, "momentum": 0.9})
    path = tmp_path / "train.json"
    path.write_text(json.dumps(cfg.as_dict()))
    assert TrainConfig.from_file(path) == cfg
    path.write_text("not json")
    with pytest.raises(ValueError):
        TrainConfig.from_file(path)
    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        TrainConfig.from_file(path)
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(grad_clip=0.0)


def _windows(count, seed=0, input_len=5, output_len=4):
    rng = np.random.default_rng(seed)
    sk = default_skeleton()
    hz = HorizonSpec(input_len, output_len)
    out = []
    while len(out) < count:
        seq = walking_sequence(sk, hz.total + 6, rng)
        out.extend(sliding_windows(seq, hz, stride=3))
    return out[:count]


def test_prepare_window_tensors_canonicalizes_per_window():
    wins = _windows(3)
    cfg = tiny_config()
    x, y = prepare_window_tensors(wins, cfg)
    assert x.shape == (3, 5, 17, 3)
    assert y.shape == (3, 4, 17, 3)
    for i, (s_in, s_out) in enumerate(wins):
        params = compute_params(s_in)
        assert np.allclose(x[i].numpy(), canonicalize(s_in, params).frames)
        assert np.allclose(y[i].numpy(), canonicalize(s_out, params).frames)

    raw_cfg = tiny_config(use_transform=False)
    x_raw, _ = prepare_window_tensors(wins, raw_cfg)
    assert np.allclose(x_raw[0].numpy(), wins[0][0].frames)

    with pytest.raises(ValueError):
        prepare_window_tensors([], cfg)
    with pytest.raises(ValueError):
        prepare_window_tensors(wins, tiny_config(output_len=9))


def test_train_writes_records_and_checkpoints(tmp_path):
    wins = _windows(4)
    cfg = tiny_config()
    tc = TrainConfig(max_epochs=3, batch_size=2, learning_rate=1e-3, seed=1)
    result = train(wins, cfg, tc, tmp_path)
    assert len(result.records) == 3
    for epoch, record in enumerate(result.records, start=1):
        assert record["epoch"] == epoch
        assert np.isfinite(record["train_loss"])
        assert record["seconds"] >= 0.0
    assert result.best_checkpoint_path is None
    logged = [
        json.loads(line)
        for line in (tmp_path / "trainlog.jsonl").read_text().splitlines()
    ]
    assert logged == result.records
    loaded, _ = load_checkpoint(result.checkpoint_path)
    for a, b in zip(result.model.state_dict().values(), loaded.state_dict().values()):
        assert torch.equal(a, b)


def test_train_loss_mostly_decreases_early(tmp_path):
    wins = _windows(8, seed=3)
    cfg = tiny_config()
    tc = TrainConfig(max_epochs=6, batch_size=8, learning_rate=3e-4, seed=0)
    result = train(wins, cfg, tc, tmp_path)
    losses = [r["train_loss"] for r in result.records]
    drops = sum(1 for a, b in zip(losses, losses[1:]) if b <= a)
    assert drops >= 4, losses


def test_train_tracks_best_validation_checkpoint(tmp_path):
    wins = _windows(6, seed=4)
    cfg = tiny_config()
    tc = TrainConfig(max_epochs=3, batch_size=3, learning_rate=1e-3, seed=2)
    result = train(wins[:4], cfg, tc, tmp_path, val_windows=wins[4:])
    assert result.best_checkpoint_path is not None
    assert (tmp_path / "best.npz").exists()
    vals = [r["val_ade_tr"] for r in result.records]
    assert all(np.isfinite(v) for v in vals)
    # the best checkpoint is written whenever the validation error improves
    best_epochs = [r for r in result.records if r["checkpoint"].endswith("best.npz")]
    assert best_epochs
    assert min(vals) == min(r["val_ade_tr"] for r in best_epochs)


def test_train_is_deterministic_for_a_seed(tmp_path):
    wins = _windows(4, seed=5)
    cfg = tiny_config()
    tc = TrainConfig(max_epochs=2, batch_size=2, learning_rate=1e-3, seed=9)
    r1 = train(wins, cfg, tc, tmp_path / "a")
    r2 = train(wins, cfg, tc, tmp_path / "b")
    assert [r["train_loss"] for r in r1.records] == [r["train_loss"] for r in r2.records]
    for a, b in zip(r1.model.state_dict().values(), r2.model.state_dict().values()):
        assert torch.equal(a, b)


def test_train_divergence_guard(tmp_path):
    wins = _windows(2, seed=6)
    cfg = tiny_config()
    model = MotionTransformer(cfg, build_adjacency(default_skeleton()))
    with torch.no_grad():
        model.out_proj.weight.fill_(float("nan"))
    tc = TrainConfig(max_epochs=1, batch_size=2, learning_rate=1e-3)
    with pytest.raises(TrainingDivergedError):
        train(wins, cfg, tc, tmp_path, model=model)


def test_train_rejects_mismatched_resume_model(tmp_path):
    wins = _windows(2, seed=7)
    other = MotionTransformer(tiny_config(num_layers=2), build_adjacency(default_skeleton()))
    tc = TrainConfig(max_epochs=1, batch_size=2, learning_rate=1e-3)
    with pytest.raises(ValueError, match="config"):
        train(wins, tiny_config(), tc, tmp_path, model=other)
    with pytest.raises(ValueError):
        train([], tiny_config(), tc, tmp_path)


def test_train_ablation_flags_reach_the_checkpoint(tmp_path):
    wins = _windows(2, seed=8)
    cfg = tiny_config()
    seen = []
    for flag in ("no_gat", "no_relative_attn", "no_shared_attn"):
        tc = TrainConfig(max_epochs=1, batch_size=2, learning_rate=1e-3, **{flag: True})
        result = train(wins, cfg, tc, tmp_path / flag)
        loaded, _ = load_checkpoint(result.checkpoint_path)
        assert getattr(loaded.cfg, flag) is True
        seen.append(loaded.cfg)
    assert len(set(seen)) == 3  # each ablation reports its own distinct config


def test_train_with_gradient_clipping_runs(tmp_path):
    wins = _windows(2, seed=9)
    cfg = tiny_config()
    tc = TrainConfig(max_epochs=1, batch_size=2, learning_rate=1e-3, grad_clip=0.5)
    result = train(wins, cfg, tc, tmp_path)
    assert np.isfinite(result.records[-1]["train_loss"])
