import numpy as np
import pytest
import torch

from seatpose.body import PoseSequence
from seatpose.dataio import PressureSequence, Recording
from seatpose.motions import SUBJECTS, make_motion
from seatpose.p2p import (
    BaselineRegressor, CheckpointError, P2PConfig, PressureToPose, baseline_regress, build_windows, generate,
    load_p2p, normalize_cloud, p2p_loss, predict_windows, save_p2p, teacher_forced_accuracy, train_baseline,
    train_p2p,
)
from seatpose.quantizer import MQConfig, MotionQuantizer, TrainConfig, kmeans_pp
from seatpose.sim import STANDARD_CHAIRS, make_chair

CLOUDS = {"a": make_chair(STANDARD_CHAIRS["office"]).point_cloud,
          "b": make_chair(STANDARD_CHAIRS["barstool"]).point_cloud}


def tiny_mq(seed=0, size=16):
    torch.manual_seed(seed)
    mq = MotionQuantizer(MQConfig(codebook_size=size, hidden=32))
    mq.codebook.set_entries(torch.as_tensor(kmeans_pp(np.random.default_rng(seed).normal(size=(64, 512)), size,
                                                      np.random.default_rng(seed)), dtype=torch.float32))
    return mq.eval()


def toy_recordings(n=4, seconds=4, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    acts = ["slouching", "reclining", "forward_leaning", "twisting_torso"]
    for i in range(n):
        m = make_motion(SUBJECTS[i % 2], acts[i % 4], seconds, rng)
        frames = rng.uniform(0, 200, size=(len(m.theta), 80, 28))
        pose = PoseSequence(m.theta, np.zeros((len(m.theta), 3)), 15, 60.0, 1.7)
        out.append(Recording(PressureSequence(frames), pose, "ab"[i % 2], m.subject_id, acts[i % 4],
                             recording_id=f"r{i}"))
    return out


def test_chair_encoder_permutation_exact():
    model = PressureToPose(P2PConfig(codebook_size=16))
    cloud = normalize_cloud(CLOUDS["a"])
    perm = np.random.default_rng(0).permutation(len(cloud))
    with torch.no_grad():
        a = model.encode_chair(cloud)
        b = model.encode_chair(cloud[perm])
        dup = model.encode_chair(np.concatenate([cloud, cloud[:100]]))
        other = model.encode_chair(normalize_cloud(CLOUDS["b"]))
    assert a.shape == (256,)
    assert torch.equal(a, b)
    assert torch.equal(a, dup)
    assert float((a - other).norm()) > 0


def test_step_logits():
    model = PressureToPose().eval()
    p = torch.rand(2, 15, 80, 28) * 100
    c = torch.randn(2, 256)
    prev = model.start_tokens(2)
    with torch.no_grad():
        a = model.step(p, c, prev)
        b = model.step(p, c, prev)
    assert a.shape == (2, 1028)
    assert torch.equal(a, b)
    np.testing.assert_allclose(torch.softmax(a.double(), -1).sum(-1).numpy(), 1.0, atol=1e-6)
    with pytest.raises(ValueError):
        model.step(torch.rand(2, 14, 80, 28), c, prev)
    with pytest.raises(ValueError):
        model.step(torch.rand(2, 15, 80, 27), c, prev)


def test_generate_length_causality_determinism():
    mq = tiny_mq()
    model = PressureToPose(P2PConfig(codebook_size=16)).eval()
    rng = np.random.default_rng(1)
    p = rng.uniform(0, 300, size=(15 * 6 + 7, 80, 28))
    feat = model.encode_chair(normalize_cloud(CLOUDS["a"])).detach()
    idx, emb = generate(model, mq, p, feat)
    assert len(idx) == 6 and emb.shape == (6, 512)
    assert torch.equal(emb, mq.codebook.entries[idx])
    idx2, _ = generate(model, mq, p, feat)
    assert torch.equal(idx, idx2)
    for t in range(6):
        q = p.copy()
        q[(t + 1) * 15:] = rng.uniform(0, 3000, size=q[(t + 1) * 15:].shape)
        idx3, _ = generate(model, mq, q, feat)
        assert torch.equal(idx3[:t + 1], idx[:t + 1])
    with pytest.raises(ValueError):
        generate(model, mq, p[:10], feat)
    # decoded frame count is N*T
    assert mq.decode(emb).theta.reshape(-1, 22, 3).shape[0] == 6 * 15


def test_p2p_loss_cases():
    target = torch.tensor([1, 0])
    onehot = torch.tensor([[-1e4, 1e4, -1e4], [1e4, -1e4, -1e4]], dtype=torch.float64)
    pos = torch.randn(2, 15, 22, 3, dtype=torch.float64)
    loss, ce, seq = p2p_loss(onehot, target, pos, pos)
    assert float(loss) == 0.0
    logits = torch.tensor([[0.5, 1.0, -0.2], [0.1, 0.0, 0.3]], dtype=torch.float64)
    dec = torch.zeros(2, 1, 1, 3, dtype=torch.float64)
    gt = torch.tensor([[[[1.0, 2.0, 2.0]]], [[[0.0, 0.0, 1.0]]]], dtype=torch.float64)
    loss0, ce0, _ = p2p_loss(logits, target, dec, gt, lam=0.0)
    assert float(loss0) == float(ce0)

    def lse(v):
        return np.log(np.sum(np.exp(v)))
    l = logits.numpy()
    ce_ref = ((lse(l[0]) - l[0, 1]) + (lse(l[1]) - l[1, 0])) / 2
    seq_ref = (9.0 + 1.0) / 2
    loss, ce, seq = p2p_loss(logits, target, dec, gt, lam=0.5)
    assert abs(float(loss) - (ce_ref + 0.5 * seq_ref)) <= 1e-9


def test_defaults():
    tc = TrainConfig()
    assert (tc.batch_size, tc.lr, tc.weight_decay, tc.patience, tc.max_epochs) == (32, 1e-4, 1e-5, 15, 200)
    cfg = P2PConfig()
    assert cfg.lam == 0.5 and cfg.scheduled_sampling == 0.0 and cfg.codebook_size == 1028


def test_build_windows_alignment():
    recs = toy_recordings()
    ws = build_windows(recs, 15, tiny_mq())
    assert len(ws) == 4 * 4
    assert ws.pressure.shape == (16, 15, 80, 28)
    np.testing.assert_array_equal(ws.pressure[1], recs[0].pressure.frames[15:30].astype(np.float32))
    assert ws.first.sum() == 4
    assert ws.tokens.shape == (16,)


def test_overfit_single_batch():
    mq = tiny_mq()
    ws = build_windows(toy_recordings(n=2, seconds=8), 15, mq)
    # give each window a distinct token so the task is learnable
    ws.tokens = np.arange(len(ws)) % 16
    model, hist = train_p2p(ws, mq, CLOUDS, P2PConfig(codebook_size=16, lam=0.0),
                            TrainConfig(batch_size=32, lr=3e-3, max_epochs=150, patience=150), seed=0)
    assert teacher_forced_accuracy(model, mq, ws, CLOUDS) >= 0.99


def test_training_determinism_and_checkpoint(tmp_path):
    mq = tiny_mq()
    ws = build_windows(toy_recordings(), 15, mq)
    tc = TrainConfig(batch_size=8, lr=1e-3, max_epochs=3)
    a, ha = train_p2p(ws, mq, CLOUDS, P2PConfig(codebook_size=16), tc, val=ws, seed=5)
    b, hb = train_p2p(ws, mq, CLOUDS, P2PConfig(codebook_size=16), tc, val=ws, seed=5)
    assert ha.val_loss == hb.val_loss
    assert min(ha.val_loss) <= ha.val_loss[0]
    save_p2p(a, tmp_path / "p2p.pt", mq)
    back = load_p2p(tmp_path / "p2p.pt", mq)
    pa, ia = predict_windows(a, mq, ws, CLOUDS)
    pb, ib = predict_windows(back, mq, ws, CLOUDS)
    np.testing.assert_array_equal(ia, ib)
    assert pa.shape == ws.positions.shape
    with pytest.raises(CheckpointError):
        load_p2p(tmp_path / "p2p.pt", tiny_mq(seed=1))
    with pytest.raises(ValueError):
        train_p2p(None, mq, CLOUDS)


def test_baseline_shapes_and_constant_input(tmp_path):
    model = BaselineRegressor().eval()
    feat = model.encode_chair(normalize_cloud(CLOUDS["a"])).detach()
    out = baseline_regress(model, np.full((15, 80, 28), 40.0), feat)
    assert out.shape == (15, 22, 3)
    with torch.no_grad():
        batch = model(torch.full((4, 15, 80, 28), 40.0), feat.expand(4, -1))
    assert torch.equal(batch[0], batch[3])
    ws = build_windows(toy_recordings(), 15)
    m, h = train_baseline(ws, CLOUDS, TrainConfig(batch_size=8, lr=1e-3, max_epochs=2), seed=0)
    save_p2p(m, tmp_path / "base.pt")
    assert isinstance(load_p2p(tmp_path / "base.pt"), BaselineRegressor)
