"""Pressure-to-pose: autoregressive motion-token prediction and a direct regressor.

Each step sees one window of pressure frames, the chair encoding and the
embedding of the previous token, and scores every codebook entry. The
direct baseline maps the same pressure and chair inputs straight to joint
positions without going through the codebook.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .body import NUM_JOINTS
from .dataio import MAT_COLS, MAT_ROWS, PRESSURE_MAX
from .quantizer import TrainConfig, canonical_chunks, quantize, state_hash

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
FEATURE_WIDTH = 256


# ---------------------------------------------------------------------------
# encoders

class PressureEncoder(nn.Module):
    """Per-frame conv stack, then a temporal conv and mean pool to one vector per window.

    Input is in mmHg; it is divided by 5000 and square-root compressed,
    since seated pressures sit far below the sensor ceiling.
    """

    def __init__(self, out=FEATURE_WIDTH):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(1, 16, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.GELU(),
        )
        self.frame = nn.Linear(64 * 10 * 4, out)
        self.temporal = nn.Conv1d(out, out, 3, padding=1)

    def forward(self, x):
        """``(B, T, 80, 28)`` mmHg -> ``(B, 256)``."""
        if x.dim() != 4 or tuple(x.shape[2:]) != (MAT_ROWS, MAT_COLS):
            raise ValueError(f"expected pressure windows (B, T, {MAT_ROWS}, {MAT_COLS}), got {tuple(x.shape)}")
        b, t = x.shape[:2]
        x = torch.sqrt((x / PRESSURE_MAX).clamp(0.0, 1.0))
        h = self.conv(x.reshape(b * t, 1, MAT_ROWS, MAT_COLS)).reshape(b, t, -1)
        h = F.gelu(self.frame(h)).transpose(1, 2)
        return (h + F.gelu(self.temporal(h))).mean(-1)


class ChairEncoder(nn.Module):
    """Shared per-point MLP followed by a max over points.

    The max reduction is exact in any order, so the feature is bitwise
    invariant to point permutations and to duplicated points.
    """

    def __init__(self, out=FEATURE_WIDTH):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(3, 64), nn.GELU(), nn.Linear(64, 128), nn.GELU(), nn.Linear(128, out))

    def forward(self, cloud):
        """``(P, 3)`` or ``(B, P, 3)`` normalised cloud -> ``(256,)`` or ``(B, 256)``."""
        if cloud.shape[-1] != 3:
            raise ValueError("chair cloud must have 3 coordinates per point")
        return self.mlp(cloud).amax(-2)


def normalize_cloud(cloud):
    """Centroid at the origin, largest radius 1."""
    c = np.asarray(cloud, np.float64)
    c = c - c.mean(0)
    r = np.linalg.norm(c, axis=1).max()
    return c / r if r > 0 else c


# ---------------------------------------------------------------------------
# predictor

@dataclass
class P2PConfig:
    window_frames: int = 15
    codebook_size: int = 1028
    token_width: int = 512
    feature_width: int = FEATURE_WIDTH
    lam: float = 0.5
    scheduled_sampling: float = 0.0


class PressureToPose(nn.Module):
    """[pressure | chair | previous token] -> linear 512 -> logits over the codebook."""

    def __init__(self, config=None):
        super().__init__()
        cfg = config or P2PConfig()
        self.config = cfg
        self.pressure = PressureEncoder(cfg.feature_width)
        self.chair = ChairEncoder(cfg.feature_width)
        self.fuse = nn.Linear(2 * cfg.feature_width + cfg.token_width, cfg.token_width)
        self.head = nn.Linear(cfg.token_width, cfg.codebook_size)
        self.start = nn.Parameter(torch.randn(cfg.token_width) * 0.02)

    def encode_chair(self, cloud):
        return self.chair(torch.as_tensor(cloud, dtype=self.start.dtype))

    def step(self, pressure_chunk, chair_feature, prev_token):
        """Logits ``(B, C)`` for one window per batch row."""
        p = torch.as_tensor(pressure_chunk, dtype=self.start.dtype)
        if p.shape[1] != self.config.window_frames:
            raise ValueError(f"pressure window must have {self.config.window_frames} frames")
        if prev_token.shape[-1] != self.config.token_width:
            raise ValueError("previous token has the wrong width")
        h = torch.cat([self.pressure(p), chair_feature, prev_token], -1)
        return self.head(F.gelu(self.fuse(h)))

    def start_tokens(self, n):
        return self.start.expand(n, -1)


def p2p_loss(logits, target, decoded, gt_positions, lam=0.5):
    """Cross-entropy on token indices plus ``lam`` times mean squared joint error.

    ``decoded`` and ``gt_positions`` are ``(..., J, 3)``; the joint error is
    the squared Euclidean distance per joint, averaged over joints and frames.
    Returns ``(total, ce, seq)``.
    """
    ce = F.cross_entropy(logits, target)
    if lam == 0 or decoded is None:
        seq = torch.zeros((), dtype=logits.dtype)
    else:
        seq = ((decoded - gt_positions) ** 2).sum(-1).mean()
    return ce + lam * seq, ce, seq


def soft_decode(mq, logits):
    """Decode the probability-weighted codebook embedding; differentiable in the logits."""
    emb = F.softmax(logits, -1) @ mq.codebook.entries
    return mq.decode(emb).positions


@torch.no_grad()
def generate(model, mq, pressure, chair_feature):
    """Greedy autoregressive decoding: one token per complete pressure window.

    ``pressure`` is ``(N, 80, 28)``; trailing frames that do not fill a
    window are ignored. Returns ``(indices, embeddings)``.
    """
    t = model.config.window_frames
    frames = torch.as_tensor(np.asarray(pressure), dtype=model.start.dtype)
    k = len(frames) // t
    if k < 1:
        raise ValueError(f"pressure shorter than one window ({len(frames)} < {t} frames)")
    windows = frames[: k * t].reshape(k, t, MAT_ROWS, MAT_COLS)
    chair_feature = torch.as_tensor(chair_feature, dtype=model.start.dtype).reshape(1, -1)
    feats = model.pressure(windows)  # windows are encoded independently
    prev = model.start_tokens(1)
    idx = []
    for i in range(k):
        h = torch.cat([feats[i:i + 1], chair_feature, prev], -1)
        logits = model.head(F.gelu(model.fuse(h)))
        j = int(torch.argmax(logits, -1))
        idx.append(j)
        prev = mq.codebook.entries[j:j + 1]
    idx = torch.tensor(idx)
    return idx, mq.codebook.entries[idx]


# ---------------------------------------------------------------------------
# direct regression baseline

class BaselineRegressor(nn.Module):
    """Pressure window + chair -> per-frame root-relative joint positions."""

    def __init__(self, window_frames=15, feature_width=FEATURE_WIDTH, hidden=512):
        super().__init__()
        self.window_frames = window_frames
        self.pressure = PressureEncoder(feature_width)
        self.chair = ChairEncoder(feature_width)
        self.mlp = nn.Sequential(nn.Linear(2 * feature_width, hidden), nn.GELU(),
                                 nn.Linear(hidden, window_frames * NUM_JOINTS * 3))

    def encode_chair(self, cloud):
        return self.chair(torch.as_tensor(cloud, dtype=torch.float32))

    def forward(self, pressure_chunk, chair_feature):
        p = torch.as_tensor(pressure_chunk, dtype=torch.float32)
        if p.shape[1] != self.window_frames:
            raise ValueError(f"pressure window must have {self.window_frames} frames")
        out = self.mlp(torch.cat([self.pressure(p), chair_feature], -1))
        return out.reshape(len(p), self.window_frames, NUM_JOINTS, 3)


def baseline_regress(model, pressure_chunk, chair_feature):
    """``(T, 80, 28)`` window -> ``(T, 22, 3)`` positions."""
    with torch.no_grad():
        p = torch.as_tensor(np.asarray(pressure_chunk)[None], dtype=torch.float32)
        return model(p, torch.as_tensor(chair_feature, dtype=torch.float32).reshape(1, -1))[0]


# ---------------------------------------------------------------------------
# datasets

@dataclass
class WindowSet:
    """All complete windows of a set of recordings, in recording order."""

    pressure: np.ndarray  # (M, T, 80, 28) float32 mmHg
    positions: np.ndarray  # (M, T, J, 3) root-relative ground truth
    theta: np.ndarray  # (M, T, J, 3)
    chair: np.ndarray  # (M,) index into chair_ids
    chair_ids: list
    recording: np.ndarray  # (M,) index into recording_ids
    recording_ids: list
    first: np.ndarray  # (M,) True for the first window of a recording
    chunks: np.ndarray = None  # (M, T, J, 18) descriptor chunks
    tokens: np.ndarray = None  # (M,) ground-truth token indices

    def __len__(self):
        return len(self.pressure)


def build_windows(recordings, window_frames=15, mq=None):
    """Cut recordings into aligned pressure/pose windows; tokenise them if ``mq`` is given."""
    ps, chunks, chair, rec, first = [], [], [], [], []
    chair_ids = sorted({r.chair_id for r in recordings})
    rec_ids = [r.recording_id for r in recordings]
    for i, r in enumerate(recordings):
        c = canonical_chunks(r.pose, window_frames / r.pose.rate_hz)
        k = len(c)
        if k == 0:
            continue
        ps.append(np.asarray(r.pressure.frames[: k * window_frames], np.float32)
                  .reshape(k, window_frames, MAT_ROWS, MAT_COLS))
        chunks.append(c)
        chair += [chair_ids.index(r.chair_id)] * k
        rec += [i] * k
        first += [True] + [False] * (k - 1)
    if not ps:
        raise ValueError("no recording is long enough for one window")
    chunks = np.concatenate(chunks)
    ws = WindowSet(np.concatenate(ps), chunks[..., 3:6].copy(), chunks[..., 0:3].copy(), np.array(chair),
                   chair_ids, np.array(rec), rec_ids, np.array(first), chunks)
    if mq is not None:
        ws.tokens = tokenize_chunks(mq, chunks)
    return ws


@torch.no_grad()
def tokenize_chunks(mq, chunks, batch=256):
    x = torch.as_tensor(chunks, dtype=torch.float32)
    out = [quantize(mq.encode(x[s:s + batch]), mq.codebook)[0] for s in range(0, len(x), batch)]
    return torch.cat(out).numpy()


def _prev_indices(ws):
    """Index of the previous window's token (-1 at sequence starts)."""
    prev = np.where(ws.first, -1, ws.tokens[np.maximum(np.arange(len(ws)) - 1, 0)])
    return prev


# ---------------------------------------------------------------------------
# training

@dataclass
class P2PHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


def _cloud_tensor(chair_clouds, ids):
    return torch.as_tensor(np.stack([normalize_cloud(chair_clouds[c]) for c in ids]), dtype=torch.float32)


def _p2p_batch(model, mq, ws, sel, clouds, prev_idx, lam):
    feats = model.chair(clouds)  # (n_chairs, 256)
    prev = torch.where(torch.as_tensor(prev_idx[sel] < 0)[:, None], model.start_tokens(len(sel)),
                       mq.codebook.entries[torch.as_tensor(np.maximum(prev_idx[sel], 0))])
    logits = model.step(torch.as_tensor(ws.pressure[sel]), feats[torch.as_tensor(ws.chair[sel])], prev)
    target = torch.as_tensor(ws.tokens[sel], dtype=torch.long)
    decoded = soft_decode(mq, logits) if lam else None
    return p2p_loss(logits, target, decoded, torch.as_tensor(ws.positions[sel], dtype=torch.float32), lam)


def train_p2p(train, mq, chair_clouds, config=None, train_config=None, val=None, seed=0, callback=None):
    """Teacher-forced training of :class:`PressureToPose` against a frozen quantizer.

    ``train`` and ``val`` are :class:`WindowSet` objects tokenised by ``mq``;
    ``chair_clouds`` maps chair id to a point cloud.
    """
    cfg = config or P2PConfig(window_frames=mq.config.window_frames, codebook_size=mq.codebook.size)
    tc = train_config or TrainConfig()
    if train is None or len(train) == 0:
        raise ValueError("empty training set")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    mq.eval()
    for p in mq.parameters():
        p.requires_grad_(False)
    model = PressureToPose(cfg)
    opt = torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(tc.max_epochs, 1))
    clouds = _cloud_tensor(chair_clouds, train.chair_ids)
    prev_idx = _prev_indices(train)
    hist = P2PHistory()
    best, best_state, bad = math.inf, None, 0
    for epoch in range(tc.max_epochs):
        model.train()
        if cfg.scheduled_sampling > 0:
            prev_idx = _scheduled_prev(model, mq, train, clouds, cfg.scheduled_sampling, rng)
        order = rng.permutation(len(train))
        total = 0.0
        for s in range(0, len(order), tc.batch_size):
            sel = order[s:s + tc.batch_size]
            loss, _, _ = _p2p_batch(model, mq, train, sel, clouds, prev_idx, cfg.lam)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(sel)
        sched.step()
        hist.train_loss.append(total / len(train))
        v = p2p_eval_loss(model, mq, val, chair_clouds, cfg.lam) if val is not None else hist.train_loss[-1]
        hist.val_loss.append(v)
        hist.epochs_run = epoch + 1
        if v < best - 1e-9:
            best, bad, hist.best_epoch = v, 0, epoch
            best_state = {k: t.clone() for k, t in model.state_dict().items()}
        else:
            bad += 1
        if callback is not None and callback(epoch, hist):
            break
        if bad >= tc.patience:
            log.info("early stop at epoch %d", epoch)
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    model._history = hist
    return model, hist


@torch.no_grad()
def _scheduled_prev(model, mq, ws, clouds, ratio, rng, batch=256):
    """Replace a ``ratio`` share of previous tokens by the model's own one-step predictions."""
    model.eval()
    teacher = _prev_indices(ws)
    own = np.empty(len(ws), dtype=np.int64)
    feats = model.chair(clouds)
    for s in range(0, len(ws), batch):
        sel = np.arange(s, min(s + batch, len(ws)))
        prev = torch.where(torch.as_tensor(teacher[sel] < 0)[:, None], model.start_tokens(len(sel)),
                           mq.codebook.entries[torch.as_tensor(np.maximum(teacher[sel], 0))])
        own[sel] = model.step(torch.as_tensor(ws.pressure[sel]), feats[torch.as_tensor(ws.chair[sel])],
                              prev).argmax(-1).numpy()
    model.train()
    shifted = np.where(ws.first, -1, own[np.maximum(np.arange(len(ws)) - 1, 0)])
    use = rng.random(len(ws)) < ratio
    return np.where(use, shifted, teacher)


@torch.no_grad()
def p2p_eval_loss(model, mq, ws, chair_clouds, lam, batch=256):
    model.eval()
    clouds = _cloud_tensor(chair_clouds, ws.chair_ids)
    prev_idx = _prev_indices(ws)
    total = 0.0
    for s in range(0, len(ws), batch):
        sel = np.arange(s, min(s + batch, len(ws)))
        loss, _, _ = _p2p_batch(model, mq, ws, sel, clouds, prev_idx, lam)
        total += float(loss.detach()) * len(sel)
    return total / len(ws)


@torch.no_grad()
def teacher_forced_accuracy(model, mq, ws, chair_clouds):
    clouds = _cloud_tensor(chair_clouds, ws.chair_ids)
    feats = model.chair(clouds)
    prev_idx = _prev_indices(ws)
    prev = torch.where(torch.as_tensor(prev_idx < 0)[:, None], model.start_tokens(len(ws)),
                       mq.codebook.entries[torch.as_tensor(np.maximum(prev_idx, 0))])
    logits = model.step(torch.as_tensor(ws.pressure), feats[torch.as_tensor(ws.chair)], prev)
    return float((logits.argmax(-1).numpy() == ws.tokens).mean())


@torch.no_grad()
def predict_windows(model, mq, ws, chair_clouds):
    """Greedy generation per recording; decoded ``(M, T, J, 3)`` positions and token indices."""
    model.eval()
    clouds = _cloud_tensor(chair_clouds, ws.chair_ids)
    feats = model.chair(clouds)
    out_pos = np.zeros_like(ws.positions, dtype=np.float32)
    out_idx = np.zeros(len(ws), dtype=np.int64)
    for r in np.unique(ws.recording):
        sel = np.flatnonzero(ws.recording == r)
        p = ws.pressure[sel].reshape(-1, MAT_ROWS, MAT_COLS)
        idx, emb = generate(model, mq, p, feats[ws.chair[sel[0]]])
        out_idx[sel] = idx.numpy()
        out_pos[sel] = mq.decode(emb).positions.numpy()
    return out_pos, out_idx


def train_baseline(train, chair_clouds, train_config=None, val=None, seed=0, window_frames=15, callback=None):
    """MSE-only direct regression of root-relative joint positions."""
    tc = train_config or TrainConfig()
    if train is None or len(train) == 0:
        raise ValueError("empty training set")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = BaselineRegressor(window_frames)
    opt = torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(tc.max_epochs, 1))
    clouds = _cloud_tensor(chair_clouds, train.chair_ids)
    hist = P2PHistory()
    best, best_state, bad = math.inf, None, 0
    for epoch in range(tc.max_epochs):
        model.train()
        order = rng.permutation(len(train))
        total = 0.0
        for s in range(0, len(order), tc.batch_size):
            sel = order[s:s + tc.batch_size]
            feats = model.chair(clouds)[torch.as_tensor(train.chair[sel])]
            pred = model(torch.as_tensor(train.pressure[sel]), feats)
            loss = F.mse_loss(pred, torch.as_tensor(train.positions[sel], dtype=torch.float32))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(sel)
        sched.step()
        hist.train_loss.append(total / len(train))
        v = _baseline_val(model, val, chair_clouds) if val is not None else hist.train_loss[-1]
        hist.val_loss.append(v)
        hist.epochs_run = epoch + 1
        if v < best - 1e-12:
            best, bad, hist.best_epoch = v, 0, epoch
            best_state = {k: t.clone() for k, t in model.state_dict().items()}
        else:
            bad += 1
        if callback is not None and callback(epoch, hist):
            break
        if bad >= tc.patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    model._history = hist
    return model, hist


@torch.no_grad()
def baseline_predict(model, ws, chair_clouds, batch=256):
    model.eval()
    feats = model.chair(_cloud_tensor(chair_clouds, ws.chair_ids))
    out = []
    for s in range(0, len(ws), batch):
        sel = np.arange(s, min(s + batch, len(ws)))
        out.append(model(torch.as_tensor(ws.pressure[sel]), feats[torch.as_tensor(ws.chair[sel])]).numpy())
    return np.concatenate(out)


def _baseline_val(model, ws, chair_clouds):
    pred = baseline_predict(model, ws, chair_clouds)
    return float(np.mean((pred - ws.positions) ** 2))


# ---------------------------------------------------------------------------
# checkpoints

class CheckpointError(ValueError):
    pass


def save_p2p(model, path, mq=None, extra=None):
    """Versioned container; records the hash of the quantizer it was trained against."""
    kind = "baseline" if isinstance(model, BaselineRegressor) else "pressure2pose"
    config = {"window_frames": model.window_frames} if kind == "baseline" else asdict(model.config)
    doc = {
        "kind": kind,
        "version": CHECKPOINT_VERSION,
        "config": config,
        "state_dict": model.state_dict(),
        "mq_hash": state_hash(mq) if mq is not None else None,
        "history": asdict(model._history) if hasattr(model, "_history") else None,
        "extra": extra or {},
    }
    torch.save(doc, path)
    return doc


def load_p2p(path, mq=None):
    """Load a predictor or baseline; with ``mq`` given, its hash must match the recorded one."""
    try:
        doc = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") not in ("pressure2pose", "baseline"):
        raise CheckpointError(f"{path} is not a pressure-to-pose checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    if doc["kind"] == "baseline":
        model = BaselineRegressor(doc["config"]["window_frames"])
    else:
        model = PressureToPose(P2PConfig(**doc["config"]))
        if mq is not None and doc["mq_hash"] != state_hash(mq):
            raise CheckpointError("quantizer checkpoint does not match the one this model was trained against")
    model.load_state_dict(doc["state_dict"])
    model.eval()
    model._checkpoint = doc
    return model
