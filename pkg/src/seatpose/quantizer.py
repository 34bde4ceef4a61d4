"""Motion quantizer: a VQ-VAE mapping one descriptor chunk to one token.

Chunks are root-relative (root translation zeroed before the descriptors
are computed); the decoder emits joint rotations plus a per-chunk body
scale, and joint positions come from forward kinematics of the reference
skeleton scaled by that factor.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .body import (
    NUM_JOINTS, PARENTS, REFERENCE_HEIGHT, PoseSequence, make_skeleton, motion_descriptors,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
FEATURES = 18
EPS = 1e-5


# ---------------------------------------------------------------------------
# data preparation

def canonical_chunks(seq, window):
    """Root-relative descriptor chunks of one sequence as a ``(N, T, J, 18)`` array."""
    zeroed = PoseSequence(np.asarray(seq.theta, float), np.zeros_like(seq.root_translation, dtype=float),
                          seq.rate_hz, seq.subject_mass, seq.subject_height)
    chunks = motion_descriptors(zeroed, window)
    if not chunks:
        t = int(round(window * seq.rate_hz))
        return np.zeros((0, t, NUM_JOINTS, FEATURES))
    return np.stack([c.as_array() for c in chunks])


# ---------------------------------------------------------------------------
# torch kinematics

def rotvec_to_matrix_t(rv):
    """Rodrigues formula in torch; smooth through zero angle."""
    angle2 = (rv * rv).sum(-1, keepdim=True)[..., None]
    small = angle2 < 1e-12
    safe2 = torch.where(small, torch.ones_like(angle2), angle2)
    angle = torch.sqrt(safe2)
    a = torch.where(small, 1 - angle2 / 6, torch.sin(angle) / angle)
    b = torch.where(small, 0.5 - angle2 / 24, (1 - torch.cos(angle)) / safe2)
    x, y, z = rv.unbind(-1)
    zero = torch.zeros_like(x)
    k = torch.stack([
        torch.stack([zero, -z, y], -1),
        torch.stack([z, zero, -x], -1),
        torch.stack([-y, x, zero], -1),
    ], -2)
    eye = torch.eye(3, dtype=rv.dtype, device=rv.device).expand_as(k)
    return eye + a * k + b * (k @ k)


def fk_t(theta, offsets, parents=PARENTS):
    """Root-relative joint positions ``(..., J, 3)`` for rotations ``(..., J, 3)``."""
    local = rotvec_to_matrix_t(theta)
    rots, pos = [], []
    for j, p in enumerate(parents):
        if p < 0:
            rots.append(local[..., j, :, :])
            pos.append(offsets[j].expand(theta.shape[:-2] + (3,)))
        else:
            rots.append(rots[p] @ local[..., j, :, :])
            pos.append(pos[p] + (rots[p] @ offsets[j].unsqueeze(-1)).squeeze(-1))
    return torch.stack(pos, -2)


def central_difference_t(x, rate, dim=1):
    first = x.narrow(dim, 0, 1)
    last = x.narrow(dim, x.shape[dim] - 1, 1)
    padded = torch.cat([first, x, last], dim)
    n = x.shape[dim]
    return (padded.narrow(dim, 2, n) - padded.narrow(dim, 0, n)) * (rate / 2.0)


def descriptors_t(theta, positions, rate):
    """Descriptor array ``(B, T, J, 18)`` from rotations and positions ``(B, T, J, 3)``."""
    v_l = central_difference_t(positions, rate)
    v_a = central_difference_t(theta, rate)
    return torch.cat([theta, positions, v_l, v_a, central_difference_t(v_l, rate),
                      central_difference_t(v_a, rate)], -1)


# ---------------------------------------------------------------------------
# codebook

class Codebook(nn.Module):
    """EMA-updated codebook; entries never receive gradients."""

    def __init__(self, size=1028, width=512, alpha=0.99):
        super().__init__()
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.alpha = alpha
        self.register_buffer("entries", torch.zeros(size, width))
        self.register_buffer("ema_cluster_size", torch.ones(size))
        self.register_buffer("ema_embed_sum", torch.zeros(size, width))
        self.register_buffer("initialized", torch.tensor(False))

    @property
    def size(self):
        return self.entries.shape[0]

    def set_entries(self, entries, counts=None):
        entries = torch.as_tensor(entries, dtype=self.entries.dtype)
        counts = torch.ones(len(entries), dtype=entries.dtype) if counts is None else torch.as_tensor(counts, dtype=entries.dtype)
        self.entries.copy_(entries)
        self.ema_cluster_size.copy_(counts)
        self.ema_embed_sum.copy_(entries * counts[:, None])
        self.initialized.fill_(True)

    def quantize(self, latent):
        return quantize(latent, self.entries)

    @torch.no_grad()
    def ema_update(self, latent, index):
        ema_update(self, latent, index)


def quantize(latent, codebook):
    """Nearest codebook entry by Euclidean distance; ties go to the lowest index.

    A float64 expansion ``|z|^2 - 2 z.e + |e|^2`` shortlists every entry
    within rounding distance of the minimum; the shortlist is then scored
    by explicit squared differences, so the result equals an exhaustive
    scan. Returns ``(index, quantized)``.
    """
    entries = codebook.entries if isinstance(codebook, Codebook) else torch.as_tensor(codebook)
    z = torch.as_tensor(latent)
    squeeze = z.dim() == 1
    z2 = z.reshape(-1, z.shape[-1])
    if entries.shape[0] < 1:
        raise ValueError("empty codebook")
    with torch.no_grad():
        e64 = entries.detach().double()
        z64 = z2.detach().double()
        zn = (z64 * z64).sum(1, keepdim=True)
        en = (e64 * e64).sum(1)
        d = zn - 2.0 * z64 @ e64.T + en
        best = d.min(1, keepdim=True).values
        # bound on the expansion's rounding error
        slack = 1e-10 * (zn + en.max()) + 1e-300
        cand = d <= best + slack
        idx = torch.argmin(torch.where(cand, torch.zeros_like(d), torch.ones_like(d)), dim=1)
        multi = torch.nonzero(cand.sum(1) > 1).flatten()
        for r in multi.tolist():
            c = torch.nonzero(cand[r]).flatten()
            exact = ((z64[r] - e64[c]) ** 2).sum(1)
            idx[r] = c[torch.argmin(exact)]  # first minimum on ties
    q = entries[idx].to(z.dtype)
    idx = idx.reshape(z.shape[:-1])
    q = q.reshape(z.shape)
    if squeeze:
        return int(idx), q
    return idx, q


def straight_through(latent, quantized):
    """Forward value of ``quantized``; backward passes gradients to ``latent`` unchanged."""
    return latent + (quantized - latent).detach()


@torch.no_grad()
def ema_update(codebook, latent, index):
    """Decay accumulators by alpha, add batch statistics, recompute entries.

    N_i <- a N_i + (1 - a) n_i ;  m_i <- a m_i + (1 - a) sum_{z -> i} z ;
    e_i = m_i / max(N_i, eps). An empty batch leaves the codebook untouched.
    """
    latent = torch.as_tensor(latent, dtype=codebook.entries.dtype).reshape(-1, codebook.entries.shape[1])
    index = torch.as_tensor(index, dtype=torch.long).reshape(-1)
    if len(index) == 0:
        return codebook
    a = codebook.alpha
    onehot = F.one_hot(index, codebook.size).to(latent.dtype)
    counts = onehot.sum(0)
    sums = onehot.T @ latent
    codebook.ema_cluster_size.mul_(a).add_((1 - a) * counts)
    codebook.ema_embed_sum.mul_(a).add_((1 - a) * sums)
    codebook.entries.copy_(codebook.ema_embed_sum / codebook.ema_cluster_size.clamp_min(EPS)[:, None])
    return codebook


def quantization_dropout(embeddings, p=0.2, generator=None, training=True):
    """Zero whole token embeddings at random.

    ``p`` is the drop probability: each token is kept with probability
    ``1 - p``. Identity outside training or when ``p == 0``.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    if not training or p == 0.0:
        return embeddings
    keep = torch.rand(embeddings.shape[:-1], generator=generator, dtype=torch.float64) >= p
    return embeddings * keep.unsqueeze(-1).to(embeddings.dtype)


def kmeans_pp(points, k, rng):
    """k-means++ seeding; repeats points with small jitter when k exceeds the point count."""
    points = np.asarray(points, float)
    n = len(points)
    first = rng.integers(n)
    centers = [points[first]]
    d2 = ((points - centers[0]) ** 2).sum(1)
    for _ in range(1, min(k, n)):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(points[i])
        d2 = np.minimum(d2, ((points - points[i]) ** 2).sum(1))
    centers = np.array(centers)
    if k > n:
        extra = centers[rng.integers(len(centers), size=k - n)]
        extra = extra + rng.normal(scale=1e-3 * (points.std() + 1e-12), size=extra.shape)
        centers = np.concatenate([centers, extra])
    return centers


# ---------------------------------------------------------------------------
# schedule and loss

@dataclass
class AnnealSchedule:
    """w_r = 1 throughout; w_q ramps linearly 0 -> 1 over the first ``ramp`` fraction of epochs."""

    total_epochs: int
    ramp: float = 0.2

    def w_r(self, epoch):
        return 1.0

    def w_q(self, epoch):
        span = max(self.ramp * self.total_epochs, 1e-12)
        return float(min(1.0, max(0.0, epoch / span)))


def mq_loss(x, x_hat, latent, quantized, schedule, epoch, beta=0.25):
    """w_r L_r + w_q L_q.

    L_r: mean squared error over all descriptor entries. L_q: codebook term
    ||sg(z) - q||^2 plus beta times commitment ||z - sg(q)||^2 (means over
    entries). The codebook itself is a buffer, so only the commitment side
    produces gradients; entries move by EMA.
    """
    l_r = F.mse_loss(x_hat, x)
    l_q = F.mse_loss(quantized, latent.detach()) + beta * F.mse_loss(latent, quantized.detach())
    return schedule.w_r(epoch) * l_r + schedule.w_q(epoch) * l_q, l_r, l_q


# ---------------------------------------------------------------------------
# network

class _ResConv(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.a = nn.Conv1d(ch, ch, 3, padding=1)
        self.b = nn.Conv1d(ch, ch, 3, padding=1)

    def forward(self, x):
        return x + self.b(F.gelu(self.a(F.gelu(x))))


@dataclass
class TokenSequence:
    indices: torch.Tensor  # (K,)
    embeddings: torch.Tensor  # (K, 512)


@dataclass
class DecodedChunks:
    theta: torch.Tensor  # (B, T, J, 3)
    positions: torch.Tensor  # (B, T, J, 3), root-relative
    scale: torch.Tensor  # (B,)
    features: torch.Tensor  # (B, T, J, 18), raw units


@dataclass
class MQConfig:
    window_frames: int = 15
    codebook_size: int = 1028
    width: int = 512
    hidden: int = 256
    alpha: float = 0.99
    beta: float = 0.25
    dropout_p: float = 0.2
    rate_hz: float = 15.0


class MotionQuantizer(nn.Module):
    """Conv encoder -> one 512-d latent per chunk -> EMA codebook -> conv decoder."""

    def __init__(self, config=None):
        super().__init__()
        cfg = config or MQConfig()
        self.config = cfg
        t, h, d = cfg.window_frames, cfg.hidden, NUM_JOINTS * FEATURES
        self.enc_in = nn.Linear(d, h)
        self.enc_blocks = nn.Sequential(_ResConv(h), _ResConv(h))
        self.enc_out = nn.Linear(t * h, cfg.width)
        self.dec_in = nn.Linear(cfg.width, t * h)
        self.dec_blocks = nn.Sequential(_ResConv(h), _ResConv(h))
        self.dec_theta = nn.Linear(h, NUM_JOINTS * 3)
        self.dec_scale = nn.Linear(cfg.width, 1)
        self.codebook = Codebook(cfg.codebook_size, cfg.width, cfg.alpha)
        self.register_buffer("feat_mean", torch.zeros(d))
        self.register_buffer("feat_std", torch.ones(d))
        ref = make_skeleton(REFERENCE_HEIGHT)
        self.register_buffer("offsets", torch.tensor(ref.rest_offset, dtype=torch.float32))

    # -- normalisation
    def set_feature_stats(self, chunks):
        """Per-channel mean and one pooled scale per descriptor block.

        A single scale per block keeps near-static channels (the pelvis
        position, say) from being blown up by a tiny per-channel spread.
        The rotation head starts at the mean training pose.
        """
        arr = np.asarray(chunks, np.float64)
        flat = arr.reshape(-1, NUM_JOINTS, FEATURES)
        mean = flat.mean(0)
        std = np.empty(FEATURES)
        for b in range(0, FEATURES, 3):
            std[b:b + 3] = max(float(np.sqrt(((flat[..., b:b + 3] - mean[:, b:b + 3]) ** 2).mean())), 1e-6)
        self.feat_mean.copy_(torch.as_tensor(mean.reshape(-1)))
        self.feat_std.copy_(torch.as_tensor(np.tile(std, NUM_JOINTS)))
        with torch.no_grad():
            self.dec_theta.bias.copy_(torch.as_tensor(mean[:, 0:3].reshape(-1)))

    def normalize(self, x):
        b, t = x.shape[:2]
        return ((x.reshape(b, t, -1) - self.feat_mean) / self.feat_std).reshape(x.shape)

    # -- encoder / decoder
    def _check(self, x):
        t = self.config.window_frames
        if x.dim() != 4 or tuple(x.shape[1:]) != (t, NUM_JOINTS, FEATURES):
            raise ValueError(f"expected chunks of shape (B, {t}, {NUM_JOINTS}, {FEATURES}), got {tuple(x.shape)}")

    def encode(self, x):
        """Latents ``(B, 512)`` for descriptor chunks ``(B, T, J, 18)`` in raw units."""
        x = torch.as_tensor(x, dtype=self.feat_mean.dtype)
        self._check(x)
        b, t = x.shape[:2]
        hdn = self.enc_in(self.normalize(x).reshape(b, t, -1))
        hdn = self.enc_blocks(hdn.transpose(1, 2))
        return self.enc_out(F.gelu(hdn).reshape(b, -1))

    def decode(self, emb):
        """Decode token embeddings ``(B, 512)`` to pose chunks."""
        emb = torch.as_tensor(emb, dtype=self.feat_mean.dtype)
        if emb.dim() != 2 or emb.shape[1] != self.config.width:
            raise ValueError(f"expected embeddings of width {self.config.width}")
        b, t = emb.shape[0], self.config.window_frames
        hdn = self.dec_in(emb).reshape(b, -1, t)
        hdn = F.gelu(self.dec_blocks(hdn)).transpose(1, 2)
        theta = self.dec_theta(hdn).reshape(b, t, NUM_JOINTS, 3)
        scale = torch.exp(0.1 * torch.tanh(self.dec_scale(emb))).squeeze(-1)
        pos = fk_t(theta, self.offsets) * scale[:, None, None, None]
        feats = descriptors_t(theta, pos, self.config.rate_hz)
        return DecodedChunks(theta, pos, scale, feats)

    def tokenize(self, x):
        z = self.encode(x)
        idx, q = quantize(z, self.codebook)
        return TokenSequence(idx, q)

    def forward(self, x, training=False, generator=None):
        x = torch.as_tensor(x, dtype=self.feat_mean.dtype)
        z = self.encode(x)
        idx, q = quantize(z, self.codebook)
        q_st = straight_through(z, q)
        q_in = quantization_dropout(q_st, self.config.dropout_p, generator, training)
        out = self.decode(q_in)
        return z, q, idx, out


def encode(model, chunk):
    """Latent of a single chunk (``FeatureChunk`` or ``(T, J, 18)`` array)."""
    arr = chunk.as_array() if hasattr(chunk, "as_array") else np.asarray(chunk)
    return model.encode(torch.as_tensor(arr[None], dtype=torch.float32))[0]


def decode(model, tokens):
    """Concatenate decoded chunks for a token sequence: ``(K*T, J, 3)`` theta and positions."""
    emb = tokens.embeddings if isinstance(tokens, TokenSequence) else tokens
    out = model.decode(emb)
    k, t = out.theta.shape[:2]
    return out.theta.reshape(k * t, NUM_JOINTS, 3), out.positions.reshape(k * t, NUM_JOINTS, 3)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 1e-5
    max_epochs: int = 200
    patience: int = 15
    lr_schedule: str = "cosine"
    restart_dead: bool = True


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


def _normalized_target(model, x):
    return model.normalize(x)


def _batch_loss(model, x, schedule, epoch, training, generator=None):
    z, q, idx, out = model(x, training=training, generator=generator)
    loss, l_r, l_q = mq_loss(_normalized_target(model, x), model.normalize(out.features), z, q, schedule, epoch,
                             model.config.beta)
    return loss, z, idx


def init_codebook(model, chunks, rng, batch=256):
    with torch.no_grad():
        lat = torch.cat([model.encode(torch.as_tensor(chunks[s:s + batch], dtype=torch.float32))
                         for s in range(0, len(chunks), batch)])
    centers = kmeans_pp(lat.numpy(), model.codebook.size, rng)
    model.codebook.set_entries(torch.as_tensor(centers, dtype=torch.float32))


def train_mq(train_chunks, val_chunks=None, mq_config=None, train_config=None, seed=0, callback=None,
             state=None):
    """Fit a :class:`MotionQuantizer` on root-relative descriptor chunks.

    Returns ``(model, history)``. ``state`` resumes from a previous
    :func:`resume_state` snapshot (model, optimizer, scheduler, RNG).
    ``callback(epoch, history)`` may return True to stop after that epoch.
    """
    tc = train_config or TrainConfig()
    mc = mq_config or MQConfig(window_frames=train_chunks.shape[1])
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = MotionQuantizer(mc)
    model.set_feature_stats(train_chunks)
    opt = torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(tc.max_epochs, 1))
    anneal = AnnealSchedule(tc.max_epochs)
    gen = torch.Generator().manual_seed(seed)
    hist = TrainHistory()
    best, best_state, bad = math.inf, None, 0
    start = 0
    if state is not None:
        model.load_state_dict(state["model"])
        opt.load_state_dict(state["optimizer"])
        sched.load_state_dict(state["scheduler"])
        gen.set_state(state["generator"])
        rng.bit_generator.state = state["rng"]
        hist = TrainHistory(**state["history"])
        start = hist.epochs_run
        best, bad = state["best"], state["bad"]
        best_state = state.get("best_model")
    else:
        init_codebook(model, train_chunks, rng)
    x_all = torch.as_tensor(train_chunks, dtype=torch.float32)
    for epoch in range(start, tc.max_epochs):
        model.train()
        order = rng.permutation(len(x_all))
        total, count = 0.0, 0
        usage = torch.zeros(model.codebook.size)
        for s in range(0, len(order), tc.batch_size):
            xb = x_all[order[s:s + tc.batch_size]]
            loss, z, idx = _batch_loss(model, xb, anneal, epoch, True, gen)
            opt.zero_grad()
            loss.backward()
            opt.step()
            model.codebook.ema_update(z.detach(), idx)
            usage += torch.bincount(idx, minlength=model.codebook.size).float()
            total += float(loss.detach()) * len(xb)
            count += len(xb)
        if tc.restart_dead:
            _restart_dead(model, usage, x_all, rng)
        sched.step()
        hist.train_loss.append(total / max(count, 1))
        val = evaluate_loss(model, val_chunks, anneal, epoch) if val_chunks is not None and len(val_chunks) else hist.train_loss[-1]
        hist.val_loss.append(val)
        hist.epochs_run = epoch + 1
        if val < best - 1e-9:
            best, bad, hist.best_epoch = val, 0, epoch
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
        else:
            bad += 1
        model._resume = {
            "optimizer": opt.state_dict(), "scheduler": sched.state_dict(), "generator": gen.get_state(),
            "rng": rng.bit_generator.state, "best": best, "bad": bad, "best_model": best_state,
        }
        if bad >= tc.patience:
            log.info("early stop at epoch %d", epoch)
            break
        if callback is not None and callback(epoch, hist):
            break
    model._history = hist
    if best_state is not None:
        model._final_state = {k: v.clone() for k, v in model.state_dict().items()}
        model.load_state_dict(best_state)
    model.eval()
    return model, hist


@torch.no_grad()
def _restart_dead(model, usage, x_all, rng, sample=512):
    """Re-seed entries unused during the epoch from current encoder latents."""
    dead = torch.nonzero(usage == 0).flatten()
    if len(dead) == 0:
        return
    pick = rng.choice(len(x_all), size=min(sample, len(x_all)), replace=False)
    lat = model.encode(x_all[pick])
    src = lat[torch.as_tensor(rng.integers(len(lat), size=len(dead)))]
    jitter = torch.as_tensor(rng.normal(scale=1e-3, size=src.shape), dtype=src.dtype) * (lat.std() + 1e-6)
    cb = model.codebook
    cb.entries[dead] = src + jitter
    cb.ema_cluster_size[dead] = 1.0
    cb.ema_embed_sum[dead] = cb.entries[dead]


@torch.no_grad()
def evaluate_loss(model, chunks, schedule, epoch, batch=256):
    model.eval()
    x = torch.as_tensor(chunks, dtype=torch.float32)
    total = 0.0
    for s in range(0, len(x), batch):
        loss, _, _ = _batch_loss(model, x[s:s + batch], schedule, epoch, False)
        total += float(loss) * len(x[s:s + batch])
    return total / len(x)


@torch.no_grad()
def reconstruct(model, chunks, batch=256):
    """Round trip through the codebook: ``(indices, theta, positions)`` as numpy arrays."""
    model.eval()
    x = torch.as_tensor(chunks, dtype=torch.float32)
    idx, th, pos = [], [], []
    for s in range(0, len(x), batch):
        _, q, i, out = model(x[s:s + batch])
        idx.append(i)
        th.append(out.theta)
        pos.append(out.positions)
    return torch.cat(idx).numpy(), torch.cat(th).numpy(), torch.cat(pos).numpy()


@torch.no_grad()
def decode_indices(model, indices):
    """Decode token indices ``(K,)`` to ``(theta, positions)`` of shape ``(K, T, J, 3)``."""
    emb = model.codebook.entries[torch.as_tensor(indices, dtype=torch.long)]
    out = model.decode(emb)
    return out.theta.numpy(), out.positions.numpy()


def codebook_usage(indices, size):
    return len(np.unique(np.asarray(indices))) / size


# ---------------------------------------------------------------------------
# checkpoints

def state_hash(model):
    h = hashlib.sha256()
    for k, v in sorted(model.state_dict().items()):
        h.update(k.encode())
        h.update(v.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_mq(model, path, extra=None):
    """Versioned checkpoint: config, weights (incl. codebook and EMA state), schedule."""
    doc = {
        "kind": "motion_quantizer",
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "state_dict": model.state_dict(),
        "hash": state_hash(model),
        "extra": extra or {},
    }
    resume = getattr(model, "_resume", None)
    if resume is not None:
        doc["resume"] = resume
        doc["final_state"] = getattr(model, "_final_state", None)
        doc["history"] = asdict(model._history)
    torch.save(doc, path)
    return doc["hash"]


class CheckpointError(ValueError):
    pass


def load_mq(path):
    try:
        doc = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # corrupt or unreadable file
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("kind") != "motion_quantizer":
        raise CheckpointError(f"{path} is not a motion quantizer checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    model = MotionQuantizer(MQConfig(**doc["config"]))
    model.load_state_dict(doc["state_dict"])
    model.eval()
    model._checkpoint = doc
    return model


def resume_state(doc):
    """Training snapshot taken at the end of the last epoch, for :func:`train_mq`."""
    r = doc["resume"]
    return {"model": doc["final_state"] or doc["state_dict"], "optimizer": r["optimizer"], "scheduler": r["scheduler"],
            "generator": r["generator"], "rng": r["rng"], "history": doc["history"], "best": r["best"],
            "bad": r["bad"], "best_model": r["best_model"]}
