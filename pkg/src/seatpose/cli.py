"""Command-line entry point: simulate, train, eval, infer, sync, report.

Every command writes a ``manifest.json`` next to its outputs with the
config hash, seed, input and output hashes and the tool version. Failures
print one ``error: <Type>: message`` line and exit with status 2.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
import torch
import yaml

from . import __version__
from . import config as C
from .body import NUM_JOINTS, PoseSequence, make_skeleton, surface_points
from .dataio import (
    MAGIC_POSE, MAGIC_PRESSURE, load_corpus, make_splits, read_array, read_chair_cloud, read_recording,
    tap_synchronize, write_array, write_chair_cloud, write_recording,
)
from .downstream import posture_report
from .metrics import motion_fid, mpjpe, mpve, pa_mpjpe, r_precision
from .motions import SUBJECTS, motion_library
from .p2p import (
    P2PConfig, baseline_predict, build_windows, generate, load_p2p, normalize_cloud, predict_windows, save_p2p,
    train_baseline, train_p2p,
)
from .quantizer import (
    MQConfig, TrainConfig, canonical_chunks, descriptors_t, load_mq, reconstruct, resume_state, save_mq, state_hash,
    train_mq,
)
from .report import format_report, render, summarize
from .sim import STANDARD_CHAIRS, ChairModel, ChairSpec, generate_corpus, make_chair

log = logging.getLogger("seatpose")


class PipelineError(RuntimeError):
    """A prerequisite (corpus, checkpoint, fold) is missing."""


class MissingCheckpointError(PipelineError):
    def __init__(self, stage, path):
        super().__init__(f"stage {stage!r} checkpoint not found at {path}; run `seatpose train --stage {stage}` first")
        self.stage = stage


# ---------------------------------------------------------------------------
# manifests

def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def tree_hashes(root, pattern="*"):
    root = Path(root)
    return {str(p.relative_to(root)): file_hash(p) for p in sorted(root.rglob(pattern)) if p.is_file()
            and p.name != "manifest.json"}


def write_manifest(out_dir, command, cfg, inputs=None, outputs=None, extra=None):
    doc = {
        "command": command,
        "tool_version": __version__,
        "config_hash": C.config_hash(cfg),
        "seed": cfg["seed"],
        "config": cfg,
        "inputs": inputs or {},
        "outputs": outputs or {},
    }
    doc.update(extra or {})
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return doc


def _seed_all(seed):
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


# ---------------------------------------------------------------------------
# simulate

def build_chairs(cfg, base_dir=Path(".")):
    """Chair entries are standard names or mappings of ``ChairSpec`` fields with an optional ``cloud`` file."""
    out = []
    for i, entry in enumerate(cfg["simulation"]["chairs"]):
        if isinstance(entry, str):
            if entry not in STANDARD_CHAIRS:
                raise C.ConfigError(f"unknown chair {entry!r}; standard chairs are {sorted(STANDARD_CHAIRS)}")
            spec, cloud = STANDARD_CHAIRS[entry], None
        else:
            entry = dict(entry)
            cloud = entry.pop("cloud", None)
            try:
                spec = ChairSpec(**entry)
            except TypeError as exc:
                raise C.ConfigError(f"bad chair entry {entry}: {exc}") from exc
        chair = make_chair(spec, seed=cfg["seed"] + i)
        if cloud is not None:
            path = Path(cloud) if Path(cloud).is_absolute() else base_dir / cloud
            if not path.exists():
                raise FileNotFoundError(f"chair file not found: {path}")
            chair = ChairModel(chair.chair_id, read_chair_cloud(path), chair.drape_profile, spec)
        out.append(chair)
    return out


def cmd_simulate(cfg, out=None, base_dir=Path(".")):
    sim_cfg = cfg["simulation"]
    out = Path(out or cfg["paths"]["corpus"])
    chairs = build_chairs(cfg, base_dir)
    by_id = {s.subject_id: s for s in SUBJECTS}
    missing = [s for s in sim_cfg["subjects"] if s not in by_id]
    if missing:
        raise C.ConfigError(f"unknown subjects {missing}")
    subjects = [by_id[s] for s in sim_cfg["subjects"]]
    motions = motion_library(subjects, sim_cfg["activities"], sim_cfg["clip_seconds"], cfg["seed"], sim_cfg["takes"])
    recs = generate_corpus(motions, chairs, SUBJECTS, cfg["seed"], workers=sim_cfg["workers"],
                           noise=sim_cfg["noise"])
    for r in recs:
        write_recording(r, out / "recordings" / r.recording_id)
    (out / "chairs").mkdir(parents=True, exist_ok=True)
    for ch in chairs:
        write_chair_cloud(ch.point_cloud, out / "chairs" / f"{ch.chair_id}.bin")
    frames = {r.recording_id: len(r) for r in recs}
    doc = write_manifest(out, "simulate", cfg, outputs=tree_hashes(out), extra={
        "recordings": len(recs), "frames": sum(frames.values()), "frames_per_recording": frames,
        "seconds": sum(frames.values()) / 15.0,
    })
    return doc


# ---------------------------------------------------------------------------
# shared helpers

def load_chair_clouds(corpus):
    d = Path(corpus) / "chairs"
    if not d.exists():
        raise PipelineError(f"no chair clouds under {d}; run `seatpose simulate` first")
    return {p.stem: read_chair_cloud(p) for p in sorted(d.glob("*.bin"))}


def load_recordings(corpus):
    if not (Path(corpus) / "recordings").exists():
        raise PipelineError(f"no corpus at {corpus}; run `seatpose simulate` first")
    return load_corpus(Path(corpus) / "recordings")


def fold_plan(cfg, recs):
    return make_splits(recs, cfg["protocol"], evaluate_synthetic=cfg["evaluate_synthetic"])


def fold_dir(cfg, fold):
    return Path(cfg["paths"]["checkpoints"]) / cfg["protocol"] / f"fold{fold}"


def split_validation(recs, fraction, seed):
    """Hold out whole recordings for early stopping."""
    if fraction <= 0 or len(recs) < 2:
        return recs, []
    rng = np.random.default_rng([seed, 7])
    order = rng.permutation(len(recs))
    k = max(1, int(math.ceil(fraction * len(recs))))
    val = set(order[:k].tolist())
    return [r for i, r in enumerate(recs) if i not in val], [r for i, r in enumerate(recs) if i in val]


def train_config(cfg):
    t = cfg["train"]
    return TrainConfig(batch_size=t["batch"], lr=t["lr"], weight_decay=t["weight_decay"],
                       max_epochs=t["max_epochs"], patience=t["patience"], lr_schedule=t["lr_schedule"])


def mq_config(cfg):
    m = cfg["mq"]
    return MQConfig(window_frames=15 * cfg["window_seconds"], codebook_size=m["codebook_size"], width=m["token_width"],
                    hidden=m["hidden"], alpha=m["alpha"], beta=m["beta"], dropout_p=m["dropout_p"])


def _chunks(recs, cfg):
    arrs = [canonical_chunks(r.pose, cfg["window_seconds"]) for r in recs]
    arrs = [a for a in arrs if len(a)]
    if not arrs:
        raise PipelineError("no recording is long enough for one window")
    return np.concatenate(arrs)


def _selected_folds(plan, folds):
    if folds is None:
        return list(range(len(plan.folds)))
    bad = [f for f in folds if f < 0 or f >= len(plan.folds)]
    if bad:
        raise PipelineError(f"folds {bad} out of range; plan has {len(plan.folds)}")
    return list(folds)


# ---------------------------------------------------------------------------
# train

STAGES = ("mq", "p2p", "baseline")


def cmd_train(cfg, stage, folds=None, name=None, resume=False):
    if stage not in STAGES:
        raise PipelineError(f"unknown stage {stage!r}; choose from {STAGES}")
    corpus = cfg["paths"]["corpus"]
    recs = load_recordings(corpus)
    by_id = {r.recording_id: r for r in recs}
    plan = fold_plan(cfg, recs)
    tc = train_config(cfg)
    results = {}
    for f in _selected_folds(plan, folds):
        fold = plan.folds[f]
        d = fold_dir(cfg, f)
        d.mkdir(parents=True, exist_ok=True)
        train_recs, val_recs = split_validation([by_id[i] for i in fold.train], cfg["train"]["validation_fraction"],
                                                cfg["seed"])
        _seed_all(cfg["seed"])
        inputs = {"corpus_manifest": file_hash(Path(corpus) / "manifest.json")} \
            if (Path(corpus) / "manifest.json").exists() else {}
        if stage == "mq":
            path = d / "mq.pt"
            state = None
            if resume:
                if not path.exists():
                    raise MissingCheckpointError("mq", path)
                state = resume_state(torch.load(path, map_location="cpu", weights_only=False))
            model, hist = train_mq(_chunks(train_recs, cfg), _chunks(val_recs, cfg) if val_recs else None,
                                   mq_config(cfg), tc, seed=cfg["seed"], state=state)
            save_mq(model, path, extra={"fold": f, "held_out": list(fold.held_out)})
            curves = {"train": hist.train_loss, "val": hist.val_loss}
        else:
            mq_path = d / "mq.pt"
            clouds = load_chair_clouds(corpus)
            if stage == "p2p":
                if not mq_path.exists():
                    raise MissingCheckpointError("mq", mq_path)
                mq = load_mq(mq_path)
                inputs["mq_checkpoint"] = file_hash(mq_path)
                tr = build_windows(train_recs, mq.config.window_frames, mq)
                va = build_windows(val_recs, mq.config.window_frames, mq) if val_recs else None
                pc = P2PConfig(window_frames=mq.config.window_frames, codebook_size=mq.codebook.size,
                               token_width=mq.config.width, lam=cfg["p2p"]["lambda"],
                               scheduled_sampling=cfg["p2p"]["scheduled_sampling"])
                model, hist = train_p2p(tr, mq, clouds, pc, tc, val=va, seed=cfg["seed"])
                path = d / f"{name or 'p2p'}.pt"
                save_p2p(model, path, mq, extra={"fold": f})
            else:
                t = 15 * cfg["window_seconds"]
                tr = build_windows(train_recs, t)
                va = build_windows(val_recs, t) if val_recs else None
                model, hist = train_baseline(tr, clouds, tc, val=va, seed=cfg["seed"], window_frames=t)
                path = d / f"{name or 'baseline'}.pt"
                save_p2p(model, path, extra={"fold": f})
            curves = {"train": hist.train_loss, "val": hist.val_loss}
        tag = path.stem
        (d / f"{tag}_curve.json").write_text(json.dumps(curves))
        write_manifest(d / f"{tag}_manifest", f"train --stage {stage}", cfg, inputs=inputs,
                       outputs={path.name: file_hash(path)},
                       extra={"fold": f, "held_out": list(fold.held_out), "epochs_run": len(hist.train_loss),
                              "best_epoch": hist.best_epoch})
        results[f] = {"checkpoint": str(path), "epochs": len(hist.train_loss), "best_val": min(curves["val"])}
    return results


# ---------------------------------------------------------------------------
# eval

def _pose_metrics(pred_pos, gt_pos, pred_theta=None, gt_theta=None, skeleton=None):
    m = {"mpjpe_mm": mpjpe(pred_pos, gt_pos),
         "pa_mpjpe_mm": pa_mpjpe(pred_pos.reshape(-1, NUM_JOINTS, 3), gt_pos.reshape(-1, NUM_JOINTS, 3))}
    if pred_theta is not None:
        n = len(pred_theta.reshape(-1, NUM_JOINTS, 3))
        zero = np.zeros((n, 3))
        pv = surface_points(PoseSequence(pred_theta.reshape(-1, NUM_JOINTS, 3).astype(float), zero), skeleton)[0]
        gv = surface_points(PoseSequence(gt_theta.reshape(-1, NUM_JOINTS, 3).astype(float), zero), skeleton)[0]
        m["mpve_mm"] = mpve(pv, gv)
    return m


def _fid_pair(pred_pos, pred_theta, gt_pos, gt_theta, recording):
    """Sequence-level FID: windows are stitched back into per-recording streams first."""
    seq = lambda a, r: a[recording == r].reshape(-1, NUM_JOINTS, 3)
    rs = np.unique(recording)
    return motion_fid([(seq(pred_pos, r), seq(pred_theta, r)) for r in rs],
                      [(seq(gt_pos, r), seq(gt_theta, r)) for r in rs])


@torch.no_grad()
def _decoded_latents(mq, theta, positions):
    """Encoder latents of pose windows, the embedding space for R-Precision."""
    feats = descriptors_t(torch.as_tensor(theta, dtype=torch.float32), torch.as_tensor(positions, dtype=torch.float32),
                          mq.config.rate_hz)
    return mq.encode(feats).numpy()


def cmd_eval(cfg, folds=None, out=None):
    corpus = cfg["paths"]["corpus"]
    recs = load_recordings(corpus)
    by_id = {r.recording_id: r for r in recs}
    plan = fold_plan(cfg, recs)
    clouds = load_chair_clouds(corpus)
    skel = make_skeleton()
    mcfg = cfg["metrics"]
    rows, curves, notes = [], {}, []
    example = None
    posture = None
    selected = _selected_folds(plan, folds)
    if not selected:
        raise PipelineError("split plan has no folds")
    for f in selected:
        fold = plan.folds[f]
        if not fold.test:
            raise PipelineError(f"fold {f} has no test recordings")
        d = fold_dir(cfg, f)
        mq_path = d / "mq.pt"
        if not mq_path.exists():
            raise MissingCheckpointError("mq", mq_path)
        mq = load_mq(mq_path)
        test = build_windows([by_id[i] for i in fold.test], mq.config.window_frames, mq)
        gt_pos, gt_th = test.positions, test.theta
        _, rth, rpos = reconstruct(mq, test.chunks)
        with torch.no_grad():
            gt_lat = mq.encode(test.chunks).numpy()
        row = {"fold": f, "held_out": "/".join(fold.held_out), "variant": "mq_reconstruction"}
        row.update(_pose_metrics(rpos, gt_pos, rth, gt_th, skel))
        row.update(_fid_pair(rpos, rth, gt_pos, gt_th, test.recording))
        row["r_precision"] = r_precision(_decoded_latents(mq, rth, rpos), gt_lat, k=mcfg["r_precision_k"],
                                         pool=mcfg["r_precision_pool"], seed=cfg["seed"])
        rows.append(row)
        predicted = {"mq_reconstruction": rpos[0, 7]}
        p2p_paths = sorted(p for p in d.glob("*.pt") if p.name not in ("mq.pt",))
        if not p2p_paths:
            raise MissingCheckpointError("p2p", d / "p2p.pt")
        for path in p2p_paths:
            model = load_p2p(path, None)
            variant = path.stem
            if model._checkpoint["kind"] == "baseline":
                pos = baseline_predict(model, test, clouds)
                row = {"fold": f, "held_out": "/".join(fold.held_out), "variant": variant}
                row.update(_pose_metrics(pos, gt_pos))
            else:
                if model._checkpoint["mq_hash"] != state_hash(mq):
                    raise PipelineError(f"{path} was trained against a different quantizer")
                pos, idx = predict_windows(model, mq, test, clouds)
                emb = mq.codebook.entries[torch.as_tensor(idx)]
                with torch.no_grad():
                    th = mq.decode(emb).theta.numpy()
                row = {"fold": f, "held_out": "/".join(fold.held_out), "variant": variant}
                row.update(_pose_metrics(pos, gt_pos, th, gt_th, skel))
                row.update(_fid_pair(pos, th, gt_pos, gt_th, test.recording))
                row["r_precision"] = r_precision(_decoded_latents(mq, th, pos), gt_lat, k=mcfg["r_precision_k"],
                                                 pool=mcfg["r_precision_pool"], seed=cfg["seed"])
                row["token_accuracy"] = float(np.mean(idx == test.tokens))
                if posture is None:
                    first = test.recording == test.recording[0]
                    seq = PoseSequence(th[first].reshape(-1, NUM_JOINTS, 3).astype(float),
                                       np.zeros((int(first.sum()) * th.shape[1], 3)))
                    posture = posture_report(seq, skel, cfg["posture"]["slouch_deg"])
            rows.append(row)
            predicted[variant] = pos[0, 7]
            cpath = d / f"{variant}_curve.json"
            if cpath.exists() and f == selected[0]:
                curves[variant] = json.loads(cpath.read_text())
        if example is None:
            example = {"pressure": test.pressure[0, 7].tolist(), "ground_truth": gt_pos[0, 7].tolist(),
                       "predicted": {k: np.asarray(v).tolist() for k, v in predicted.items()},
                       "recording": test.recording_ids[test.recording[0]]}
    notes.append(f"R-Precision: pool {mcfg['r_precision_pool']}, top-{mcfg['r_precision_k']}, "
                 "Euclidean distance between quantizer encoder latents")
    notes.append("MPVE is reported only for variants that output joint rotations")
    doc = {"protocol": cfg["protocol"], "rows": rows, "summary": summarize(rows), "curves": curves,
           "example": example, "posture": posture, "notes": notes}
    out = Path(out or cfg["paths"]["reports"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True))
    figures = render(doc, out)
    write_manifest(out, "eval", cfg, inputs={str(p.relative_to(Path(cfg["paths"]["checkpoints"]))): file_hash(p)
                                             for f in selected for p in sorted(fold_dir(cfg, f).glob("*.pt"))},
                   outputs={"report.json": file_hash(out / "report.json")},
                   extra={"figures": [p.name for p in figures]})
    return doc


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# infer

def cmd_infer(cfg, recording, fold=0, out=None, model_name="p2p", chair_cloud=None):
    t0 = time.perf_counter()
    d = fold_dir(cfg, fold)
    mq_path, p_path = d / "mq.pt", d / f"{model_name}.pt"
    if not mq_path.exists():
        raise MissingCheckpointError("mq", mq_path)
    if not p_path.exists():
        raise MissingCheckpointError("p2p", p_path)
    mq = load_mq(mq_path)
    model = load_p2p(p_path, mq)
    rec = read_recording(recording)
    t = mq.config.window_frames
    if len(rec) < t:
        raise PipelineError(f"recording has {len(rec)} frames, shorter than one window of {t}")
    if chair_cloud is None:
        chair_cloud = Path(cfg["paths"]["corpus"]) / "chairs" / f"{rec.chair_id}.bin"
    cloud = read_chair_cloud(chair_cloud)
    startup = time.perf_counter() - t0
    t1 = time.perf_counter()
    with torch.no_grad():
        feat = model.encode_chair(normalize_cloud(cloud))
        idx, emb = generate(model, mq, rec.pressure.frames, feat)
        dec = mq.decode(emb)
    run = time.perf_counter() - t1
    k = len(idx)
    theta = dec.theta.numpy().reshape(k * t, NUM_JOINTS, 3)
    out = Path(out or Path(cfg["paths"]["reports"]) / "infer" / rec.recording_id)
    out.mkdir(parents=True, exist_ok=True)
    packed = np.concatenate([theta.reshape(k * t, -1), np.zeros((k * t, 3))], 1)
    write_array(out / "pose.bin", MAGIC_POSE, packed)
    np.savetxt(out / "tokens.txt", idx.numpy(), fmt="%d")
    write_manifest(out, "infer", cfg, inputs={"recording": tree_hashes(recording), "mq": file_hash(mq_path),
                                             "model": file_hash(p_path), "chair_cloud": file_hash(chair_cloud)},
                   outputs={"pose.bin": file_hash(out / "pose.bin"), "tokens.txt": file_hash(out / "tokens.txt")},
                   extra={"windows": k, "frames": k * t, "latency": {
                       "startup_s": startup, "inference_s": run, "frames_per_s": k * t / max(run, 1e-9),
                       "per_window_ms": 1000 * run / k}})
    return {"frames": k * t, "tokens": idx.numpy().tolist(), "startup_s": startup, "inference_s": run}


# ---------------------------------------------------------------------------
# sync

def cmd_sync(cfg, pressure, pose, pressure_rate, pose_rate, chair, subject, activity, mass, height, out):
    frames = read_array(pressure, MAGIC_PRESSURE)
    packed = read_array(pose, MAGIC_POSE)
    if packed.ndim != 2 or packed.shape[1] != NUM_JOINTS * 3 + 3:
        raise PipelineError(f"pose stream must have {NUM_JOINTS * 3 + 3} channels, got {packed.shape}")
    seq = PoseSequence(packed[:, :NUM_JOINTS * 3].reshape(-1, NUM_JOINTS, 3).astype(float),
                       packed[:, NUM_JOINTS * 3:].astype(float), pose_rate, mass, height)
    offset, rec = tap_synchronize(frames, pressure_rate, seq, chair_id=chair, subject_id=subject,
                                  activity_label=activity)
    out = Path(out)
    write_recording(rec, out)
    write_manifest(out, "sync", cfg, inputs={"pressure": file_hash(pressure), "pose": file_hash(pose)},
                   outputs=tree_hashes(out), extra={"offset_s": offset, "frames": len(rec)})
    return {"offset_s": offset, "frames": len(rec)}


# ---------------------------------------------------------------------------
# report

def cmd_report(cfg, report_json, out=None):
    p = Path(report_json)
    if not p.exists():
        raise PipelineError(f"report not found: {p}; run `seatpose eval` first")
    doc = json.loads(p.read_text())
    out = Path(out or p.parent)
    figures = render(doc, out)
    text = format_report(doc)
    write_manifest(out, "report", cfg, inputs={p.name: file_hash(p)},
                   outputs={f.name: file_hash(f) for f in figures if f.suffix != ".png"},
                   extra={"figures": [f.name for f in figures]})
    return text, figures


# ---------------------------------------------------------------------------
# argument parsing

def _parse_sets(pairs):
    over = {}
    for item in pairs or []:
        if "=" not in item:
            raise C.ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        C.set_dotted(over, k, yaml.safe_load(v))
    return over


def build_parser():
    ap = argparse.ArgumentParser(prog="seatpose", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (dotted key)")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--out")

    t = sub.add_parser("train", parents=[common], help="train one stage per fold")
    t.add_argument("--stage", required=True, choices=STAGES)
    t.add_argument("--fold", type=int, action="append")
    t.add_argument("--name", help="checkpoint name (default: the stage name)")
    t.add_argument("--resume", action="store_true", help="continue quantizer training from its checkpoint")

    e = sub.add_parser("eval", parents=[common], help="evaluate trained checkpoints per fold")
    e.add_argument("--fold", type=int, action="append")
    e.add_argument("--out")

    i = sub.add_parser("infer", parents=[common], help="decode poses for one recording")
    i.add_argument("recording")
    i.add_argument("--fold", type=int, default=0)
    i.add_argument("--model", default="p2p")
    i.add_argument("--chair-cloud")
    i.add_argument("--out")

    y = sub.add_parser("sync", parents=[common], help="align raw pressure and pose streams by seat taps")
    y.add_argument("--pressure", required=True)
    y.add_argument("--pose", required=True)
    y.add_argument("--pressure-rate", type=float, required=True)
    y.add_argument("--pose-rate", type=float, required=True)
    y.add_argument("--chair", required=True)
    y.add_argument("--subject", required=True)
    y.add_argument("--activity", required=True)
    y.add_argument("--mass", type=float, required=True)
    y.add_argument("--height", type=float, required=True)
    y.add_argument("--out", required=True)

    r = sub.add_parser("report", parents=[common], help="render tables and figures from an eval report")
    r.add_argument("report_json")
    r.add_argument("--out")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        over = _parse_sets(args.set)
        if args.seed is not None:
            over["seed"] = args.seed
        cfg = C.load_config(args.config, over)
        base = Path(args.config).parent if args.config else Path(".")
        if args.command == "simulate":
            doc = cmd_simulate(cfg, args.out, base)
            print(f"simulated {doc['recordings']} recordings, {doc['frames']} frames")
        elif args.command == "train":
            res = cmd_train(cfg, args.stage, args.fold, args.name, args.resume)
            for f, r in res.items():
                print(f"fold {f}: {r['checkpoint']} ({r['epochs']} epochs, best val {r['best_val']:.6g})")
        elif args.command == "eval":
            doc = cmd_eval(cfg, args.fold, args.out)
            print(format_report(doc), end="")
        elif args.command == "infer":
            res = cmd_infer(cfg, args.recording, args.fold, args.out, args.model, args.chair_cloud)
            print(f"decoded {res['frames']} frames; startup {res['startup_s']:.3f} s, "
                  f"inference {res['inference_s']:.3f} s")
        elif args.command == "sync":
            res = cmd_sync(cfg, args.pressure, args.pose, args.pressure_rate, args.pose_rate, args.chair,
                           args.subject, args.activity, args.mass, args.height, args.out)
            print(f"offset {res['offset_s']:.4f} s, {res['frames']} frames")
        elif args.command == "report":
            text, figures = cmd_report(cfg, args.report_json, args.out)
            print(text, end="")
            for f in figures:
                print(f"figure: {f}")
    except Exception as exc:  # one typed line, nonzero exit
        if args.verbose:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
