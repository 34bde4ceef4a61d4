"""Procedural seated motion library used to drive the simulator.

Each activity is a set of joint-rotation offsets applied on top of a
neutral seated pose. A clip repeats the activity several times with
smooth transitions, amplitude jitter and a little postural sway.
"""
from __future__ import annotations

import numpy as np

from .body import JOINT_INDEX, NUM_JOINTS, RATE_HZ
from .dataio import ACTIVITIES
from .sim import Motion, Subject

# virtual roster: masses (kg) and heights (m) of the recorded participants
SUBJECTS = [
    Subject("s1", 65.3, 1.75), Subject("s2", 70.9, 1.75), Subject("s3", 65.4, 1.76),
    Subject("s4", 54.9, 1.62), Subject("s5", 60.1, 1.575), Subject("s6", 57.8, 1.62),
    Subject("s7", 51.0, 1.60), Subject("s8", 62.4, 1.72),
]


def _j(name):
    return JOINT_INDEX[name]


def seated_pose():
    """Neutral upright sitting: thighs forward, shanks down, hands on thighs."""
    th = np.zeros((NUM_JOINTS, 3))
    for side in ("left", "right"):
        th[_j(f"{side}_hip"), 1] = -np.pi / 2
        th[_j(f"{side}_knee"), 1] = np.pi / 2
        th[_j(f"{side}_shoulder"), 1] = -0.5
        th[_j(f"{side}_elbow"), 1] = -1.2
    return th


def _delta(**joints):
    d = np.zeros((NUM_JOINTS, 3))
    for name, v in joints.items():
        d[_j(name)] = v
    return d


def _trunk(flex=0.0, pelvis=0.0, lateral=0.0, twist=0.0):
    """Spread trunk flexion/lean/twist over the spine; pelvis tilt compensated at the hips."""
    d = np.zeros((NUM_JOINTS, 3))
    d[_j("pelvis"), 1] = pelvis
    for side in ("left", "right"):
        d[_j(f"{side}_hip"), 1] = -pelvis
    for name, share in (("spine1", 0.4), ("spine2", 0.35), ("spine3", 0.25)):
        d[_j(name)] = [lateral * share, flex * share, twist * share]
    return d


# (joint offsets, backrest clearance change in m, lateral root shift in m)
ACTION_TARGETS = {
    "upright_sitting": (np.zeros((NUM_JOINTS, 3)), 0.0, 0.0),
    "forward_leaning": (_trunk(flex=0.55, pelvis=0.15), 0.06, 0.0),
    "reclining": (_trunk(flex=-0.15, pelvis=-0.2) + _delta(neck=[0, 0.15, 0]), -0.02, 0.0),
    "slouching": (_trunk(flex=0.6, pelvis=-0.35) + _delta(neck=[0, 0.25, 0]), 0.04, 0.0),
    "crossing_legs": (_delta(left_hip=[0, -0.35, -0.45], left_knee=[0, -0.2, 0.0]), 0.0, -0.02),
    "reaching_forward": (_trunk(flex=0.35, pelvis=0.1)
                         + _delta(right_shoulder=[0, -1.0, 0], right_elbow=[0, 1.1, 0]), 0.05, 0.0),
    "twisting_torso": (_trunk(twist=0.7) + _delta(left_shoulder=[0, 0, 0.3]), 0.03, 0.0),
    "leg_on_chair": (_delta(right_hip=[0, -0.8, 0.2], right_knee=[0, 1.0, 0]), 0.02, 0.03),
    "lifting_body": (_trunk(flex=0.1)
                     + _delta(left_shoulder=[0.15, 0.5, 0], right_shoulder=[-0.15, 0.5, 0],
                              left_elbow=[0, 1.2, 0], right_elbow=[0, 1.2, 0]), 0.03, 0.0),
    "sliding_on_chair": (_trunk(flex=-0.1, pelvis=-0.3) + _delta(left_knee=[0, -0.6, 0], right_knee=[0, -0.6, 0]),
                         0.14, 0.0),
    "leaning_to_side": (_trunk(lateral=0.45, pelvis=0.0) + _delta(pelvis=[0.1, 0, 0]), 0.03, -0.03),
    "sitting_back": (_trunk(flex=-0.2, pelvis=-0.1), -0.02, 0.0),
}
assert set(ACTION_TARGETS) == set(ACTIVITIES)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def activity_envelope(n_frames, rng, rate=RATE_HZ, hold=(1.5, 2.5), rest=(0.8, 1.5), ramp=(0.7, 1.2)):
    """Piecewise-smooth 0..1 envelope: rest, ramp in, hold, ramp out, repeat."""
    env = np.zeros(n_frames)
    amp = np.zeros(n_frames)
    t = int(rng.uniform(*rest) * rate)
    while t < n_frames:
        a = rng.uniform(0.75, 1.15)
        r_in, h, r_out = (max(2, int(rng.uniform(*rng_range) * rate)) for rng_range in (ramp, hold, ramp))
        seg = np.concatenate([_smoothstep(np.arange(1, r_in + 1) / r_in), np.ones(h),
                              _smoothstep(1 - np.arange(1, r_out + 1) / r_out)])
        end = min(n_frames, t + len(seg))
        env[t:end] = seg[:end - t]
        amp[t:end] = a
        t = end + int(rng.uniform(*rest) * rate)
    return env, amp


def make_motion(subject, activity, duration, rng, rate=RATE_HZ, name=""):
    """One clip of ``activity`` performed by ``subject`` for ``duration`` seconds."""
    n = int(round(duration * rate))
    base = seated_pose()
    target, gap, lateral = ACTION_TARGETS[activity]
    # individual style: slight per-subject scaling and resting posture offset
    style = 1.0 + 0.1 * rng.normal()
    upper = np.zeros((NUM_JOINTS, 1))
    upper[[_j(n) for n in ("spine1", "spine2", "spine3", "neck", "head", "left_shoulder", "right_shoulder",
                           "left_elbow", "right_elbow")]] = 1.0
    # resting posture differs mostly above the hips; legs only slightly
    base = base + rng.normal(scale=0.03, size=base.shape) * np.where(upper > 0, 1.0, 0.1) * (base != 0)
    env, amp = activity_envelope(n, rng, rate)
    w = (env * amp * style)[:, None, None]
    t = np.arange(n) / rate
    sway = np.zeros((n, NUM_JOINTS, 3))
    phase = rng.uniform(0, 2 * np.pi, size=3)
    sway[:, _j("spine2"), 1] = 0.03 * np.sin(2 * np.pi * 0.2 * t + phase[0])
    sway[:, _j("spine3"), 0] = 0.02 * np.sin(2 * np.pi * 0.13 * t + phase[1])
    sway[:, _j("head"), 2] = 0.08 * np.sin(2 * np.pi * 0.1 * t + phase[2])
    if activity == "upright_sitting":
        # small posture shifts stand in for the action itself
        sway[:, _j("spine1"), 1] += 0.05 * env
        sway[:, _j("head"), 1] += 0.1 * env
    theta = base[None] + w * target[None] + sway
    # never push into the backrest: a negative change only closes the 2 cm gap
    back_gap = np.maximum(0.02 + gap * env * amp, 0.0)
    lat = lateral * env * amp
    return Motion(subject.subject_id, activity, theta.astype(np.float64), back_gap, lat,
                  name or f"{subject.subject_id}-{activity}")


def motion_library(subjects=None, activities=ACTIVITIES, duration=15.0, seed=0, takes=1):
    """Clips for every (subject, activity, take), each with its own RNG stream."""
    subjects = SUBJECTS if subjects is None else subjects
    out = []
    for si, subj in enumerate(subjects):
        for ai, act in enumerate(activities):
            for k in range(takes):
                rng = np.random.default_rng([seed, si, ACTIVITIES.index(act), k])
                suffix = f"-t{k}" if takes > 1 else ""
                out.append(make_motion(subj, act, duration, rng, name=f"{subj.subject_id}-{act}{suffix}"))
    return out


def random_seated_pose(rng, spread=0.15):
    """Seated pose with random joint perturbations (larger above the hips)."""
    base = seated_pose()
    scale = np.full((NUM_JOINTS, 1), spread)
    for name in ("left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle",
                 "left_foot", "right_foot"):
        scale[_j(name)] = spread / 3
    scale[_j("pelvis")] = spread / 3
    return base + rng.normal(size=base.shape) * scale
