import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg, optimize
from scipy.spatial.transform import Rotation

from seatpose.metrics import (
    AlignmentDegenerateError, DistStats, extract_features, fid, macro_f1, motion_fid, mpjpe, mpve,
    pa_mpjpe, r_precision, windowed_features,
)


def naive_mean_distance_mm(a, b):
    a, b = a.reshape(-1, 3), b.reshape(-1, 3)
    total = 0.0
    for p, q in zip(a, b):
        total += ((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2) ** 0.5
    return total / len(a) * 1000.0


def test_mpjpe_identity_and_single_offset():
    rng = np.random.default_rng(0)
    gt = rng.normal(size=(1, 22, 3))
    assert mpjpe(gt, gt) == 0
    pred = gt.copy()
    pred[0, 5] += [0.003, 0, 0.004]
    assert mpjpe(pred, gt) == pytest.approx(5 / 22, rel=1e-12)


def test_mpjpe_mpve_match_loop():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a, b = rng.normal(size=(4, 22, 3)), rng.normal(size=(4, 22, 3))
        ref = naive_mean_distance_mm(a, b)
        assert abs(mpjpe(a, b) - ref) <= 1e-9 * ref
        v1, v2 = rng.normal(size=(704, 3)), rng.normal(size=(704, 3))
        ref = naive_mean_distance_mm(v1, v2)
        assert abs(mpve(v1, v2) - ref) <= 1e-9 * ref


def test_mpve_uniform_offset():
    v = np.random.default_rng(2).normal(size=(100, 3))
    assert mpve(v + [0.007, 0, 0], v) == pytest.approx(7.0, abs=1e-9)
    with pytest.raises(ValueError):
        mpve(v[:-1], v)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mpjpe(np.zeros((22, 3)), np.zeros((21, 3)))


def test_pa_mpjpe_rigid_invariance():
    rng = np.random.default_rng(3)
    gt = rng.normal(size=(22, 3))
    r = Rotation.random(random_state=4)
    assert pa_mpjpe(r.apply(gt) + [1, 2, 3], gt) < 1e-9
    pred = gt + rng.normal(scale=0.05, size=gt.shape)
    base = pa_mpjpe(pred, gt)
    for seed in range(10):
        g = Rotation.random(random_state=seed)
        moved = g.apply(pred) + rng.normal(size=3)
        assert abs(pa_mpjpe(moved, gt) - base) <= 1e-9


def test_pa_mpjpe_excludes_reflection():
    rng = np.random.default_rng(5)
    gt = rng.normal(size=(22, 3))
    mirrored = gt * [1, 1, -1]
    assert pa_mpjpe(mirrored, gt) > 1.0


def test_pa_not_worse_than_mpjpe():
    rng = np.random.default_rng(6)
    for _ in range(50):
        a, b = rng.normal(size=(3, 22, 3)), rng.normal(size=(3, 22, 3))
        assert pa_mpjpe(a, b) <= mpjpe(a, b) + 1e-9


def test_pa_mpjpe_matches_bruteforce_rotation_search():
    rng = np.random.default_rng(7)
    for _ in range(5):
        gt = rng.normal(size=(5, 3))
        pred = Rotation.random(random_state=rng.integers(1 << 30)).apply(gt) + rng.normal(scale=0.3, size=gt.shape)

        def sse(rv):
            p = Rotation.from_rotvec(rv).apply(pred)
            p = p - p.mean(0) + gt.mean(0)
            return np.sum((p - gt) ** 2)

        # coarse grid over rotation vectors, then local refinement
        grid = np.linspace(-np.pi, np.pi, 9)
        starts = np.array(np.meshgrid(grid, grid, grid)).reshape(3, -1).T
        starts = starts[np.linalg.norm(starts, axis=1) <= np.pi]
        best = min(starts, key=sse)
        res = optimize.minimize(sse, best, method="BFGS", options={"gtol": 1e-12})
        p = Rotation.from_rotvec(res.x).apply(pred)
        p = p - p.mean(0) + gt.mean(0)
        oracle = np.linalg.norm(p - gt, axis=1).mean() * 1000
        assert abs(pa_mpjpe(pred, gt) - oracle) <= 1e-6 * oracle


def test_pa_mpjpe_degenerate():
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(AlignmentDegenerateError):
        pa_mpjpe(line, line)


def test_fid_self_and_1d():
    rng = np.random.default_rng(8)
    s = DistStats.from_features(rng.normal(size=(200, 6)))
    assert fid(s, s) == pytest.approx(0, abs=1e-6)
    a = DistStats(np.array([0.0]), np.array([[1.0]]), 10)
    b = DistStats(np.array([1.0]), np.array([[1.0]]), 10)
    assert abs(fid(a, b) - 1.0) <= 1e-9


def test_fid_2d_analytic():
    # diagonal covariances: closed form |dmu|^2 + sum (sx - sy)^2
    a = DistStats(np.array([0.5, -1.0]), np.diag([4.0, 1.0]), 10)
    b = DistStats(np.array([1.5, 1.0]), np.diag([1.0, 9.0]), 10)
    expect = 1.0 + 4.0 + (2 - 1) ** 2 + (1 - 3) ** 2
    assert abs(fid(a, b) - expect) <= 1e-6


def test_fid_matches_scipy_sqrtm():
    rng = np.random.default_rng(9)
    for _ in range(10):
        m1, m2 = rng.normal(size=(2, 4, 4))
        s1, s2 = m1 @ m1.T, m2 @ m2.T
        mu1, mu2 = rng.normal(size=(2, 4))
        covmean = linalg.sqrtm(s1 @ s2).real
        ref = np.sum((mu1 - mu2) ** 2) + np.trace(s1 + s2 - 2 * covmean)
        got = fid(DistStats(mu1, s1, 5), DistStats(mu2, s2, 5))
        assert got == pytest.approx(ref, rel=1e-6, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_fid_symmetry(seed):
    rng = np.random.default_rng(seed)
    x = DistStats.from_features(rng.normal(size=(30, 3)))
    y = DistStats.from_features(rng.normal(loc=0.5, size=(30, 3)))
    assert abs(fid(x, y) - fid(y, x)) <= 1e-9
    assert np.allclose(x.covariance, x.covariance.T, atol=1e-9)


def test_fid_errors():
    a = DistStats(np.zeros(2), np.eye(2), 3)
    with pytest.raises(ValueError):
        fid(a, DistStats(np.zeros(3), np.eye(3), 3))
    with pytest.raises(ValueError):
        fid(a, DistStats(np.array([np.nan, 0]), np.eye(2), 3))


def test_extract_features_dims_and_static():
    rng = np.random.default_rng(10)
    pos = np.repeat(rng.normal(size=(1, 22, 3)), 10, axis=0)
    f = extract_features(pos, np.zeros((10, 22, 3)))
    assert f.kinetic.shape == (44,) and f.geometric.shape == (88,)
    assert np.all(f.kinetic == 0)


def test_extract_features_uniform_velocity():
    base = np.random.default_rng(11).normal(size=(22, 3))
    t = np.arange(20) / 15
    pos = base + t[:, None, None] * np.array([0.3, 0.4, 0.0])
    f = extract_features(pos, np.zeros((20, 22, 3)))
    np.testing.assert_allclose(f.kinetic[:22], 0.5, atol=1e-9)
    np.testing.assert_allclose(f.kinetic[22:], 0.0, atol=1e-9)
    with pytest.raises(ValueError):
        extract_features(pos[:1], np.zeros((1, 22, 3)))


def test_r_precision():
    rng = np.random.default_rng(12)
    real = rng.normal(size=(100, 16))
    assert r_precision(real, real) == 1.0
    assert r_precision(real, rng.normal(size=(100, 16)), k=32) == 1.0
    noise = r_precision(rng.normal(size=(1000, 16)), rng.normal(size=(1000, 16)), k=3, pool=32, seed=1)
    assert abs(noise - 3 / 32) <= 0.03


def test_r_precision_small_pool_warns(caplog):
    x = np.eye(10)
    assert r_precision(x, x) == 1.0
    assert "shrinking pool" in caplog.text


def test_macro_f1():
    gt = np.arange(12).repeat(3)
    assert macro_f1(gt, gt) == 1.0
    assert macro_f1(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 0]), classes=2) == pytest.approx(0.5)
    rng = np.random.default_rng(13)
    gt = np.arange(12).repeat(1000)
    assert abs(macro_f1(rng.integers(0, 12, gt.size), gt) - 1 / 12) <= 0.02
    with pytest.raises(ValueError):
        macro_f1(np.zeros(3, int), np.zeros(4, int))


def test_mpjpe_triangle():
    rng = np.random.default_rng(14)
    for _ in range(50):
        a, b, c = rng.normal(size=(3, 2, 22, 3))
        assert mpjpe(a, c) <= mpjpe(a, b) + mpjpe(b, c) + 1e-9


def test_windowed_features_count_and_motion_fid():
    rng = np.random.default_rng(0)
    seqs = []
    for _ in range(6):
        t = np.arange(75)[:, None, None] / 15.0
        pos = np.sin(t + rng.normal(size=(1, 22, 3))) * 0.1 + rng.normal(size=(1, 22, 3))
        seqs.append((pos, rng.normal(size=(75, 22, 3)) * 0.1))
    kin, geo = windowed_features(seqs, 30, 15)
    assert kin.shape == (6 * 4, 44) and geo.shape == (6 * 4, 88)
    same = motion_fid(seqs, seqs)
    assert same["fid_k"] <= 1e-6 and same["fid_g"] <= 1e-6
    # stitching 15-frame chunks from different sequences creates jumps at the seams
    chunks = [(p[s:s + 15], th[s:s + 15]) for p, th in seqs for s in range(0, 75, 15)]
    order = rng.permutation(len(chunks))
    mixed = [(np.concatenate([chunks[i][0] for i in order[k:k + 5]]),
              np.concatenate([chunks[i][1] for i in order[k:k + 5]])) for k in range(0, len(order), 5)]
    assert motion_fid(mixed, seqs)["fid_k"] > 0.01
    with pytest.raises(ValueError):
        windowed_features([(seqs[0][0][:20], seqs[0][1][:20])])
