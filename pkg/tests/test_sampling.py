import numpy as np
import pytest

from spintwa.sampling import (
    DTWA_POINTS,
    dtwa_raw_weights,
    dtwa_single_spin_weights,
    load_ensemble,
    sample,
    sample_dtwa,
    sample_twa,
    save_ensemble,
    sign_problem_factor,
)


def test_points_form_the_eight_corners():
    assert DTWA_POINTS.shape == (8, 3)
    assert len({tuple(p) for p in DTWA_POINTS}) == 8
    assert np.all(np.abs(DTWA_POINTS) == 0.5)


def test_weights_along_z():
    p, s = dtwa_single_spin_weights(0.0)
    up = DTWA_POINTS[:, 2] > 0
    assert np.allclose(p[up], 0.25) and np.allclose(p[~up], 0)
    assert np.all(s == 1)


def test_weights_along_x():
    p, s = dtwa_single_spin_weights(np.pi / 2)
    right = DTWA_POINTS[:, 0] > 0
    assert np.allclose(p[right], 0.25) and np.allclose(p[~right], 0)
    assert np.all(s == 1)


def test_weights_at_quarter_tilt():
    p, s = dtwa_single_spin_weights(np.pi / 4)
    negative = (DTWA_POINTS[:, 0] < 0) & (DTWA_POINTS[:, 2] < 0)
    assert np.all(s[negative] == -1) and np.all(s[~negative] == 1)
    assert p.sum() == pytest.approx(1.0)
    # exact enumeration: 1/4 + (a_x + a_z) * sqrt(2)/4 over the 8 points
    w = [0.25 + (ax + az) * np.sqrt(2) / 4 for ax, _, az in DTWA_POINTS]
    assert np.allclose(dtwa_raw_weights(np.pi / 4), w)
    assert sign_problem_factor(np.pi / 4) == pytest.approx((1 + np.sqrt(2)) / 2, abs=1e-14)


@pytest.mark.parametrize("theta", [0.0, np.pi / 2])
def test_no_sign_problem_at_axes(theta):
    assert sign_problem_factor(theta) == 1.0


def test_theta_range_checked():
    with pytest.raises(ValueError):
        sign_problem_factor(2.0)


def test_raw_weights_sum_to_two():
    for theta in np.linspace(0, np.pi / 2, 7):
        assert dtwa_raw_weights(theta).sum() == pytest.approx(2.0)


def test_empty_ensemble():
    e = sample_dtwa(0.4, 3, 0, seed=1)
    assert e.n_samples == 0 and e.spins.shape == (0, 3, 3)


def test_dtwa_samples_on_grid_with_product_sign():
    e = sample_dtwa(np.pi / 4, 4, 5000, seed=2)
    assert np.all(np.abs(e.spins) == 0.5)
    point_sign = np.where((e.spins[..., 0] < 0) & (e.spins[..., 2] < 0), -1, 1)
    assert np.array_equal(np.prod(point_sign, axis=1), e.signs)
    assert e.weight_scale == pytest.approx(sign_problem_factor(np.pi / 4) ** 4)


def test_twa_samples_have_unit_z_before_rotation():
    theta = 0.7
    e = sample_twa(theta, 3, 2000, seed=3)
    c, s = np.cos(theta), np.sin(theta)
    # undo the rotation about y
    z0 = s * e.spins[..., 0] + c * e.spins[..., 2]
    assert np.allclose(z0, 0.5)
    assert np.all(e.signs == 1)


@pytest.mark.parametrize("scheme", ["dtwa", "twa"])
@pytest.mark.parametrize("theta", [0.0, 0.4, np.pi / 4, np.pi / 2])
def test_moments_converge(scheme, theta):
    n = 10**6
    e = sample(scheme, theta, 1, n, seed=11)
    S = e.spins[:, 0]
    w = e.weights
    target1 = 0.5 * np.array([np.sin(theta), 0, np.cos(theta)])
    mean = (w[:, None] * S).mean(axis=0)
    se = (w[:, None] * S).std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(mean - target1) <= 4 * se + 1e-12)
    second = np.einsum("s,sa,sb->sab", w, S, S)
    m2 = second.mean(axis=0)
    se2 = second.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(m2 - np.eye(3) / 4) <= 4 * se2 + 1e-12)


def test_twa_variance_at_theta_zero():
    e = sample_twa(0.0, 1, 200000, seed=5)
    assert np.all(e.spins[..., 2] == 0.5)
    assert e.spins[:, 0, 0].var() == pytest.approx(0.25, rel=0.02)


@pytest.mark.parametrize("scheme", ["dtwa", "twa"])
def test_deterministic_across_threads(scheme):
    a = sample(scheme, 0.6, 5, 10000, seed=42, threads=1)
    b = sample(scheme, 0.6, 5, 10000, seed=42, threads=4)
    assert np.array_equal(a.spins, b.spins) and np.array_equal(a.signs, b.signs)
    c = sample(scheme, 0.6, 5, 10000, seed=43)
    assert not np.array_equal(a.spins, c.spins)


def test_prefix_stability():
    # sample k depends only on (seed, k), so a longer run extends a shorter one
    a = sample_dtwa(0.6, 3, 5000, seed=9)
    b = sample_dtwa(0.6, 3, 9000, seed=9)
    assert np.array_equal(a.spins, b.spins[:5000])


def test_binary_round_trip(tmp_path):
    e = sample_dtwa(np.pi / 4, 3, 100, seed=4)
    path = tmp_path / "ens.bin"
    save_ensemble(e, path)
    f = load_ensemble(path)
    assert (f.scheme, f.theta, f.n_spins, f.seed, f.n_samples) == ("dtwa", e.theta, 3, 4, 100)
    assert np.array_equal(f.spins, e.spins) and np.array_equal(f.signs, e.signs)
    assert f.weight_scale == e.weight_scale


def test_save_reports_path(tmp_path):
    e = sample_twa(0.1, 2, 3, seed=1)
    target = tmp_path / "missing" / "x.bin"
    with pytest.raises(OSError, match="missing"):
        save_ensemble(e, target)
