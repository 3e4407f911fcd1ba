import numpy as np
import pytest

from spintwa.dynamics import (
    classical_energy,
    classical_energy_scale,
    effective_field,
    effective_fields,
    evolve,
    evolve_generic,
    evolve_ising_rotation,
    iter_generic,
    spin_rhs,
)
from spintwa.model import HamiltonianSpec, LatticeSpec, model_preset
from spintwa.sampling import PhaseEnsemble, sample_dtwa, sample_twa


def _ensemble(spins, scheme="twa"):
    spins = np.asarray(spins, dtype=float)
    return PhaseEnsemble(scheme, 0.0, spins.shape[1], 0, spins, np.ones(len(spins), dtype=np.int8))


def test_effective_field_examples():
    chain = LatticeSpec("chain", 5)
    along_x = np.tile([0.5, 0, 0], (5, 1))
    assert np.allclose(effective_field(along_x, model_preset("ising", chain), 2), 0)
    along_z = np.tile([0, 0, 0.5], (5, 1))
    assert np.allclose(effective_field(along_z, model_preset("ising", chain), 2), [0, 0, 1])
    assert np.allclose(effective_field(along_x, model_preset("xx", chain), 2), [1, 0, 0])
    # batched helper agrees with the single-site form
    rnd = np.random.default_rng(0).normal(size=(5, 3))
    spec = model_preset("xx", LatticeSpec("chain", 5, "power_law"))
    B = effective_fields(rnd, spec)
    assert np.allclose(B[3], effective_field(rnd, spec, 3))


def _componentwise(S, spec):
    """Right-hand sides written out per model, independent of the cross-product code."""
    B = effective_fields(S, spec)
    x, y, z = S[..., 0], S[..., 1], S[..., 2]
    h = spec.field[0]
    if spec.name == "ising":
        return np.stack([y * B[..., 2], -x * B[..., 2], 0 * z], -1)
    if spec.name == "transverse_ising":
        return np.stack([y * B[..., 2], -x * B[..., 2] + h * z, -h * y], -1)
    if spec.name == "xx":
        return np.stack([-z * B[..., 1], z * B[..., 0], x * B[..., 1] - y * B[..., 0]], -1)
    raise AssertionError


@pytest.mark.parametrize("preset", ["ising", "transverse_ising", "xx"])
def test_cross_product_matches_componentwise_equations(preset):
    spec = model_preset(preset, LatticeSpec("chain", 6))
    S = np.random.default_rng(1).normal(size=(20, 6, 3))
    assert np.allclose(spin_rhs(S, spec), _componentwise(S, spec))


def test_ising_keeps_sz():
    spec = model_preset("ising", LatticeSpec("chain", 5))
    e = sample_twa(0.8, 5, 50, seed=1)
    tr = evolve_generic(e, spec, [0, 0.5, 1.0])
    assert np.allclose(tr.states[:, :, :, 2], e.spins[None, :, :, 2], atol=1e-13)


def test_free_spin_larmor():
    h = 0.7
    J = np.zeros((3, 1, 1))
    spec = HamiltonianSpec(J, [h, 0, 0])
    e = _ensemble([[[0, 0, 0.5]]])
    ts = np.linspace(0, 5, 11)
    tr = evolve_generic(e, spec, ts)
    S = tr.states[:, 0, 0]
    assert np.allclose(S[:, 2], 0.5 * np.cos(h * ts), atol=1e-12)
    # dS^y/dt = h S^z for a field along x
    assert np.allclose(S[:, 1], 0.5 * np.sin(h * ts), atol=1e-12)


def test_xx_collinear_is_stationary():
    spec = model_preset("xx", LatticeSpec("chain", 7))
    e = _ensemble(np.tile([0.5, 0, 0], (3, 7, 1)))
    tr = evolve_generic(e, spec, [0, 1, 3])
    assert np.allclose(tr.states, e.spins[None])


def test_rotation_examples():
    spec = model_preset("ising", LatticeSpec("chain", 5))
    up = np.tile([0.5, 0, 0.5], (1, 5, 1))
    tr = evolve_ising_rotation(_ensemble(up), spec, [0, 0.3])
    assert np.allclose(tr.states[0], up)
    # B^z = J, so the x-y part turns by -J t
    assert np.allclose(tr.states[1, 0, :, 0], 0.5 * np.cos(0.3))
    assert np.allclose(tr.states[1, 0, :, 1], -0.5 * np.sin(0.3))


def test_rotation_rejects_non_ising():
    with pytest.raises(ValueError):
        evolve_ising_rotation(_ensemble(np.zeros((1, 4, 3))), model_preset("xx", LatticeSpec("chain", 4)), [0])


def test_rotation_matches_rk4_at_unit_time():
    spec = model_preset("ising", LatticeSpec("chain", 6, "power_law"))
    e = sample_dtwa(np.pi / 4, 6, 64, seed=3)
    a = evolve_ising_rotation(e, spec, [0, 1.0])
    b = evolve_generic(e, spec, [0, 1.0], dt=1e-3)
    assert np.max(np.abs(a.states - b.states)) < 1e-8


@pytest.mark.parametrize("n", [3, 8])
def test_rotation_matches_rk4_up_to_five(n):
    spec = model_preset("ising", LatticeSpec("chain", n, "infinite_range"))
    e = sample_twa(0.9, n, 100, seed=n)
    ts = [0, 1, 2.5, 5]
    a = evolve_ising_rotation(e, spec, ts)
    b = evolve_generic(e, spec, ts)
    assert np.max(np.abs(a.states - b.states)) < 1e-6


def test_numpy_backend_agrees():
    spec = model_preset("transverse_ising", LatticeSpec("chain", 5))
    e = sample_twa(1.1, 5, 300, seed=7)
    a = evolve_generic(e, spec, [0, 0.4, 1.3])
    b = evolve_generic(e, spec, [0, 0.4, 1.3], backend="numpy", threads=3)
    assert np.max(np.abs(a.states - b.states)) < 1e-12


def test_thread_count_does_not_change_trajectories():
    spec = model_preset("xx", LatticeSpec("chain", 6))
    e = sample_dtwa(np.pi / 2, 6, 9000, seed=5)
    a = evolve_generic(e, spec, [0, 0.5], threads=1)
    b = evolve_generic(e, spec, [0, 0.5], threads=4)
    assert np.array_equal(a.states, b.states)


def test_time_grid_validation():
    spec = model_preset("xx", LatticeSpec("chain", 3))
    e = sample_twa(0.2, 3, 2, seed=1)
    with pytest.raises(ValueError):
        evolve_generic(e, spec, [0, 1, 0.5])
    with pytest.raises(ValueError):
        evolve_generic(e, spec, [-1, 0])
    with pytest.raises(ValueError):
        evolve_generic(e, spec, [0, 1], dt=0)


def test_site_subset_and_lookup():
    spec = model_preset("xx", LatticeSpec("chain", 4))
    e = sample_twa(0.2, 4, 10, seed=1)
    tr = evolve(e, spec, [0, 0.5], sites=[3, 1])
    assert list(tr.sites) == [1, 3]
    assert np.array_equal(tr.spins_at(0, 3), e.spins[:, 3])
    with pytest.raises(KeyError):
        tr.spins_at(0.25, 1)
    with pytest.raises(KeyError):
        tr.spins_at(0.5, 0)


def test_lazy_iteration_yields_each_time():
    spec = model_preset("xx", LatticeSpec("chain", 4))
    e = sample_twa(0.2, 4, 10, seed=1)
    seen = [t for t, _ in iter_generic(e, spec, [0, 0.1, 0.2])]
    assert seen == [0, 0.1, 0.2]


@pytest.mark.parametrize("preset", ["ising", "transverse_ising", "xx"])
def test_norm_and_energy_conserved(preset):
    spec = model_preset(preset, LatticeSpec("chain", 6, "power_law"))
    e = sample_twa(0.6, 6, 40, seed=2)
    tr = evolve_generic(e, spec, np.linspace(0, 5, 6))
    norms = np.linalg.norm(tr.states, axis=-1)
    assert np.max(np.abs(norms - norms[0])) < 1e-9
    E = classical_energy(tr.states, spec)
    scale = classical_energy_scale(tr.states[0], spec)
    assert np.all(np.abs(E[0]) <= scale)
    assert np.max(np.abs(E - E[0]) / scale) < 1e-8
