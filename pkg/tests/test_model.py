import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optosqueeze.errors import ShapeError
from optosqueeze.fock import FockCutoffs, operators
from optosqueeze.model import (
    TWO_PI,
    Liouvillian,
    PulsePair,
    SystemParams,
    TimeGrid,
    control_operators,
    counterrotating,
    hamiltonian,
    hamiltonian_full,
    hamiltonian_rwa,
    lindblad_ops,
    liouvillian_adjoint_apply,
    liouvillian_apply,
    liouvillian_deriv,
)

import oracles

C = FockCutoffs(3, 4)
amp = st.floats(-1e6, 1e6)


def random_density(dim, rng):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def random_hermitian(dim, rng):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return m + m.conj().T


# --- parameters and pulses ---------------------------------------------------

def test_device_values(device):
    assert device.kappa == pytest.approx(TWO_PI * 450e3)
    assert device.Omega == pytest.approx(TWO_PI * 3.6e6)
    assert device.g0 == pytest.approx(TWO_PI * 36)
    assert device.Gamma == pytest.approx(TWO_PI * 3)
    assert device.omega_cav == pytest.approx(TWO_PI * 6.23e9)
    assert device.n_th == 2
    assert device.kappa_time == pytest.approx(1 / 450e3)


@given(st.floats(1, 1e10), st.floats(1e5, 1e8), st.floats(1, 1e3), st.floats(0, 1e4), st.floats(0, 10), st.floats(0, 10))
def test_hz_round_trip(nu_cav, nu_mech, g0, kappa, gamma, n_th):
    p = SystemParams.from_hz(nu_cav, nu_mech, g0, kappa, gamma, n_th)
    back = p.to_hz()
    for key, v in zip(("nu_cav_hz", "nu_mech_hz", "g0_hz", "kappa_hz", "Gamma_hz", "n_th"),
                      (nu_cav, nu_mech, g0, kappa, gamma, n_th)):
        assert back[key] == pytest.approx(v, rel=1e-12, abs=0)


@pytest.mark.parametrize("field", ["omega_cav", "Omega", "g0"])
def test_frequencies_must_be_positive(device, field):
    with pytest.raises(ValueError):
        device.with_(**{field: 0.0})


@pytest.mark.parametrize("field", ["kappa", "Gamma", "n_th"])
def test_rates_non_negative(device, field):
    with pytest.raises(ValueError):
        device.with_(**{field: -1.0})
    device.with_(**{field: 0.0})


def test_unresolved_sideband_warns(device):
    with pytest.warns(UserWarning, match="resolved-sideband"):
        device.with_(kappa=0.6 * device.Omega)


def test_pulse_pair_invariants():
    grid = TimeGrid(1e-6, 10)
    p = PulsePair(grid, 1.0, np.arange(11.0))
    assert p.g_plus.shape == (11,) and p.g_minus[3] == 3
    with pytest.raises(ValueError):
        p.g_plus[0] = 2.0
    with pytest.raises(ShapeError):
        PulsePair(grid, np.zeros(10), 0.0)
    with pytest.raises(ValueError):
        PulsePair(grid, np.full(11, np.nan), 0.0)
    assert p.mean_g_minus() == pytest.approx(4.5)
    assert p.max_amplitude() == 10


def test_resampled_keeps_piecewise_values():
    grid = TimeGrid(1.0, 4)
    p = PulsePair(grid, [1, 2, 3, 4, 5], [0, 0, 1, 1, 9])
    q = p.resampled(8)
    np.testing.assert_array_equal(q.g_plus, [1, 1, 2, 2, 3, 3, 4, 4, 5])
    assert q.mean_g_minus() == p.mean_g_minus()
    with pytest.raises(ValueError):
        p.resampled(6)


def test_time_grid():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5
    np.testing.assert_array_equal(g.times, [0, 0.5, 1, 1.5, 2])
    for bad in [(0.0, 3), (1.0, 0), (1.0, 2.5)]:
        with pytest.raises(ValueError):
            TimeGrid(*bad)


# --- Hamiltonians ------------------------------------------------------------

def test_beam_splitter_element():
    H = hamiltonian_rwa(0.0, 7.0, C)
    assert H[C.index(1, 0), C.index(0, 1)] == pytest.approx(-7.0)
    d, b = operators(C).d, operators(C).b
    np.testing.assert_allclose(H, -7.0 * (d.conj().T @ b + b.conj().T @ d))


def test_two_mode_squeezing_element():
    H = hamiltonian_rwa(5.0, 0.0, C)
    assert H[C.index(1, 1), C.index(0, 0)] == pytest.approx(-5.0)


def test_zero_drive_is_zero():
    assert not np.any(hamiltonian_rwa(0.0, 0.0, C))
    assert not np.any(hamiltonian_full(0.0, 0.0, 0.3, 2.0, C))


@given(amp, amp, st.floats(0, 1e-5))
@settings(max_examples=25)
def test_hamiltonians_match_oracle(gp, gm, t):
    Om = TWO_PI * 3.6e6
    np.testing.assert_allclose(hamiltonian_rwa(gp, gm, C), oracles.hamiltonian(gp, gm, 3, 4), atol=1e-9)
    np.testing.assert_allclose(hamiltonian_full(gp, gm, t, Om, C), oracles.hamiltonian(gp, gm, 3, 4, t, Om), atol=1e-9)


def test_counterrotating_at_zero_phase():
    gp, gm, Om = 2.0, 3.0, 5.0
    d, b = operators(C).d, operators(C).b
    rot = -(gp * d.conj().T @ b + gm * d.conj().T @ b.conj().T)
    t = math.pi / Om  # 2Ωt = 2π
    np.testing.assert_allclose(counterrotating(gp, gm, t, Om, C), rot + rot.conj().T, atol=1e-12)


def test_counterrotating_averages_out():
    Om = TWO_PI * 3.6e6
    ts = np.arange(8) * (math.pi / Om) / 8
    mean = sum(hamiltonian_full(1e5, 2e5, t, Om, C) for t in ts) / len(ts)
    np.testing.assert_allclose(mean, hamiltonian_rwa(1e5, 2e5, C), atol=1e-12 * 2e5)


def test_full_hamiltonian_hermitian():
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, 1e-5, 10):
        H = hamiltonian_full(3e5, 4e5, t, TWO_PI * 3.6e6, C)
        assert np.max(np.abs(H - H.conj().T)) < 1e-12 * 4e5


def test_hamiltonian_dispatch(device):
    np.testing.assert_array_equal(hamiltonian(1, 2, 0.1, device, C, "rwa"), hamiltonian_rwa(1, 2, C))
    with pytest.raises(ValueError):
        hamiltonian(1, 2, 0.1, device, C, "exact")


# --- dissipators and the Liouvillian ----------------------------------------

def test_lindblad_ops(device):
    l1, l2, l3 = lindblad_ops(device.with_(n_th=0.0), C)
    assert not np.any(l2)
    d = operators(C).d
    np.testing.assert_allclose(l1.conj().T @ l1, device.kappa * d.conj().T @ d, rtol=1e-14)
    l1, l2, l3 = lindblad_ops(device, C)
    b = operators(C).b
    np.testing.assert_allclose(l1, math.sqrt(TWO_PI * 450e3) * d)
    np.testing.assert_allclose(l2, math.sqrt(TWO_PI * 3 * 2) * b.conj().T)
    np.testing.assert_allclose(l3, math.sqrt(TWO_PI * 3 * 3) * b)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20)
def test_liouvillian_traceless_and_hermitian(seed):
    rng = np.random.default_rng(seed)
    p = SystemParams.device()
    rho = random_density(C.dim, rng)
    H = hamiltonian_full(*rng.uniform(-1e5, 1e5, 2), rng.uniform(0, 1e-6), p.Omega, C)
    out = liouvillian_apply(rho, H, lindblad_ops(p, C))
    assert abs(np.trace(out)) < 1e-12 * np.abs(out).max()
    assert np.max(np.abs(out - out.conj().T)) < 1e-12 * np.abs(out).max()


def test_vacuum_is_dark(device):
    rho = np.zeros((C.dim, C.dim), complex)
    rho[0, 0] = 1
    l3 = lindblad_ops(device, C)[2]
    assert not np.any(liouvillian_apply(rho, np.zeros_like(rho), [l3]))


def test_cavity_photon_decay_rate(device):
    rho = np.zeros((C.dim, C.dim), complex)
    i = C.index(1, 0)
    rho[i, i] = 1
    l1 = lindblad_ops(device, C)[0]
    d = operators(C).d
    rate = np.trace(d.conj().T @ d @ liouvillian_apply(rho, np.zeros_like(rho), [l1])).real
    assert rate == pytest.approx(-device.kappa, rel=1e-12)


def test_shape_errors():
    with pytest.raises(ShapeError):
        liouvillian_apply(np.eye(3), np.eye(4), [])
    with pytest.raises(ShapeError):
        liouvillian_apply(np.eye(4), np.eye(4), [np.eye(3)])


def test_liouvillian_matches_superoperator(device):
    rng = np.random.default_rng(1)
    rho = random_density(C.dim, rng)
    H = oracles.hamiltonian(2e5, 3e5, 3, 4)
    Ls = oracles.jumps(device.kappa, device.Gamma, device.n_th, 3, 4)
    S = oracles.superoperator(H, Ls)
    ref = (S @ rho.reshape(-1, order="F")).reshape(C.dim, C.dim, order="F")
    np.testing.assert_allclose(liouvillian_apply(rho, H, Ls), ref, atol=1e-9 * np.abs(ref).max())


@pytest.mark.parametrize("mode", ["rwa", "full"])
def test_fast_liouvillian_agrees(device, mode):
    rng = np.random.default_rng(2)
    liou = Liouvillian(device, C, mode)
    H = liou.hamiltonian(2e5, 3e5, 1.7e-7)
    np.testing.assert_allclose(H, hamiltonian(2e5, 3e5, 1.7e-7, device, C, mode), atol=1e-9)
    rho = random_density(C.dim, rng)
    A = random_hermitian(C.dim, rng)
    jumps = lindblad_ops(device, C)
    scale = np.abs(liouvillian_apply(rho, H, jumps)).max()
    np.testing.assert_allclose(liou.apply(rho, H), liouvillian_apply(rho, H, jumps), atol=1e-12 * scale)
    np.testing.assert_allclose(liou.apply_adjoint(A, H), liouvillian_adjoint_apply(A, H, jumps), atol=1e-11 * scale)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20)
def test_adjoint_pairing(seed):
    rng = np.random.default_rng(seed)
    p = SystemParams.device()
    H = hamiltonian_full(1e5, 2e5, 3e-7, p.Omega, C)
    jumps = lindblad_ops(p, C)
    A, B = random_hermitian(C.dim, rng), random_hermitian(C.dim, rng)
    lhs = np.trace(A @ liouvillian_apply(B, H, jumps))
    rhs = np.trace(liouvillian_adjoint_apply(A, H, jumps) @ B)
    assert abs(lhs - rhs) < 1e-9 * max(abs(lhs), 1.0)


def test_adjoint_is_unital(device):
    liou = Liouvillian(device, C, "full")
    out = liou.apply_adjoint(np.eye(C.dim), liou.hamiltonian(1e5, 2e5, 1e-7))
    assert np.abs(out).max() < 1e-8


@pytest.mark.parametrize("mode", ["rwa", "full"])
@pytest.mark.parametrize("which", ["plus", "minus"])
def test_liouvillian_derivative(device, mode, which):
    rng = np.random.default_rng(3)
    rho = random_density(C.dim, rng)
    t, gp, gm, eps = 2.3e-7, 1e5, 2e5, 1e-6
    jumps = lindblad_ops(device, C)

    def L(gp, gm):
        return liouvillian_apply(rho, hamiltonian(gp, gm, t, device, C, mode), jumps)

    shifted = L(gp + eps, gm) if which == "plus" else L(gp, gm + eps)
    fd = (shifted - L(gp, gm)) / eps
    der = liouvillian_deriv(rho, which, mode, t, device.Omega, C)
    assert np.abs(fd - der).max() < 1e-3 * np.abs(der).max()
    assert abs(np.trace(der)) < 1e-12
    rho2 = random_density(C.dim, rng)
    np.testing.assert_allclose(
        liouvillian_deriv(0.3 * rho + 0.7 * rho2, which, mode, t, device.Omega, C),
        0.3 * der + 0.7 * liouvillian_deriv(rho2, which, mode, t, device.Omega, C),
        atol=1e-12,
    )
    with pytest.raises(ValueError):
        liouvillian_deriv(rho, "both", mode, t, device.Omega, C)


def test_control_operators_are_hermitian(device):
    for t in (0.0, 1e-7, 3.3e-7):
        for op in control_operators(t, device.Omega, C, "full"):
            assert np.max(np.abs(op - op.conj().T)) < 1e-14


def test_norm_bound_covers_generator(device):
    rng = np.random.default_rng(4)
    liou = Liouvillian(device, C, "full")
    S = oracles.superoperator(oracles.hamiltonian(3e5, 4e5, 3, 4, 1e-7, device.Omega),
                              oracles.jumps(device.kappa, device.Gamma, device.n_th, 3, 4))
    assert np.max(np.abs(np.linalg.eigvals(S))) <= liou.norm_bound(4e5)
