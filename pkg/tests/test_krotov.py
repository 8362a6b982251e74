import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

import optosqueeze.krotov as kr
from optosqueeze.errors import KrotovStepError
from optosqueeze.fock import FockCutoffs, initial_state, operators, quadrature_ops
from optosqueeze.krotov import (
    KrotovConfig,
    evaluate,
    functional,
    gradient,
    krotov_update_step,
    optimize,
    terminal_costate,
)
from optosqueeze.model import TWO_PI, Liouvillian, PulsePair, SystemParams, TimeGrid
from optosqueeze.propagator import make_grid, propagate_forward

DESK_C = FockCutoffs(4, 12)
GUESS_GM = TWO_PI * 5.8e3


@pytest.fixture
def desk_run(desk):
    grid = make_grid(5 * desk.kappa_time, desk, GUESS_GM, "rwa")
    return desk, PulsePair.constant(grid, 0.7 * GUESS_GM, GUESS_GM), initial_state(desk.n_th, DESK_C)


def random_state(rng, dim):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def test_config_validation():
    for kw in (dict(lambda_a_plus=0.0), dict(lambda_a_minus=-1.0), dict(max_iters=0), dict(stop_delta_J=0.0),
               dict(amplitude_cap=0.0), dict(mode="lab")):
        with pytest.raises(ValueError):
            KrotovConfig(**kw)


def test_centered_costate():
    c = FockCutoffs(3, 5)
    x1 = quadrature_ops(c)[0]
    rho = initial_state(1.0, c)
    np.testing.assert_allclose(terminal_costate(rho, c), -(x1 @ x1), atol=1e-14)


def test_displaced_vacuum_costate():
    c = FockCutoffs(2, 30)
    b = operators(c).b
    alpha = 0.8
    D = expm(alpha * (b.conj().T - b))  # real displacement: <X1> = √2·alpha
    rho = D @ initial_state(0.0, c) @ D.conj().T
    x1 = quadrature_ops(c)[0]
    m = np.trace(rho @ x1).real
    assert m == pytest.approx(math.sqrt(2) * alpha, rel=1e-8)
    np.testing.assert_allclose(terminal_costate(rho, c), -(x1 @ x1) + 2 * m * x1, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_costate_finite_difference(seed):
    rng = np.random.default_rng(seed)
    c = FockCutoffs(2, 4)
    rho = random_state(rng, c.dim)
    m = rng.normal(size=(c.dim,) * 2) + 1j * rng.normal(size=(c.dim,) * 2)
    delta = m + m.conj().T
    delta -= np.trace(delta) / c.dim * np.eye(c.dim)
    eps = 1e-6
    x1 = quadrature_ops(c)[0]

    def J(r):  # unclamped variance so the perturbed matrix need not be a state
        mean = np.trace(r @ x1).real
        return np.trace(r @ x1 @ x1).real - mean**2

    fd = (J(rho + eps * delta) - J(rho)) / eps
    an = -np.trace(terminal_costate(rho, c) @ delta).real
    assert fd == pytest.approx(an, rel=1e-3, abs=1e-9)


def test_infinite_lambda_leaves_pulses(desk_run):
    p, guess, rho0 = desk_run
    new, _ = krotov_update_step(guess, rho0, KrotovConfig(), p, DESK_C, lambdas=(math.inf, math.inf))
    assert new == guess
    new, _ = krotov_update_step(guess, rho0, KrotovConfig(1e60, 1e60), p, DESK_C)
    np.testing.assert_allclose(new.g_plus, guess.g_plus, rtol=1e-12)
    np.testing.assert_allclose(new.g_minus, guess.g_minus, rtol=1e-12)


def stationary_setup():
    # closed system in the fully mixed state: every commutator with it vanishes
    p = SystemParams.device().with_(kappa=0.0, Gamma=0.0)
    c = FockCutoffs(2, 3)
    grid = TimeGrid(1e-6, 20)
    return p, c, PulsePair.constant(grid, 0.0, 0.0), np.eye(c.dim, dtype=complex) / c.dim


def test_stationary_point_unchanged():
    p, c, guess, rho0 = stationary_setup()
    new, info = krotov_update_step(guess, rho0, KrotovConfig(), p, c)
    assert new == guess
    assert info.J_T == pytest.approx(functional(rho0, c), abs=1e-15)


def test_stationary_optimization_constant_trace():
    p, c, guess, rho0 = stationary_setup()
    rec = optimize(rho0, guess, KrotovConfig(max_iters=3), p, c)
    np.testing.assert_allclose(rec.J_T, rec.J_T[0], atol=1e-15)
    assert rec.converged and rec.pulses_final == guess


def test_one_update_decreases_cost(desk_run):
    p, guess, rho0 = desk_run
    J0 = functional(propagate_forward(rho0, guess, p, DESK_C).final, DESK_C)
    new, info = krotov_update_step(guess, rho0, KrotovConfig(), p, DESK_C)
    assert info.J_T < J0
    assert info.J_T == pytest.approx(functional(propagate_forward(rho0, new, p, DESK_C).final, DESK_C), rel=1e-6)
    # automatic weights put the first update at 5% of the guess amplitude
    dmax = max(np.abs(new.g_plus - guess.g_plus).max(), np.abs(new.g_minus - guess.g_minus).max())
    assert dmax == pytest.approx(0.05 * GUESS_GM, rel=0.3)


def fd_gradient(p, guess, rho0, c, mode, k, h=1.0):
    out = []
    for row in ("g_plus", "g_minus"):
        vals = []
        for sign in (1, -1):
            arr = getattr(guess, row).copy()
            arr[k] += sign * h
            pulses = PulsePair(guess.grid, **{**dict(g_plus=guess.g_plus, g_minus=guess.g_minus), row: arr})
            vals.append(functional(propagate_forward(rho0, pulses, p, c, mode).final, c))
        out.append((vals[0] - vals[1]) / (2 * h))
    return np.array(out)


@pytest.mark.parametrize("mode", ["rwa", "full"])
def test_gradient_matches_finite_differences(desk, mode):
    c = FockCutoffs(3, 8)
    gm = TWO_PI * 5e4
    grid = make_grid(2 * desk.kappa_time, desk, gm, mode)
    t = grid.times
    guess = PulsePair(grid, 0.6 * gm * (1 + 0.2 * np.sin(t / t[-1] * 5)), gm * np.ones_like(t))
    rho0 = initial_state(desk.n_th, c)
    g = gradient(rho0, guess, desk, c, mode)
    n = grid.n_steps
    for k in (1, n // 2, n - 1):
        fd = fd_gradient(desk, guess, rho0, c, mode, k)
        np.testing.assert_allclose(g[:, k], fd, rtol=0.05)


def test_update_direction_matches_finite_differences(desk_run):
    p, guess, rho0 = desk_run
    lam = 1e3 * kr._initial_lambda(rho0, guess, p, DESK_C, Liouvillian(p, DESK_C, "rwa"))
    new, _ = krotov_update_step(guess, rho0, KrotovConfig(lam, lam), p, DESK_C)
    dt = guess.grid.dt
    for k in (0, guess.grid.n_steps // 2, guess.grid.n_steps - 1):
        step = lam * dt * np.array([new.g_plus[k] - guess.g_plus[k], new.g_minus[k] - guess.g_minus[k]])
        fd = fd_gradient(p, guess, rho0, DESK_C, "rwa", k)
        np.testing.assert_allclose(step, -fd, rtol=0.05)


def test_optimize_record(desk_run):
    p, guess, rho0 = desk_run
    seen = []
    rec = optimize(rho0, guess, KrotovConfig(max_iters=4, snapshot_every=2), p, DESK_C,
                   callback=lambda it, pulses, J: seen.append((it, J)))
    assert [i.iteration for i in rec.iterations] == list(range(5))
    assert rec.monotonic
    assert np.all(np.diff(rec.accepted_J_T) <= 1e-12)
    assert [s[0] for s in rec.snapshots] == [2, 4]
    assert [s[0] for s in seen] == [1, 2, 3, 4]
    assert seen[-1][1] == rec.J_T[-1]
    assert rec.pulses_guess == guess and rec.pulses_final != guess
    assert rec.wall_time > 0


def test_retry_then_reject(desk_run, monkeypatch):
    p, guess, rho0 = desk_run
    values = iter([1.0] + [2.0] * (kr.MAX_RETRIES + 1))
    monkeypatch.setattr(kr, "functional", lambda rho, c: next(values))
    with pytest.warns(RuntimeWarning, match="retries"):
        rec = optimize(rho0, guess, KrotovConfig(1.0, 3.0, max_iters=5), p, DESK_C)
    last = rec.iterations[-1]
    assert len(rec.iterations) == 2
    assert not last.accepted and not last.monotonic and not rec.monotonic
    assert last.retries == kr.MAX_RETRIES
    assert (last.lambda_plus, last.lambda_minus) == (2.0**kr.MAX_RETRIES, 3.0 * 2.0**kr.MAX_RETRIES)
    assert rec.pulses_final == guess


def test_retry_recovers(desk_run, monkeypatch):
    p, guess, rho0 = desk_run
    values = iter([1.0, 2.0, 1.5, 0.9])
    monkeypatch.setattr(kr, "functional", lambda rho, c: next(values))
    rec = optimize(rho0, guess, KrotovConfig(1.0, 1.0, max_iters=1), p, DESK_C)
    last = rec.iterations[-1]
    assert last.accepted and last.retries == 2 and last.J_T == 0.9
    assert last.lambda_plus == 4.0


def test_divergent_update_raises(desk_run):
    p, guess, rho0 = desk_run
    lam = kr._initial_lambda(rho0, guess, p, DESK_C, Liouvillian(p, DESK_C, "rwa"))
    cfg = KrotovConfig(lam / 1e4, lam / 1e4, amplitude_cap=2 * GUESS_GM)
    with pytest.raises(KrotovStepError, match="increase lambda"):
        krotov_update_step(guess, rho0, cfg, p, DESK_C)


def test_amplitude_cap_clips(desk_run):
    p, guess, rho0 = desk_run
    cap = 1.01 * GUESS_GM
    new, _ = krotov_update_step(guess, rho0, KrotovConfig(amplitude_cap=cap), p, DESK_C)
    assert new.max_amplitude() <= cap


def test_full_evaluation_exceeds_rwa(device):
    c = FockCutoffs(4, 24)
    gm = TWO_PI * 70e3
    grid = make_grid(device.kappa_time, device, gm, "rwa")
    pulses = PulsePair.constant(grid, 0.86 * gm, gm)
    rho0 = initial_state(device.n_th, c)
    rwa = evaluate(rho0, pulses, device, c, "rwa")
    full = evaluate(rho0, pulses, device, c, "full")
    assert full.times[-1] == pytest.approx(rwa.times[-1])
    assert len(full.times) > len(rwa.times)  # resampled for the counter-rotating terms
    assert full.J_T > rwa.J_T
    assert full.max_db < rwa.max_db
