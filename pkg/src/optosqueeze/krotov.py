"""First-order Krotov optimization of the two drive envelopes.

The figure of merit is the terminal variance ``J_T = ⟨X1²⟩ - ⟨X1⟩²`` of the
resonator.  One iteration propagates the costate ``χ`` backward under the
old pulses and then sweeps forward, updating each control sample before the
state is advanced through it.  The running cost penalizes the change from the
previous iteration only, so an unchanged pulse costs nothing.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import expectation, squeezing_db, variance
from .errors import KrotovStepError
from .fock import FockCutoffs, quadrature_ops
from .model import Liouvillian, PulsePair, SystemParams, _check_mode
from .propagator import (
    check_step_size,
    propagate_backward,
    propagate_forward,
    required_steps,
    rk4_step,
    STABILITY_LIMIT,
)

#: Fraction of the guess G- that the first update may change a sample by.
FIRST_STEP_FRACTION = 0.05
MAX_RETRIES = 5
MONOTONIC_TOL = 1e-12


@dataclass(frozen=True)
class KrotovConfig:
    """Step-size weights and stopping rules.

    ``lambda_a_plus``/``lambda_a_minus`` left as ``None`` are chosen from the
    first gradient so that the largest update is ``FIRST_STEP_FRACTION`` of
    the guess ``G-``.
    """

    lambda_a_plus: float | None = None
    lambda_a_minus: float | None = None
    max_iters: int = 50
    stop_delta_J: float = 1e-9
    amplitude_cap: float | None = None
    mode: str = "rwa"
    snapshot_every: int = 0

    def __post_init__(self):
        _check_mode(self.mode)
        for name in ("lambda_a_plus", "lambda_a_minus"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.stop_delta_J > 0:
            raise ValueError("stop_delta_J must be > 0")
        if self.amplitude_cap is not None and not self.amplitude_cap > 0:
            raise ValueError("amplitude_cap must be > 0 when given")


@dataclass(frozen=True)
class IterationInfo:
    iteration: int
    J_T: float
    J_t: float
    monotonic: bool
    accepted: bool
    lambda_plus: float
    lambda_minus: float
    retries: int = 0


@dataclass
class OptimizationRecord:
    pulses_guess: PulsePair
    pulses_final: PulsePair
    iterations: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    @property
    def J_T(self) -> np.ndarray:
        return np.array([it.J_T for it in self.iterations])

    @property
    def accepted_J_T(self) -> np.ndarray:
        return np.array([it.J_T for it in self.iterations if it.accepted])

    @property
    def monotonic(self) -> bool:
        return all(it.monotonic for it in self.iterations)


def functional(rho, cutoffs: FockCutoffs) -> float:
    """Terminal cost ``J_T``: the ``X1`` variance of ``rho``."""
    return variance(rho, quadrature_ops(cutoffs)[0])


def terminal_costate(rhoT, cutoffs: FockCutoffs) -> np.ndarray:
    """``χ(T) = -∇_ρ J_T = -(X1² - 2⟨X1⟩ X1)``."""
    x1 = quadrature_ops(cutoffs)[0]
    m = expectation(rhoT, x1)
    chi = -(x1 @ x1) + 2.0 * m * x1
    return 0.5 * (chi + chi.conj().T)


def _sensitivity(chi, rho, ops) -> np.ndarray:
    """``Re tr(χ ∂𝔏/∂G ρ)`` for each control operator in ``ops``."""
    out = np.empty(len(ops))
    for i, op in enumerate(ops):
        lg = -1j * (op @ rho - rho @ op)
        out[i] = np.vdot(chi, lg).real
    return out


class _Stepper:
    """Forward steps with the sub-step count tied to the local amplitude."""

    def __init__(self, liou: Liouvillian):
        self.liou = liou
        self.c0 = liou.norm_bound(0.0)
        self.c1 = liou.norm_bound(1.0) - self.c0

    def __call__(self, rho, gp, gm, t, dt):
        bound = self.c0 + self.c1 * max(abs(gp), abs(gm))
        m = max(1, math.ceil(dt * bound / STABILITY_LIMIT))
        h = dt / m
        for j in range(m):
            rho = rk4_step(self.liou, rho, gp, gm, t + j * h, h)
        return rho


def _costates(pulses, rhoT, params, cutoffs, liou):
    chiT = terminal_costate(rhoT, cutoffs)
    return propagate_backward(chiT, pulses, params, cutoffs, liou.mode, liouvillian=liou).states


def gradient(rho0, pulses: PulsePair, params: SystemParams, cutoffs: FockCutoffs, mode: str = "rwa"):
    """``∂J_T/∂G±[k]`` for every piecewise-constant sample, shape ``(2, n)``.

    Row 0 is ``G+``, row 1 is ``G-``.  Each entry is Simpson's rule over its
    interval of ``-tr(χ ∂𝔏/∂G ρ)``, with midpoint values taken from a
    propagation on the grid refined by two.
    """
    liou = Liouvillian(params, cutoffs, mode)
    fine = pulses.resampled(2 * pulses.grid.n_steps)
    rhos = propagate_forward(rho0, fine, params, cutoffs, mode, liouvillian=liou, check=False).states
    chis = _costates(fine, rhos[-1], params, cutoffs, liou)
    t = fine.grid.times
    s = np.array([_sensitivity(chis[k], rhos[k], liou.controls(t[k])) for k in range(len(t))]).T
    return -(pulses.grid.dt / 6.0) * (s[:, 0:-1:2] + 4.0 * s[:, 1::2] + s[:, 2::2])


def _initial_lambda(rho0, pulses, params, cutoffs, liou, chis=None):
    rhos = propagate_forward(rho0, pulses, params, cutoffs, liou.mode, liouvillian=liou, check=False).states
    if chis is None:
        chis = _costates(pulses, rhos[-1], params, cutoffs, liou)
    t = pulses.grid.times
    s = np.array([_sensitivity(chis[k], rhos[k], liou.controls(t[k])) for k in range(len(t))])
    peak = float(np.max(np.abs(s)))
    scale = FIRST_STEP_FRACTION * max(abs(pulses.mean_g_minus()), pulses.max_amplitude())
    if peak == 0.0 or scale == 0.0:
        return math.inf
    return peak / scale


def _sweep(rho0, pulses, chis, lam, config, liou, stepper):
    """Forward sweep; returns new pulses, final state and the running cost."""
    grid = pulses.grid
    t, dt, n = grid.times, grid.dt, grid.n_steps
    gp, gm = pulses.g_plus.copy(), pulses.g_minus.copy()
    inv = np.array([0.0 if math.isinf(x) else 1.0 / x for x in lam])
    rho = np.array(rho0, dtype=complex)
    ops_now = liou.controls(t[0])
    running = 0.0
    for k in range(n):
        ops_next = liou.controls(t[k + 1])
        s0 = _sensitivity(chis[k], rho, ops_now)
        # one fixed-point pass: predict ρ(t_{k+1}) with the old sample
        pred = stepper(rho, gp[k], gm[k], t[k], dt)
        s1 = _sensitivity(chis[k + 1], pred, ops_next)
        delta = inv * 0.5 * (s0 + s1)
        if not np.all(np.isfinite(delta)):
            raise KrotovStepError(f"non-finite update at t={t[k]:.3e}s; increase lambda")
        if config.amplitude_cap is not None and np.max(np.abs(delta)) > 10.0 * config.amplitude_cap:
            raise KrotovStepError(
                f"update {np.max(np.abs(delta)):.3e} rad/s exceeds 10x the amplitude cap; increase lambda"
            )
        if np.any(delta):
            gp[k] += delta[0]
            gm[k] += delta[1]
            if config.amplitude_cap is not None:
                gp[k] = np.clip(gp[k], -config.amplitude_cap, config.amplitude_cap)
                gm[k] = np.clip(gm[k], -config.amplitude_cap, config.amplitude_cap)
            rho = stepper(rho, gp[k], gm[k], t[k], dt)
        else:
            rho = pred
        running += dt * (lam[0] * (gp[k] - pulses.g_plus[k]) ** 2 if inv[0] else 0.0)
        running += dt * (lam[1] * (gm[k] - pulses.g_minus[k]) ** 2 if inv[1] else 0.0)
        ops_now = ops_next
    gp[n], gm[n] = gp[n - 1], gm[n - 1]
    return PulsePair(grid, gp, gm), rho, running


def krotov_update_step(
    pulses: PulsePair,
    rho0,
    config: KrotovConfig,
    params: SystemParams,
    cutoffs: FockCutoffs,
    *,
    lambdas=None,
    _liou=None,
    _chis=None,
):
    """One Krotov iteration without the retry policy.

    Returns the new pulses and an :class:`IterationInfo` (index 1) whose
    ``J_T`` is the terminal variance under the new pulses.
    """
    check_step_size(pulses, params, config.mode)
    liou = _liou or Liouvillian(params, cutoffs, config.mode)
    if _chis is None:
        rhoT = propagate_forward(rho0, pulses, params, cutoffs, config.mode, liouvillian=liou, check=False).final
        _chis = _costates(pulses, rhoT, params, cutoffs, liou)
    if lambdas is None:
        lam0 = None
        if config.lambda_a_plus is None or config.lambda_a_minus is None:
            lam0 = _initial_lambda(rho0, pulses, params, cutoffs, liou, _chis)
        lambdas = (config.lambda_a_plus or lam0, config.lambda_a_minus or lam0)
    new, rhoT, J_t = _sweep(rho0, pulses, _chis, lambdas, config, liou, _Stepper(liou))
    info = IterationInfo(1, functional(rhoT, cutoffs), J_t, True, True, *lambdas)
    return new, info


def optimize(
    rho0,
    guess: PulsePair,
    config: KrotovConfig,
    params: SystemParams,
    cutoffs: FockCutoffs,
    *,
    callback=None,
) -> OptimizationRecord:
    """Iterate Krotov updates from ``guess``.

    Stops after ``max_iters`` or once ``|ΔJ_T| < stop_delta_J``.  An
    iteration that raises ``J_T`` is retried with both weights doubled, up to
    ``MAX_RETRIES`` times; if it still fails the record is flagged
    non-monotonic, the last accepted pulses are kept and iteration stops.
    """
    start = time.perf_counter()
    check_step_size(guess, params, config.mode)
    liou = Liouvillian(params, cutoffs, config.mode)
    stepper = _Stepper(liou)
    rhoT = propagate_forward(rho0, guess, params, cutoffs, config.mode, liouvillian=liou).final
    J = functional(rhoT, cutoffs)
    chis = _costates(guess, rhoT, params, cutoffs, liou)
    lam0 = None
    if config.lambda_a_plus is None or config.lambda_a_minus is None:
        lam0 = _initial_lambda(rho0, guess, params, cutoffs, liou, chis)
    lam = [config.lambda_a_plus or lam0, config.lambda_a_minus or lam0]
    record = OptimizationRecord(guess, guess)
    record.iterations.append(IterationInfo(0, J, 0.0, True, True, *lam))
    pulses = guess
    for it in range(1, config.max_iters + 1):
        for retry in range(MAX_RETRIES + 1):
            new, rhoT_new, J_t = _sweep(rho0, pulses, chis, lam, config, liou, stepper)
            J_new = functional(rhoT_new, cutoffs)
            if J_new <= J + MONOTONIC_TOL:
                break
            if retry < MAX_RETRIES:
                lam = [2.0 * x for x in lam]
        ok = J_new <= J + MONOTONIC_TOL
        record.iterations.append(IterationInfo(it, J_new, J_t, ok, ok, *lam, retries=retry))
        if not ok:
            warnings.warn(
                f"J_T increased at iteration {it} after {MAX_RETRIES} retries; keeping previous pulses",
                RuntimeWarning,
                stacklevel=2,
            )
            break
        dJ = J - J_new
        pulses, J = new, J_new
        if callback is not None:
            callback(it, pulses, J)
        if config.snapshot_every and it % config.snapshot_every == 0:
            record.snapshots.append((it, pulses))
        if abs(dJ) < config.stop_delta_J:
            record.converged = True
            break
        chis = _costates(pulses, rhoT_new, params, cutoffs, liou)
    record.pulses_final = pulses
    record.wall_time = time.perf_counter() - start
    return record


@dataclass(frozen=True)
class Evaluation:
    times: np.ndarray
    var_x1: np.ndarray
    mode: str

    @property
    def J_T(self) -> float:
        return float(self.var_x1[-1])

    @property
    def max_db(self) -> float:
        return squeezing_db(float(self.var_x1.min()))


def evaluate(
    rho0,
    pulses: PulsePair,
    params: SystemParams,
    cutoffs: FockCutoffs,
    mode: str = "full",
    *,
    stored_every: int = 1,
) -> Evaluation:
    """Propagate ``pulses`` in ``mode`` and return ``ΔX1²(t)``.

    Pulses are refined by an integer factor when their grid is too coarse
    for ``mode`` (typically when RWA-optimized pulses are checked with the
    counter-rotating terms included).
    """
    n = pulses.grid.n_steps
    need = required_steps(pulses.grid.T, params, pulses.max_amplitude(), mode)
    if need > n:
        pulses = pulses.resampled(n * math.ceil(need / n))
    traj = propagate_forward(rho0, pulses, params, cutoffs, mode, stored_every=stored_every)
    x1 = quadrature_ops(cutoffs)[0]
    var = np.array([variance(r, x1) for r in traj.states])
    return Evaluation(traj.times, var, mode)
