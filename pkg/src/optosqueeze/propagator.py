"""Fixed-step RK4 propagation of density matrices and Krotov costates.

Controls are piecewise constant: step ``k`` uses the node-``k`` samples of
both envelopes.  In "full" mode the ``2Ω`` phases are evaluated at the RK4
stage times (step start, midpoint, end).

The grid must resolve the physical timescales (:func:`required_steps`).
High Fock levels add generator eigenvalues far beyond those rates, so each
control step is split into :func:`substeps` equal RK4 steps whenever
``dt * ||𝔏||`` would exceed ``STABILITY_LIMIT``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError, StepSizeError
from .fock import FockCutoffs
from .model import TWO_PI, Liouvillian, PulsePair, SystemParams, TimeGrid, linear_drive

SAMPLES_PER_TIMESCALE = 20
TRACE_TOL = 1e-8
NEG_EIG_TOL = 1e-6
STABILITY_LIMIT = 2.0


def fastest_rate(params: SystemParams, max_amplitude: float, mode: str) -> float:
    rate = max(params.kappa, max_amplitude)
    if mode == "full":
        rate = max(rate, 2.0 * params.Omega)
    return rate


def required_steps(T: float, params: SystemParams, max_amplitude: float, mode: str) -> int:
    """Smallest ``n_steps`` with ``dt <= (2π/20) / fastest rate``."""
    rate = fastest_rate(params, max_amplitude, mode)
    if rate == 0:
        return 1
    # the small slack keeps exact multiples from rounding up
    return max(1, math.ceil(T * rate / (TWO_PI / SAMPLES_PER_TIMESCALE) - 1e-9))


def check_step_size(pulses: PulsePair, params: SystemParams, mode: str) -> None:
    need = required_steps(pulses.grid.T, params, pulses.max_amplitude(), mode)
    if pulses.grid.n_steps < need:
        raise StepSizeError(
            f"{pulses.grid.n_steps} steps are too coarse for mode={mode!r}; need n_steps >= {need}",
            need,
        )


def make_grid(T: float, params: SystemParams, max_amplitude: float, mode: str, min_steps: int = 1) -> TimeGrid:
    """Coarsest grid on ``[0, T]`` that satisfies the step-size rule."""
    return TimeGrid(T, max(min_steps, required_steps(T, params, max_amplitude, mode)))


def substeps(liou: Liouvillian, dt: float, max_amplitude: float) -> int:
    """RK4 substeps per control step needed to keep ``dt·||𝔏|| <= STABILITY_LIMIT``."""
    return max(1, math.ceil(dt * liou.norm_bound(max_amplitude) / STABILITY_LIMIT))


@dataclass
class Trajectory:
    """States (or costates) at every ``stored_every``-th grid node."""

    grid: TimeGrid
    states: np.ndarray
    stored_every: int = 1

    @property
    def times(self) -> np.ndarray:
        return self.grid.times[:: self.stored_every]

    def __len__(self):
        return len(self.states)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _stage_times(t, dt):
    return (t, t + 0.5 * dt, t + dt)


def rk4_step(liou: Liouvillian, rho, gp, gm, t, dt, drive=None):
    """Advance ``dρ/dt = 𝔏ρ`` from ``t`` to ``t + dt`` at fixed controls.

    ``drive`` optionally maps time to a 4-vector force added through
    :func:`~optosqueeze.model.linear_drive`.
    """
    t0, th, t1 = _stage_times(t, dt)
    if liou.mode == "rwa" and drive is None:
        H = liou.hamiltonian(gp, gm, t0)
        H0 = Hh = H1 = H
    else:
        H0, Hh, H1 = (
            liou.hamiltonian(gp, gm, s, None if drive is None else linear_drive(drive(s), liou.cutoffs))
            for s in (t0, th, t1)
        )
    k1 = liou.apply(rho, H0)
    k2 = liou.apply(rho + 0.5 * dt * k1, Hh)
    k3 = liou.apply(rho + 0.5 * dt * k2, Hh)
    k4 = liou.apply(rho + dt * k3, H1)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_adjoint(liou: Liouvillian, chi, gp, gm, t_end, dt):
    """Advance ``dχ/dt = -𝔏†χ`` backward from ``t_end`` to ``t_end - dt``."""
    t1, th, t0 = t_end, t_end - 0.5 * dt, t_end - dt
    if liou.mode == "rwa":
        H = liou.hamiltonian(gp, gm, t1)
        H1 = Hh = H0 = H
    else:
        H1, Hh, H0 = (liou.hamiltonian(gp, gm, s) for s in (t1, th, t0))
    k1 = liou.apply_adjoint(chi, H1)
    k2 = liou.apply_adjoint(chi + 0.5 * dt * k1, Hh)
    k3 = liou.apply_adjoint(chi + 0.5 * dt * k2, Hh)
    k4 = liou.apply_adjoint(chi + dt * k3, H0)
    return chi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def check_state(rho, t, *, trace_tol=TRACE_TOL, eig_tol=NEG_EIG_TOL) -> None:
    drift = abs(np.trace(rho).real - 1.0)
    if drift > trace_tol:
        raise IntegrationError(f"trace drift {drift:.2e} at t={t:.3e}s exceeds {trace_tol:g}")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam < -eig_tol:
        raise IntegrationError(
            f"eigenvalue {lam:.2e} at t={t:.3e}s: state lost positivity (cutoffs too small?)"
        )


def propagate_forward(
    rho0,
    pulses: PulsePair,
    params: SystemParams,
    cutoffs: FockCutoffs,
    mode: str = "rwa",
    *,
    stored_every: int = 1,
    drive=None,
    check: bool = True,
    liouvillian: Liouvillian | None = None,
) -> Trajectory:
    """Solve the master equation on ``pulses.grid``.

    With ``check`` (default) the trace and lowest eigenvalue of every stored
    state are verified; pass ``check=False`` to propagate arbitrary matrices.
    """
    check_step_size(pulses, params, mode)
    liou = liouvillian or Liouvillian(params, cutoffs, mode)
    grid = pulses.grid
    dt = grid.dt
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (cutoffs.dim, cutoffs.dim):
        raise ValueError(f"initial state must be {cutoffs.dim}x{cutoffs.dim}, got {rho.shape}")
    m = substeps(liou, dt, pulses.max_amplitude())
    h = dt / m
    stored = [rho.copy()]
    for k in range(grid.n_steps):
        t = k * dt
        for j in range(m):
            rho = rk4_step(liou, rho, pulses.g_plus[k], pulses.g_minus[k], t + j * h, h, drive)
        if (k + 1) % stored_every == 0:
            if check:
                check_state(rho, t + dt)
            stored.append(rho.copy())
    return Trajectory(grid, np.array(stored), stored_every)


def propagate_backward(
    chiT,
    pulses: PulsePair,
    params: SystemParams,
    cutoffs: FockCutoffs,
    mode: str = "rwa",
    *,
    stored_every: int = 1,
    liouvillian: Liouvillian | None = None,
) -> Trajectory:
    """Solve ``dχ/dt = -𝔏†χ`` from ``χ(T) = chiT`` back to ``t = 0``.

    Stored states are in forward time order (index 0 is ``t = 0``).  No
    normalization is ever applied.
    """
    check_step_size(pulses, params, mode)
    chi = np.array(chiT, dtype=complex)
    if np.max(np.abs(chi - chi.conj().T)) > 1e-12:
        raise ValueError("terminal costate must be Hermitian")
    liou = liouvillian or Liouvillian(params, cutoffs, mode)
    grid = pulses.grid
    dt = grid.dt
    n = grid.n_steps
    m = substeps(liou, dt, pulses.max_amplitude())
    h = dt / m
    stored = [chi.copy()] if n % stored_every == 0 else []
    for k in range(n - 1, -1, -1):
        for j in range(m):
            chi = rk4_step_adjoint(liou, chi, pulses.g_plus[k], pulses.g_minus[k], (k + 1) * dt - j * h, h)
        if k % stored_every == 0:
            stored.append(chi.copy())
    return Trajectory(grid, np.array(stored[::-1]), stored_every)


#: Cutoffs are grown by this factor when checking convergence.
CUTOFF_GROWTH = 1.5
CUTOFF_RTOL = 1e-3


@dataclass(frozen=True)
class ConvergenceReport:
    cutoffs: FockCutoffs
    larger: FockCutoffs
    var_x1: float
    var_x1_larger: float

    @property
    def rel_change(self) -> float:
        return abs(self.var_x1_larger - self.var_x1) / abs(self.var_x1_larger)

    @property
    def converged(self) -> bool:
        return self.rel_change < CUTOFF_RTOL


def cutoff_convergence(pulses: PulsePair, params: SystemParams, cutoffs: FockCutoffs, mode: str = "rwa",
                       initial=None) -> ConvergenceReport:
    """Compare terminal ``ΔX1²`` at ``cutoffs`` and with both cutoffs grown by half.

    ``initial`` maps cutoffs to the initial density matrix (default: cavity
    vacuum and a thermal resonator).
    """
    from .analysis import variance
    from .fock import initial_state, quadrature_ops

    if initial is None:
        def initial(c):
            return initial_state(params.n_th, c)

    larger = FockCutoffs(math.ceil(CUTOFF_GROWTH * cutoffs.n_cav), math.ceil(CUTOFF_GROWTH * cutoffs.n_mech))
    out = []
    for c in (cutoffs, larger):
        rho = propagate_forward(initial(c), pulses, params, c, mode, stored_every=pulses.grid.n_steps).final
        out.append(variance(rho, quadrature_ops(c)[0]))
    return ConvergenceReport(cutoffs, larger, *out)
