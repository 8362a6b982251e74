"""Gaussian moment oracle for the quadratures ``(X1, X2, Y1, Y2)``.

The dynamics are quadratic with linear jump operators, so first and second
moments close exactly:

    dm/dt = A(t) m + f(t)
    dV/dt = A(t) V + V A(t)ᵀ + D

``V`` is the symmetrized covariance (vacuum ``V = I/2``).  The covariance
equation never sees ``f``; any linear drive therefore leaves the variances
untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SteadyStateError
from .model import PulsePair, SystemParams, TimeGrid, _check_mode
from .propagator import check_step_size

# Symplectic form for [X1, X2] = [Y1, Y2] = i in (X1, X2, Y1, Y2) order.
SYMPLECTIC = np.array(
    [[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]]
)


def _unit(i, j):
    e = np.zeros((4, 4))
    e[i, j] = 1.0
    return e


# A = damping + Ḡ·(GBAR + c·GBAR_C + s·GBAR_S) + ΔG·(DG + c·DG_C + s·DG_S)
# with c = cos 2Ωt, s = sin 2Ωt, Ḡ = G- + G+, ΔG = G- - G+.
_GBAR = _unit(1, 2) + _unit(3, 0)
_DG = -_unit(0, 3) - _unit(2, 1)
_GBAR_C = _unit(1, 2) + _unit(3, 0)
_GBAR_S = -_unit(0, 2) + _unit(3, 1)
_DG_C = _unit(0, 3) + _unit(2, 1)
_DG_S = _unit(1, 3) - _unit(2, 0)


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(4)
        cov = np.array(self.cov, dtype=float).reshape(4, 4)
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(cov) < 0):
            raise ValueError("covariance has negative variances")
        if np.linalg.eigvalsh(cov + 0.5j * SYMPLECTIC)[0] < -1e-9:
            raise ValueError("covariance violates the uncertainty relation")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def thermal(cls, n_th_mech: float, n_th_cav: float = 0.0) -> "GaussianState":
        """Resonator thermal with ``n_th_mech`` quanta, cavity thermal (default vacuum)."""
        return cls(np.zeros(4), np.diag([n_th_mech + 0.5] * 2 + [n_th_cav + 0.5] * 2))

    @property
    def var_x1(self) -> float:
        return float(self.cov[0, 0])

    @property
    def var_x2(self) -> float:
        return float(self.cov[1, 1])


@dataclass(frozen=True)
class GaussianGenerator:
    drift: np.ndarray
    diffusion: np.ndarray
    force: np.ndarray


def damping_matrix(params: SystemParams) -> np.ndarray:
    return np.diag([-params.Gamma / 2] * 2 + [-params.kappa / 2] * 2)


def diffusion_matrix(params: SystemParams) -> np.ndarray:
    """``diag(Γ(n_th+½), Γ(n_th+½), κ/2, κ/2)``; the cavity bath is at zero temperature."""
    g = params.Gamma * (params.n_th + 0.5)
    return np.diag([g, g, params.kappa / 2, params.kappa / 2])


def drift_matrix(gp: float, gm: float, t: float, params: SystemParams, mode: str = "rwa") -> np.ndarray:
    _check_mode(mode)
    gbar, dg = gm + gp, gm - gp
    A = damping_matrix(params) + gbar * _GBAR + dg * _DG
    if mode == "full":
        c, s = math.cos(2 * params.Omega * t), math.sin(2 * params.Omega * t)
        A = A + gbar * (c * _GBAR_C + s * _GBAR_S) + dg * (c * _DG_C + s * _DG_S)
    return A


def radiation_force(
    gp: float,
    gm: float,
    t: float,
    params: SystemParams,
    *,
    dgp_dt: float = 0.0,
    dgm_dt: float = 0.0,
    n_cav_mean: float = 0.0,
) -> np.ndarray:
    """Linear drive on the means from the displacement-frame drive terms.

    Radiation pressure acts on the resonator with strength
    ``√2/g0 (G+² + G-² + 2G+G- cos 2Ωt) + √2 g0 <d†d>`` and the pulse
    derivatives drive the cavity.  ``n_cav_mean`` is held constant.
    """
    g0 = params.g0
    w = params.Omega
    rf = math.sqrt(2.0) / g0 * (gp * gp + gm * gm + 2 * gp * gm * math.cos(2 * w * t))
    rf += math.sqrt(2.0) * g0 * n_cav_mean
    alpha_bar = -math.sqrt(2.0) / g0 * (dgm_dt + dgp_dt)
    alpha_delta = -math.sqrt(2.0) / g0 * (dgm_dt - dgp_dt)
    return np.array(
        [-rf * math.sin(w * t), rf * math.cos(w * t), alpha_bar * math.cos(w * t), alpha_delta * math.sin(w * t)]
    )


def build_generator(
    gp: float,
    gm: float,
    t: float,
    params: SystemParams,
    mode: str = "rwa",
    include_force: bool = False,
    **force_kw,
) -> GaussianGenerator:
    force = radiation_force(gp, gm, t, params, **force_kw) if include_force else np.zeros(4)
    return GaussianGenerator(drift_matrix(gp, gm, t, params, mode), diffusion_matrix(params), force)


# --- time evolution ---------------------------------------------------------

def _cov_rhs(A, V, D):
    AV = A @ V
    return AV + np.swapaxes(AV, -1, -2) + D


def evolve_covariance_batch(
    g_plus,
    g_minus,
    grid: TimeGrid,
    params: SystemParams,
    mode: str = "rwa",
    cov0=None,
    *,
    keep: str = "var_x1",
):
    """RK4 covariance flow for ``B`` pulse pairs sharing one grid.

    ``g_plus``/``g_minus`` have shape ``(B, n_steps + 1)``.  ``keep`` selects
    the output: ``"var_x1"`` -> ``(B, n+1)``, ``"var"`` -> ``(B, n+1, 2)`` with
    both resonator variances, ``"cov"`` -> ``(B, n+1, 4, 4)``.
    """
    _check_mode(mode)
    gp = np.atleast_2d(np.asarray(g_plus, dtype=float))
    gm = np.atleast_2d(np.asarray(g_minus, dtype=float))
    B, n1 = gp.shape
    if n1 != grid.n_steps + 1 or gm.shape != gp.shape:
        raise ValueError("pulse arrays must have shape (B, n_steps + 1)")
    if cov0 is None:
        cov0 = GaussianState.thermal(params.n_th).cov
    D = diffusion_matrix(params)
    V = np.broadcast_to(np.asarray(cov0, dtype=float), (B, 4, 4)).copy()
    dt = grid.dt
    gbar_all = gm + gp
    dg_all = gm - gp

    def take(V):
        if keep == "var_x1":
            return V[:, 0, 0].copy()
        if keep == "var":
            return V[:, [0, 1], [0, 1]].copy()
        return V.copy()

    out = [take(V)]
    A0 = damping_matrix(params)

    def drift(gb, gd, t):
        if mode == "rwa":
            Mb, Md = _GBAR, _DG
        else:
            c, s = math.cos(2 * params.Omega * t), math.sin(2 * params.Omega * t)
            Mb = _GBAR + c * _GBAR_C + s * _GBAR_S
            Md = _DG + c * _DG_C + s * _DG_S
        return A0 + gb * Mb + gd * Md

    for k in range(grid.n_steps):
        t = k * dt
        gb, gd = gbar_all[:, k, None, None], dg_all[:, k, None, None]
        Ak = drift(gb, gd, t)
        if mode == "rwa":
            Ah = A1 = Ak
        else:
            Ah = drift(gb, gd, t + 0.5 * dt)
            A1 = drift(gb, gd, t + dt)
        k1 = _cov_rhs(Ak, V, D)
        k2 = _cov_rhs(Ah, V + (0.5 * dt) * k1, D)
        k3 = _cov_rhs(Ah, V + (0.5 * dt) * k2, D)
        k4 = _cov_rhs(A1, V + dt * k3, D)
        V = V + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        out.append(take(V))
    return np.stack(out, axis=1)


@dataclass
class MomentTrajectory:
    """Means ``(n+1, 4)`` and covariances ``(n+1, 4, 4)`` at grid nodes."""

    grid: TimeGrid
    means: np.ndarray
    covs: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def var_x1(self) -> np.ndarray:
        return self.covs[:, 0, 0]

    @property
    def var_x2(self) -> np.ndarray:
        return self.covs[:, 1, 1]

    def __len__(self):
        return len(self.covs)

    def __getitem__(self, i) -> GaussianState:
        return GaussianState(self.means[i], self.covs[i])


def evolve_moments(
    gs0: GaussianState,
    pulses: PulsePair,
    params: SystemParams,
    mode: str = "rwa",
    include_force: bool = False,
    *,
    force=None,
    n_cav_mean: float = 0.0,
) -> MomentTrajectory:
    """Propagate means and covariance on ``pulses.grid``.

    With ``include_force`` the displacement-frame drive of
    :func:`radiation_force` acts on the means (pulse derivatives from finite
    differences of the samples).  ``force`` may instead be any callable
    ``t -> 4-vector``.
    """
    check_step_size(pulses, params, mode)
    grid = pulses.grid
    covs = evolve_covariance_batch(
        pulses.g_plus[None], pulses.g_minus[None], grid, params, mode, gs0.cov, keep="cov"
    )[0]

    if force is None and include_force:
        dgp = np.gradient(pulses.g_plus, grid.dt)
        dgm = np.gradient(pulses.g_minus, grid.dt)

        def force(t, k):
            return radiation_force(
                pulses.g_plus[k], pulses.g_minus[k], t, params, dgp_dt=dgp[k], dgm_dt=dgm[k], n_cav_mean=n_cav_mean
            )
    elif force is not None:
        user_force = force

        def force(t, k):
            return np.asarray(user_force(t), dtype=float)

    dt = grid.dt
    m = gs0.mean.copy()
    means = [m.copy()]
    for k in range(grid.n_steps):
        t = k * dt
        gp, gm = pulses.g_plus[k], pulses.g_minus[k]
        A0 = drift_matrix(gp, gm, t, params, mode)
        Ah = A0 if mode == "rwa" else drift_matrix(gp, gm, t + 0.5 * dt, params, mode)
        A1 = A0 if mode == "rwa" else drift_matrix(gp, gm, t + dt, params, mode)
        if force is None:
            f0 = fh = f1 = 0.0
        else:
            f0, fh, f1 = force(t, k), force(t + 0.5 * dt, k), force(t + dt, k)
        k1 = A0 @ m + f0
        k2 = Ah @ (m + 0.5 * dt * k1) + fh
        k3 = Ah @ (m + 0.5 * dt * k2) + fh
        k4 = A1 @ (m + dt * k3) + f1
        m = m + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        means.append(m.copy())
    return MomentTrajectory(grid, np.array(means), covs)


def lyapunov_solve(A, D) -> np.ndarray:
    """Solve ``A V + V Aᵀ + D = 0`` by Kronecker linearization."""
    n = A.shape[0]
    eye = np.eye(n)
    M = np.kron(eye, A) + np.kron(A, eye)
    V = np.linalg.solve(M, -np.asarray(D).reshape(-1)).reshape(n, n)
    return 0.5 * (V + V.T)


def steady_state(gp: float, gm: float, params: SystemParams, mode: str = "rwa") -> GaussianState:
    """Stationary state under constant RWA amplitudes."""
    if mode != "rwa":
        raise ValueError("steady states exist only for the time-independent rwa generator")
    A = drift_matrix(gp, gm, 0.0, params, "rwa")
    eig = np.linalg.eigvals(A)
    if np.max(eig.real) >= 0:
        raise SteadyStateError(f"drift is not Hurwitz (max Re λ = {np.max(eig.real):.3e})")
    return GaussianState(np.zeros(4), lyapunov_solve(A, diffusion_matrix(params)))
