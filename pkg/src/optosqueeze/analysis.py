"""Observables: quadrature variances, reduced states, purity and squeezing."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SqueezeParameterError
from .fock import FockCutoffs, quadrature_ops

ZERO_POINT = 0.5
NEGATIVE_VARIANCE_TOL = 1e-10


def expectation(rho, op) -> float:
    return float(np.real(np.einsum("ij,ji->", rho, op)))


def variance(rho, op) -> float:
    """``<A²> - <A>²`` for Hermitian ``A``; roundoff negatives are clamped to zero."""
    rho = np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape:
        raise ShapeError(f"state {rho.shape} and operator {op.shape} differ")
    if np.max(np.abs(op - op.conj().T)) > 1e-12:
        raise ValueError("variance requires a Hermitian operator")
    mean = expectation(rho, op)
    var = expectation(rho, op @ op) - mean**2
    if var < 0:
        if var < -NEGATIVE_VARIANCE_TOL:
            raise ValueError(f"negative variance {var:.3e}: state is not physical")
        warnings.warn(f"clamping roundoff variance {var:.1e} to zero", stacklevel=2)
        var = 0.0
    return var


def partial_trace(rho, keep: str, cutoffs: FockCutoffs) -> np.ndarray:
    """Reduced state of ``"cavity"`` or ``"mech"`` (cavity index is the slow one)."""
    nc, nm = cutoffs.n_cav, cutoffs.n_mech
    r = np.asarray(rho).reshape(nc, nm, nc, nm)
    if keep == "cavity":
        return np.einsum("ijkj->ik", r)
    if keep == "mech":
        return np.einsum("ijil->jl", r)
    raise ValueError(f"keep must be 'cavity' or 'mech', got {keep!r}")


def purity(rho) -> float:
    """``tr ρ²``."""
    rho = np.asarray(rho)
    return float(np.real(np.einsum("ij,ji->", rho, rho)))


def squeezing_db(var_x1: float) -> float:
    """Squeezing relative to the zero-point variance; positive means squeezed."""
    if not var_x1 > 0:
        raise ValueError(f"variance must be > 0, got {var_x1}")
    return -10.0 * math.log10(var_x1 / ZERO_POINT)


def db_to_variance(db: float) -> float:
    return ZERO_POINT * 10.0 ** (-db / 10.0)


def squeeze_parameter(gp: float, gm: float) -> float:
    """Bogoliubov parameter ``r = artanh(G+/G-)``."""
    if not (gm > 0 and abs(gp) < gm):
        raise SqueezeParameterError(f"need |G+| < G-, got G+={gp}, G-={gm}")
    return math.atanh(gp / gm)


def effective_coupling(gp: float, gm: float) -> float:
    """``sqrt(G-² - G+²)``, the cooling rate of the Bogoliubov mode."""
    if not (gm > 0 and abs(gp) < gm):
        raise SqueezeParameterError(f"need |G+| < G-, got G+={gp}, G-={gm}")
    return math.sqrt(gm * gm - gp * gp)


def gaussian_purity(cov) -> float:
    """Purity of a Gaussian state from its symmetrized covariance (vacuum = I/2)."""
    cov = np.asarray(cov)
    n_modes = cov.shape[0] // 2
    return float(1.0 / (2.0**n_modes * math.sqrt(np.linalg.det(cov))))


@dataclass(frozen=True)
class SqueezeMetrics:
    var_x1: float
    var_x2: float
    db: float
    r: float
    eff_coupling: float
    purity_mech: float
    purity_cav: float
    purity_total: float


def metrics(state, gp=None, gm=None, cutoffs: FockCutoffs | None = None) -> SqueezeMetrics:
    """Squeezing summary for a density matrix (needs ``cutoffs``) or a GaussianState.

    ``r`` and ``eff_coupling`` are computed when both amplitudes are given
    and ``nan`` otherwise.
    """
    from .moments import GaussianState

    if isinstance(state, GaussianState):
        cov = state.cov
        v1, v2 = float(cov[0, 0]), float(cov[1, 1])
        p_mech = gaussian_purity(cov[:2, :2])
        p_cav = gaussian_purity(cov[2:, 2:])
        p_tot = gaussian_purity(cov)
    else:
        if cutoffs is None:
            raise ValueError("cutoffs are required for density-matrix metrics")
        x1, x2, _, _ = quadrature_ops(cutoffs)
        v1, v2 = variance(state, x1), variance(state, x2)
        p_mech = purity(partial_trace(state, "mech", cutoffs))
        p_cav = purity(partial_trace(state, "cavity", cutoffs))
        p_tot = purity(state)
    if gp is None or gm is None:
        r = eff = math.nan
    else:
        r = squeeze_parameter(gp, gm)
        eff = effective_coupling(gp, gm)
    return SqueezeMetrics(v1, v2, squeezing_db(v1), r, eff, p_mech, p_cav, p_tot)
