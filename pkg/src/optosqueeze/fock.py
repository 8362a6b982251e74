"""Truncated bosonic operators on the cavity x resonator Fock space.

Index convention for the joint space: the cavity index is slow and the
mechanical index is fast, i.e. ``|n_cav, n_mech>`` sits at position
``n_cav * n_mech_cutoff + n_mech``.  Every matrix is dense.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CutoffError, ShapeError

#: Warn when the thermal tail cut away by truncation exceeds this.
THERMAL_DEFICIT_WARN = 1e-6


@dataclass(frozen=True)
class FockCutoffs:
    """Number of retained Fock levels for the cavity and the resonator."""

    n_cav: int
    n_mech: int

    def __post_init__(self):
        for name in ("n_cav", "n_mech"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise CutoffError(f"{name} must be an integer >= 2, got {value!r}")

    @property
    def dim(self) -> int:
        return self.n_cav * self.n_mech

    def index(self, n_cav: int, n_mech: int) -> int:
        """Joint-space position of the product basis state ``|n_cav, n_mech>``."""
        return n_cav * self.n_mech + n_mech

    def split(self, index: int) -> tuple[int, int]:
        """Inverse of :meth:`index`."""
        return divmod(index, self.n_mech)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def annihilation(n: int) -> np.ndarray:
    """Truncated annihilation operator with ``sqrt(k)`` on the superdiagonal."""
    if int(n) != n or n < 2:
        raise CutoffError(f"cutoff must be an integer >= 2, got {n!r}")
    return _frozen(np.diag(np.sqrt(np.arange(1, n, dtype=float)), k=1).astype(complex))


def embed(op: np.ndarray, subsystem: str, cutoffs: FockCutoffs) -> np.ndarray:
    """Lift a single-mode operator to the joint space.

    ``subsystem`` is ``"cavity"`` (``op ⊗ 1``) or ``"mech"`` (``1 ⊗ op``).
    """
    op = np.asarray(op)
    if subsystem == "cavity":
        n, other = cutoffs.n_cav, cutoffs.n_mech
    elif subsystem == "mech":
        n, other = cutoffs.n_mech, cutoffs.n_cav
    else:
        raise ValueError(f"subsystem must be 'cavity' or 'mech', got {subsystem!r}")
    if op.shape != (n, n):
        raise ShapeError(f"{subsystem} operator must be {n}x{n}, got {op.shape}")
    eye = np.eye(other)
    out = np.kron(op, eye) if subsystem == "cavity" else np.kron(eye, op)
    return _frozen(out.astype(complex))


def thermal_deficit(n_th: float, n: int) -> float:
    """Probability mass of a thermal state lying at levels ``>= n``."""
    if n_th == 0:
        return 0.0
    return (n_th / (n_th + 1.0)) ** n


def thermal_state(n_th: float, n: int) -> np.ndarray:
    """Truncated thermal state, renormalized to unit trace.

    Warns when the discarded tail (:func:`thermal_deficit`) exceeds
    ``THERMAL_DEFICIT_WARN``.
    """
    if n_th < 0:
        raise ValueError(f"n_th must be >= 0, got {n_th}")
    if int(n) != n or n < 2:
        raise CutoffError(f"cutoff must be an integer >= 2, got {n!r}")
    if n_th == 0:
        p = np.zeros(n)
        p[0] = 1.0
    else:
        q = n_th / (n_th + 1.0)
        p = q ** np.arange(n) / (n_th + 1.0)
        deficit = thermal_deficit(n_th, n)
        if deficit > THERMAL_DEFICIT_WARN:
            warnings.warn(
                f"thermal state n_th={n_th} truncated at {n} levels loses {deficit:.2e} "
                "of its population; increase the cutoff",
                stacklevel=2,
            )
        p = p / p.sum()
    return _frozen(np.diag(p).astype(complex))


def vacuum(n: int) -> np.ndarray:
    return thermal_state(0.0, n)


def initial_state(n_th: float, cutoffs: FockCutoffs) -> np.ndarray:
    """Cavity vacuum times resonator thermal state (the protocol's starting point)."""
    return _frozen(np.kron(vacuum(cutoffs.n_cav), thermal_state(n_th, cutoffs.n_mech)))


@dataclass(frozen=True)
class Operators:
    """Embedded ladder operators and quadratures for one set of cutoffs."""

    d: np.ndarray
    b: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    y1: np.ndarray
    y2: np.ndarray


@lru_cache(maxsize=16)
def operators(cutoffs: FockCutoffs) -> Operators:
    """Cached joint-space ``d``, ``b`` and the four quadratures."""
    d = embed(annihilation(cutoffs.n_cav), "cavity", cutoffs)
    b = embed(annihilation(cutoffs.n_mech), "mech", cutoffs)
    s = 1.0 / np.sqrt(2.0)
    x1 = _frozen(s * (b.conj().T + b))
    x2 = _frozen(1j * s * (b.conj().T - b))
    y1 = _frozen(s * (d.conj().T + d))
    y2 = _frozen(1j * s * (d.conj().T - d))
    return Operators(d=d, b=b, x1=x1, x2=x2, y1=y1, y2=y2)


def quadrature_ops(cutoffs: FockCutoffs) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Joint-space ``(X1, X2, Y1, Y2)``; X on the resonator, Y on the cavity."""
    ops = operators(cutoffs)
    return ops.x1, ops.x2, ops.y1, ops.y2


def check_density_matrix(rho: np.ndarray, *, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD within tolerance."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ShapeError(f"density matrix must be square, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.3e} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -eig_tol:
        raise ValueError("density matrix has negative eigenvalues")
