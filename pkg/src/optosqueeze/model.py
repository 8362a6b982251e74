"""System parameters, drive envelopes, Hamiltonians and the Lindblad generator.

Units: hbar = 1 and every frequency or rate is angular (rad/s).  The
linearized interaction-picture Hamiltonian is

    H(t) = G+(t) P(t) + G-(t) M(t)

with ``P = -(d†b† + db)`` and ``M = -(d†b + b†d)`` in the rotating-wave
approximation ("rwa").  The "full" mode adds the terms rotating at ``2Ω``,
``-(d†b e^{-2iΩt} + h.c.)`` to ``P`` and ``-(d†b† e^{2iΩt} + h.c.)`` to ``M``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import ShapeError
from .fock import FockCutoffs, operators

TWO_PI = 2.0 * math.pi
MODES = ("rwa", "full")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class SystemParams:
    """Physical rates of cavity and resonator, all in rad/s.

    ``kappa`` and ``Gamma`` may be zero (closed-system checks); the
    frequencies must be strictly positive.
    """

    omega_cav: float
    Omega: float
    g0: float
    kappa: float
    Gamma: float
    n_th: float

    def __post_init__(self):
        for name in ("omega_cav", "Omega", "g0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("kappa", "Gamma", "n_th"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.kappa / self.Omega > 0.5:
            warnings.warn(
                f"kappa/Omega = {self.kappa / self.Omega:.2f} > 0.5: far outside the "
                "resolved-sideband regime",
                stacklevel=3,
            )

    @classmethod
    def from_hz(cls, nu_cav, nu_mech, g0, kappa, Gamma, n_th):
        """Build from ordinary frequencies (Hz); each is multiplied by 2π."""
        return cls(
            omega_cav=TWO_PI * nu_cav,
            Omega=TWO_PI * nu_mech,
            g0=TWO_PI * g0,
            kappa=TWO_PI * kappa,
            Gamma=TWO_PI * Gamma,
            n_th=n_th,
        )

    @classmethod
    def device(cls) -> "SystemParams":
        """Experimental parameters used throughout (n_th = 2)."""
        return cls.from_hz(6.23e9, 3.6e6, 36.0, 450e3, 3.0, 2.0)

    def to_hz(self) -> dict:
        return {
            "nu_cav_hz": self.omega_cav / TWO_PI,
            "nu_mech_hz": self.Omega / TWO_PI,
            "g0_hz": self.g0 / TWO_PI,
            "kappa_hz": self.kappa / TWO_PI,
            "Gamma_hz": self.Gamma / TWO_PI,
            "n_th": self.n_th,
        }

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @property
    def kappa_time(self) -> float:
        """The cavity decay time 2π/κ in seconds."""
        return TWO_PI / self.kappa


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[0, T]`` with ``n_steps`` intervals."""

    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be > 0")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class PulsePair:
    """Real drive envelopes ``G+(t)``, ``G-(t)`` (rad/s) sampled on grid nodes.

    The value on step ``k`` (from ``t_k`` to ``t_{k+1}``) is the node-``k``
    sample; the final sample only matters for output.  The optical field
    amplitudes are ``G±/g0`` and the physical drive tones sit at
    ``ω_cav ± Ω``; neither is stored.
    """

    grid: TimeGrid
    g_plus: np.ndarray = field(repr=False)
    g_minus: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.grid.n_steps + 1
        for name in ("g_plus", "g_minus"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim == 0:
                a = np.full(n, float(a))
            if a.shape != (n,):
                raise ShapeError(f"{name} must have {n} samples, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite samples")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def constant(cls, grid: TimeGrid, g_plus: float, g_minus: float) -> "PulsePair":
        return cls(grid, np.full(grid.n_steps + 1, g_plus), np.full(grid.n_steps + 1, g_minus))

    def max_amplitude(self) -> float:
        return float(max(np.max(np.abs(self.g_plus)), np.max(np.abs(self.g_minus))))

    def mean_g_minus(self) -> float:
        """Time average of ``G-`` over the piecewise-constant steps."""
        return float(np.mean(self.g_minus[:-1]))

    def resampled(self, n_steps: int) -> "PulsePair":
        """Same piecewise-constant envelopes on a finer (integer multiple) grid."""
        if n_steps % self.grid.n_steps:
            raise ValueError("n_steps must be a multiple of the current number of steps")
        m = n_steps // self.grid.n_steps
        grid = TimeGrid(self.grid.T, n_steps)

        def up(a):
            return np.append(np.repeat(a[:-1], m), a[-1])

        return PulsePair(grid, up(self.g_plus), up(self.g_minus))

    def __eq__(self, other):
        if not isinstance(other, PulsePair):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.g_plus, other.g_plus)
            and np.array_equal(self.g_minus, other.g_minus)
        )


# --- Hamiltonians -----------------------------------------------------------

@lru_cache(maxsize=16)
def _blocks(cutoffs: FockCutoffs):
    ops = operators(cutoffs)
    d, b = ops.d, ops.b
    dd = d.conj().T
    bd = b.conj().T
    p_rwa = -(dd @ bd + d @ b)  # ∂H/∂G+ (two-mode squeezing)
    m_rwa = -(dd @ b + bd @ d)  # ∂H/∂G- (beam splitter)
    c_plus = -(dd @ b)  # multiplies e^{-2iΩt} in ∂H/∂G+
    c_minus = -(dd @ bd)  # multiplies e^{+2iΩt} in ∂H/∂G-
    for a in (p_rwa, m_rwa, c_plus, c_minus):
        a.setflags(write=False)
    return p_rwa, m_rwa, c_plus, c_minus


def control_operators(t: float, Omega: float, cutoffs: FockCutoffs, mode: str = "rwa"):
    """``(∂H/∂G+, ∂H/∂G-)`` at time ``t``; both Hermitian and independent of G."""
    _check_mode(mode)
    p_rwa, m_rwa, c_plus, c_minus = _blocks(cutoffs)
    if mode == "rwa":
        return p_rwa, m_rwa
    ph = np.exp(-2j * Omega * t)
    rot_p = c_plus * ph
    rot_m = c_minus * ph.conjugate()
    return p_rwa + rot_p + rot_p.conj().T, m_rwa + rot_m + rot_m.conj().T


def hamiltonian_rwa(gp: float, gm: float, cutoffs: FockCutoffs) -> np.ndarray:
    """``H = -[d†(G+ b† + G- b) + h.c.]``."""
    p, m = control_operators(0.0, 1.0, cutoffs, "rwa")
    return gp * p + gm * m


def counterrotating(gp: float, gm: float, t: float, Omega: float, cutoffs: FockCutoffs) -> np.ndarray:
    """The ``2Ω`` terms ``-d†(G+ b e^{-2iΩt} + G- b† e^{2iΩt}) + h.c.``."""
    _, _, c_plus, c_minus = _blocks(cutoffs)
    ph = np.exp(-2j * Omega * t)
    rot = gp * c_plus * ph + gm * c_minus * ph.conjugate()
    return rot + rot.conj().T


def hamiltonian_full(gp: float, gm: float, t: float, Omega: float, cutoffs: FockCutoffs) -> np.ndarray:
    """RWA Hamiltonian plus :func:`counterrotating` terms."""
    return hamiltonian_rwa(gp, gm, cutoffs) + counterrotating(gp, gm, t, Omega, cutoffs)


def hamiltonian(gp, gm, t, params: SystemParams, cutoffs: FockCutoffs, mode="rwa") -> np.ndarray:
    _check_mode(mode)
    if mode == "rwa":
        return hamiltonian_rwa(gp, gm, cutoffs)
    return hamiltonian_full(gp, gm, t, params.Omega, cutoffs)


def linear_drive(force, cutoffs: FockCutoffs) -> np.ndarray:
    """Hamiltonian that adds ``force`` to the quadrature means.

    ``force = (f_X1, f_X2, f_Y1, f_Y2)`` in rad/s.  The returned operator is
    ``f_X1 X2 - f_X2 X1 + f_Y1 Y2 - f_Y2 Y1``, so that
    ``d<X1>/dt = f_X1 + ...`` and likewise for the others.
    """
    ops = operators(cutoffs)
    fx1, fx2, fy1, fy2 = force
    return fx1 * ops.x2 - fx2 * ops.x1 + fy1 * ops.y2 - fy2 * ops.y1


def lindblad_ops(params: SystemParams, cutoffs: FockCutoffs):
    """Jump operators ``(√κ d, √(Γ n_th) b†, √(Γ(n_th+1)) b)``."""
    ops = operators(cutoffs)
    l1 = math.sqrt(params.kappa) * ops.d
    l2 = math.sqrt(params.Gamma * params.n_th) * ops.b.conj().T
    l3 = math.sqrt(params.Gamma * (params.n_th + 1.0)) * ops.b
    return l1, l2, l3


def liouvillian_apply(rho: np.ndarray, H: np.ndarray, jumps) -> np.ndarray:
    """``-i[H, ρ] + Σ (L ρ L† - ½{L†L, ρ})``."""
    rho = np.asarray(rho)
    if rho.shape != H.shape:
        raise ShapeError(f"state {rho.shape} and Hamiltonian {H.shape} differ")
    out = -1j * (H @ rho - rho @ H)
    for L in jumps:
        if L.shape != H.shape:
            raise ShapeError(f"jump operator {L.shape} does not match {H.shape}")
        Ld = L.conj().T
        LdL = Ld @ L
        out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def liouvillian_adjoint_apply(A: np.ndarray, H: np.ndarray, jumps) -> np.ndarray:
    """Heisenberg-picture generator: ``tr(A 𝔏ρ) = tr((𝔏†A) ρ)``."""
    out = 1j * (H @ A - A @ H)
    for L in jumps:
        Ld = L.conj().T
        LdL = Ld @ L
        out += Ld @ A @ L - 0.5 * (LdL @ A + A @ LdL)
    return out


def liouvillian_deriv(rho, which: str, mode: str, t: float, Omega: float, cutoffs: FockCutoffs) -> np.ndarray:
    """``(∂𝔏/∂G±) ρ = -i[∂H/∂G±, ρ]``; ``which`` is ``"plus"`` or ``"minus"``."""
    p, m = control_operators(t, Omega, cutoffs, mode)
    if which == "plus":
        dh = p
    elif which == "minus":
        dh = m
    else:
        raise ValueError(f"which must be 'plus' or 'minus', got {which!r}")
    return -1j * (dh @ rho - rho @ dh)


class Liouvillian:
    """Precomputed Lindblad generator for repeated application.

    Uses the effective non-Hermitian Hamiltonian ``H - (i/2) Σ L†L`` so one
    application costs two products plus one sandwich per jump operator.
    """

    def __init__(self, params: SystemParams, cutoffs: FockCutoffs, mode: str = "rwa"):
        _check_mode(mode)
        self.params = params
        self.cutoffs = cutoffs
        self.mode = mode
        self.jumps = [L for L in lindblad_ops(params, cutoffs) if np.any(L)]
        self.jumps_dag = [L.conj().T for L in self.jumps]
        dim = cutoffs.dim
        self.damping = sum((Ld @ L for L, Ld in zip(self.jumps, self.jumps_dag)), np.zeros((dim, dim), complex))
        self._p_rwa, self._m_rwa, self._c_plus, self._c_minus = _blocks(cutoffs)

    def norm_bound(self, max_amplitude: float) -> float:
        """Upper bound on the superoperator norm at amplitudes up to ``max_amplitude``."""
        two = lambda a: np.linalg.norm(a, 2)
        h = two(self._p_rwa) + two(self._m_rwa)
        if self.mode == "full":
            h += 2.0 * (two(self._c_plus) + two(self._c_minus))
        return 2.0 * max_amplitude * h + 2.0 * two(self.damping)

    def controls(self, t: float):
        return control_operators(t, self.params.Omega, self.cutoffs, self.mode)

    def hamiltonian(self, gp: float, gm: float, t: float, extra=None) -> np.ndarray:
        H = gp * self._p_rwa + gm * self._m_rwa
        if self.mode == "full":
            ph = np.exp(-2j * self.params.Omega * t)
            rot = gp * self._c_plus * ph + gm * self._c_minus * ph.conjugate()
            H = H + rot + rot.conj().T
        if extra is not None:
            H = H + extra
        return H

    def apply(self, rho: np.ndarray, H: np.ndarray) -> np.ndarray:
        heff = H - 0.5j * self.damping
        out = -1j * (heff @ rho) + 1j * (rho @ heff.conj().T)
        for L, Ld in zip(self.jumps, self.jumps_dag):
            out += L @ rho @ Ld
        return out

    def apply_adjoint(self, A: np.ndarray, H: np.ndarray) -> np.ndarray:
        heff = H - 0.5j * self.damping
        out = 1j * (heff.conj().T @ A) - 1j * (A @ heff)
        for L, Ld in zip(self.jumps, self.jumps_dag):
            out += Ld @ A @ L
        return out
