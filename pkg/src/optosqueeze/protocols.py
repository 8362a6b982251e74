"""Analytic drive families and the ratio line search.

Three families share a constant red-detuned amplitude ``G-``:

* ``constant``  - ``G+ = ratio * G-`` throughout;
* ``linear``    - ``G+`` ramps linearly from ``g_plus_initial`` to ``ratio * G-`` at ``T``;
* ``delayed``   - ``G+ = 0`` before ``t_delay``, ``ratio * G-`` afterwards.

A ``file`` kind loads envelopes from a pulse CSV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import ZERO_POINT, squeezing_db
from .errors import NotReachedError
from .model import TWO_PI, PulsePair, SystemParams, TimeGrid
from .moments import GaussianState, evolve_covariance_batch
from .propagator import make_grid

KINDS = ("constant", "linear", "delayed", "file")

#: Guess amplitudes for optimizations: G-/2π = 5.8 kHz with G+/G- = 0.7.
GUESS_G_MINUS = TWO_PI * 5.8e3
GUESS_RATIO = 0.7
#: Initial blue amplitude of the linear ramp, G+/2π = 25 kHz.
LINEAR_G_PLUS_INITIAL = TWO_PI * 25e3
#: Relative margin above the zero-point variance that counts as "cooled".
COOLED_TOL = 0.1


@dataclass(frozen=True)
class ProtocolSpec:
    """Parameters of one drive protocol; amplitudes in rad/s, times in s."""

    kind: str
    grid: TimeGrid
    g_minus: float = 0.0
    ratio_final: float = 0.0
    g_plus_initial: float = LINEAR_G_PLUS_INITIAL
    t_delay: float = 0.0
    path: str | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "file":
            if not self.path:
                raise ValueError("file protocols need a path")
            return
        if not 0 <= self.ratio_final < 1:
            raise ValueError(f"ratio_final must lie in [0, 1), got {self.ratio_final}")
        if not self.g_minus > 0:
            raise ValueError("g_minus must be > 0")
        if not 0 <= self.t_delay <= self.grid.T:
            raise ValueError(f"t_delay must lie in [0, T], got {self.t_delay}")
        if self.kind == "linear" and not 0 <= self.g_plus_initial < self.g_minus:
            raise ValueError("g_plus_initial must lie in [0, g_minus)")

    @property
    def name(self) -> str:
        return self.label or self.kind

    def with_(self, **changes) -> "ProtocolSpec":
        return replace(self, **changes)


def _g_plus(kind, t, T, g_minus, ratio, g_plus_initial, t_delay):
    """G+ samples; broadcasts over a leading ratio axis."""
    ratio = np.asarray(ratio, dtype=float)[..., None]
    if kind == "constant":
        return np.broadcast_to(ratio * g_minus, ratio.shape[:-1] + t.shape).copy()
    if kind == "linear":
        return g_plus_initial + (ratio * g_minus - g_plus_initial) * (t / T)
    if kind == "delayed":
        return np.where(t < t_delay, 0.0, ratio * g_minus)
    raise ValueError(f"no analytic envelope for kind {kind!r}")


def make_pulses(spec: ProtocolSpec) -> PulsePair:
    if spec.kind == "file":
        from .io import read_pulses

        return read_pulses(spec.path)
    t = spec.grid.times
    gp = _g_plus(spec.kind, t, spec.grid.T, spec.g_minus, spec.ratio_final, spec.g_plus_initial, spec.t_delay)
    return PulsePair(spec.grid, gp, np.full_like(t, spec.g_minus))


def cooling_delay_times(
    g_minus,
    params: SystemParams,
    T: float,
    *,
    mode: str = "full",
    tol: float = COOLED_TOL,
) -> np.ndarray:
    """Vectorized :func:`cooling_delay_time`; entries never reaching the threshold are ``nan``."""
    gms = np.atleast_1d(np.asarray(g_minus, dtype=float))
    if np.any(~(gms > 0)):
        raise ValueError("g_minus must be > 0")
    grid = make_grid(T, params, float(gms.max()), mode)
    n1 = grid.n_steps + 1
    var = evolve_covariance_batch(np.zeros((len(gms), n1)), np.repeat(gms[:, None], n1, axis=1), grid, params, mode)
    hit = var <= ZERO_POINT * (1.0 + tol)
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), grid.times[first], np.nan)


def cooling_delay_time(
    g_minus: float,
    params: SystemParams,
    T: float,
    *,
    mode: str = "full",
    tol: float = COOLED_TOL,
) -> float:
    """First grid time at which cooling alone brings ``ΔX1²`` to the zero point.

    The resonator starts thermal and only the red drive acts.  Cooling
    approaches ½ from above without crossing it, so the threshold is
    ``½ (1 + tol)``.
    """
    t = float(cooling_delay_times(g_minus, params, T, mode=mode, tol=tol)[0])
    if math.isnan(t):
        raise NotReachedError(
            f"ΔX1² stays above {ZERO_POINT * (1 + tol):.3f} until T={T:.3e}s with G-={g_minus:.3e} rad/s"
        )
    return t


def _objective(var, objective):
    if objective == "max":
        return var.min(axis=-1)
    if objective == "terminal":
        return var[..., -1]
    raise ValueError(f"objective must be 'max' or 'terminal', got {objective!r}")


def protocol_variances(
    kind: str,
    g_minus: float,
    ratios,
    grid: TimeGrid,
    params: SystemParams,
    *,
    mode: str = "full",
    g_plus_initial: float = LINEAR_G_PLUS_INITIAL,
    t_delay: float = 0.0,
) -> np.ndarray:
    """``ΔX1²(t)`` for one family at several final ratios, shape ``(len(ratios), n+1)``."""
    ratios = np.atleast_1d(np.asarray(ratios, dtype=float))
    t = grid.times
    gp = _g_plus(kind, t, grid.T, g_minus, ratios, g_plus_initial, t_delay)
    gm = np.full_like(gp, g_minus)
    cov0 = GaussianState.thermal(params.n_th).cov
    return evolve_covariance_batch(gp, gm, grid, params, mode, cov0)


@dataclass(frozen=True)
class LineSearchResult:
    ratio: float
    db: float
    t_delay: float = 0.0

    def __iter__(self):
        return iter((self.ratio, self.db))


def refine_ratios(r: float, step: float, fine: float = 0.001) -> np.ndarray:
    """Fine candidates covering ``[r - step, r + step]`` inside ``[0, 1)``."""
    lo, hi = max(r - step, 0.0), min(r + step, 0.999)
    return np.round(np.arange(lo, hi + 0.5 * fine, fine), 10)


def line_search_ratio(
    kind: str,
    g_minus: float,
    T: float,
    params: SystemParams,
    *,
    objective: str = "max",
    ratios=None,
    mode: str = "full",
    g_plus_initial: float = LINEAR_G_PLUS_INITIAL,
    t_delay: float | None = None,
    fine: float = 0.001,
) -> LineSearchResult:
    """Best final ratio ``G+(T)/G-`` for one family.

    A batched scan over ``ratios`` (default 0 to 0.98 in steps of 0.02)
    brackets the optimum; a second batched scan with spacing ``fine`` over
    the neighbouring interval refines it.  ``objective="max"`` scores the
    lowest ``ΔX1²`` anywhere in ``[0, T]``, ``"terminal"`` the value at
    ``T``.  Delayed protocols use :func:`cooling_delay_time` unless
    ``t_delay`` is given.
    """
    if ratios is None:
        ratios = np.round(np.arange(0.0, 0.981, 0.02), 10)
    ratios = np.asarray(ratios, dtype=float)
    if np.any((ratios < 0) | (ratios >= 1)):
        raise ValueError("ratios must lie in [0, 1)")
    if kind == "delayed" and t_delay is None:
        t_delay = cooling_delay_time(g_minus, params, T, mode=mode)
    t_delay = t_delay or 0.0
    grid = make_grid(T, params, max(g_minus, g_plus_initial), mode)
    kw = dict(mode=mode, g_plus_initial=g_plus_initial, t_delay=t_delay)
    scores = _objective(protocol_variances(kind, g_minus, ratios, grid, params, **kw), objective)
    i = int(np.argmin(scores))
    best_r, best_v = float(ratios[i]), float(scores[i])
    if len(ratios) > 1:
        step = float(np.max(np.diff(np.sort(ratios))))
        cand = refine_ratios(best_r, step, fine)
        sc = _objective(protocol_variances(kind, g_minus, cand, grid, params, **kw), objective)
        j = int(np.argmin(sc))
        if sc[j] < best_v:
            best_r, best_v = float(cand[j]), float(sc[j])
    return LineSearchResult(best_r, squeezing_db(best_v), t_delay)


def time_to_db(times, var_x1, db: float) -> float:
    """First time at which squeezing reaches ``db`` (``nan`` if never)."""
    target = ZERO_POINT * 10.0 ** (-db / 10.0)
    hit = np.flatnonzero(np.asarray(var_x1) <= target)
    return float(times[hit[0]]) if hit.size else math.nan
