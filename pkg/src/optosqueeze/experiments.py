"""Batch experiments behind the command-line interface.

Each function takes a :class:`~optosqueeze.io.RunConfig` and returns plain
data (tables and JSON-ready dicts); writing files is left to the caller.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks

from .analysis import gaussian_purity, partial_trace, purity, squeezing_db, variance
from .errors import ConfigError, NotReachedError, OptoSqueezeError
from .fock import initial_state, quadrature_ops
from .io import SCHEMA_VERSION, ProtocolEntry, RunConfig, read_pulses
from .krotov import optimize as krotov_optimize
from .model import PulsePair, SystemParams
from .moments import GaussianState, evolve_covariance_batch, evolve_moments, steady_state
from .propagator import make_grid, propagate_forward, required_steps
from .protocols import (
    ProtocolSpec,
    _g_plus,
    cooling_delay_time,
    cooling_delay_times,
    make_pulses,
    refine_ratios,
    time_to_db,
)


@dataclass
class TrajectoryTable:
    """Per-node observables of one run, in the trajectory CSV layout."""

    protocol: str
    engine: str
    mode: str
    times: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    var_x1: np.ndarray
    var_x2: np.ndarray
    purity_mech: np.ndarray
    purity_cav: np.ndarray
    purity_total: np.ndarray

    @property
    def db(self) -> np.ndarray:
        return -10.0 * np.log10(self.var_x1 / 0.5)

    def rows(self):
        db = self.db
        for i in range(len(self.times)):
            yield (
                self.times[i], self.g_plus[i], self.g_minus[i], self.var_x1[i], self.var_x2[i], db[i],
                self.purity_mech[i], self.purity_cav[i], self.purity_total[i], self.engine, self.mode, self.protocol,
            )

    def summary(self, threshold_db: float | None = None) -> dict:
        i = int(np.argmin(self.var_x1))
        out = {
            "protocol": self.protocol,
            "engine": self.engine,
            "mode": self.mode,
            "max_db": squeezing_db(float(self.var_x1[i])),
            "t_of_max": float(self.times[i]),
            "terminal_db": squeezing_db(float(self.var_x1[-1])),
        }
        if threshold_db is not None:
            out["threshold_db"] = threshold_db
            out["time_to_threshold"] = time_to_db(self.times, self.var_x1, threshold_db)
        return out


def build_pulses(entry: ProtocolEntry, config: RunConfig, mode: str | None = None, T: float | None = None):
    """Pulses for a configured protocol plus the delay actually used."""
    mode = mode or config.mode
    if entry.kind == "file":
        return read_pulses(entry.path), None
    T = config.T if T is None else T
    max_amp = max(entry.g_minus, entry.g_plus_initial if entry.kind == "linear" else 0.0)
    grid = config.grid(max_amp, mode, None if T == config.T else T)
    t_delay = entry.t_delay
    if entry.kind == "delayed" and t_delay is None:
        t_delay = cooling_delay_time(entry.g_minus, config.params, T, mode=mode)
    if t_delay is not None and t_delay > T:
        raise ConfigError("protocol.t_delay_s", f"delay {t_delay:.3e}s exceeds T={T:.3e}s")
    spec = ProtocolSpec(entry.kind, grid, entry.g_minus, entry.ratio_final, entry.g_plus_initial, t_delay or 0.0)
    return make_pulses(spec), t_delay


def moments_table(pulses: PulsePair, params: SystemParams, mode: str, label: str) -> TrajectoryTable:
    traj = evolve_moments(GaussianState.thermal(params.n_th), pulses, params, mode)
    covs = traj.covs
    p_mech = 1.0 / (2.0 * np.sqrt(np.linalg.det(covs[:, :2, :2])))
    p_cav = 1.0 / (2.0 * np.sqrt(np.linalg.det(covs[:, 2:, 2:])))
    p_tot = 1.0 / (4.0 * np.sqrt(np.linalg.det(covs)))
    return TrajectoryTable(label, "moments", mode, traj.times, pulses.g_plus, pulses.g_minus,
                           traj.var_x1.copy(), traj.var_x2.copy(), p_mech, p_cav, p_tot)


def fock_table(pulses: PulsePair, params: SystemParams, cutoffs, mode: str, label: str,
               stored_every: int = 1) -> TrajectoryTable:
    """Fock-space run; pulses are refined by an integer factor if ``mode`` needs it."""
    n = pulses.grid.n_steps
    need = required_steps(pulses.grid.T, params, pulses.max_amplitude(), mode)
    factor = math.ceil(need / n) if need > n else 1
    if factor > 1:
        pulses = pulses.resampled(n * factor)
    traj = propagate_forward(initial_state(params.n_th, cutoffs), pulses, params, cutoffs, mode,
                             stored_every=stored_every * factor)
    x1, x2 = quadrature_ops(cutoffs)[:2]
    cols = np.array([
        (variance(r, x1), variance(r, x2), purity(partial_trace(r, "mech", cutoffs)),
         purity(partial_trace(r, "cavity", cutoffs)), purity(r))
        for r in traj.states
    ])
    sl = slice(None, None, stored_every * factor)
    return TrajectoryTable(label, "fock", mode, traj.times, pulses.g_plus[sl], pulses.g_minus[sl], *cols.T)


def run_table(pulses, config: RunConfig, label: str, *, engine=None, mode=None) -> TrajectoryTable:
    engine = engine or config.engine
    mode = mode or config.mode
    if engine == "moments":
        return moments_table(pulses, config.params, mode, label)
    return fock_table(pulses, config.params, config.cutoffs, mode, label, config.stored_every)


def _pool_map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- simulate / compare -----------------------------------------------------

def simulate(config: RunConfig):
    entry = config.protocol
    pulses, t_delay = build_pulses(entry, config)
    table = run_table(pulses, config, entry.label)
    summary = {**config.echo(), **table.summary(), "t_delay": t_delay}
    return table, summary


def _compare_one(args):
    config, entry = args
    pulses, t_delay = build_pulses(entry, config)
    table = run_table(pulses, config, entry.label)
    return table, t_delay


def compare(config: RunConfig):
    if len(config.protocols) < 2:
        raise ConfigError("protocols", "compare needs at least two protocols")
    results = _pool_map(_compare_one, [(config, e) for e in config.protocols], config.workers)
    rows = []
    for (table, t_delay), entry in zip(results, config.protocols):
        row = table.summary(config.threshold_db)
        row.update(kind=entry.kind, ratio_final=entry.ratio_final, t_delay=t_delay)
        rows.append(row)
    summary = {**config.echo(), "protocols": rows}
    return [t for t, _ in results], summary


# --- optimize ---------------------------------------------------------------

def optimize(config: RunConfig):
    """Krotov optimization from the constant guess, then evaluation in both modes."""
    if config.engine != "fock":
        raise ConfigError("engine", "optimize requires the fock engine")
    kc = config.krotov
    grid = config.grid(config.guess_g_minus, kc.mode)
    guess = PulsePair.constant(grid, config.guess_ratio * config.guess_g_minus, config.guess_g_minus)
    rho0 = initial_state(config.params.n_th, config.cutoffs)
    record = None
    final = guess
    if config.krotov_iters > 0:
        record = krotov_optimize(rho0, guess, kc, config.params, config.cutoffs)
        final = record.pulses_final
    tables = [
        fock_table(final, config.params, config.cutoffs, m, "krotov", config.stored_every) for m in ("rwa", "full")
    ]
    iterations = [] if record is None else [
        {"iteration": it.iteration, "J_T": it.J_T, "J_t": it.J_t, "monotonic": it.monotonic,
         "accepted": it.accepted, "lambda_plus": it.lambda_plus, "lambda_minus": it.lambda_minus,
         "retries": it.retries}
        for it in record.iterations
    ]
    summary = {
        **config.echo(),
        "optimization_mode": kc.mode,
        "iterations": iterations,
        "J_T": [it["J_T"] for it in iterations],
        "monotonic": True if record is None else record.monotonic,
        "converged": False if record is None else record.converged,
        "db_rwa": tables[0].summary()["max_db"],
        "db_full": tables[1].summary()["max_db"],
        "terminal_var_rwa": float(tables[0].var_x1[-1]),
        "terminal_var_full": float(tables[1].var_x1[-1]),
        "mean_g_minus": final.mean_g_minus(),
        "pulses_csv": "pulses.csv",
    }
    wall = 0.0 if record is None else record.wall_time
    return final, tables, summary, wall


# --- QSL sweep --------------------------------------------------------------

def _family_batch(kind, cands, T, grid, params, mode, gpi):
    """Batched max-squeezing variances for ``(g_minus, ratio, delay)`` candidates."""
    t = grid.times
    gp = np.array([_g_plus(kind, t, T, a, [r], gpi, d)[0] for a, r, d in cands])
    gm = np.array([np.full_like(t, a) for a, _, _ in cands])
    return evolve_covariance_batch(gp, gm, grid, params, mode).min(axis=1)


def _sweep_point(args):
    """Best line-searched simplified protocol at one duration.

    For every family all ``(G-, ratio)`` combinations on the amplitude and
    ratio grids are integrated in one batch, together with the previous
    duration's winner (``warm``); the best ratio is then refined on a
    0.001 grid at its amplitude.
    """
    config, T, warm = args
    sw = config.sweep
    params = config.params
    gpi = config.protocols[0].g_plus_initial
    if sw.amplitude_cap is not None:
        amps = [sw.amplitude_cap * (i + 1) / sw.n_amplitudes for i in range(sw.n_amplitudes)]
    else:
        amps = [config.protocols[0].g_minus]
    ratios = np.round(np.arange(0.0, 0.98 + 1e-9, sw.ratio_step), 10)
    mode = sw.search_mode
    grid = make_grid(T, params, max(amps + [gpi]), mode)
    warm_amps = [w[0] for w in warm.values()]
    delays = {}
    if "delayed" in sw.families:
        all_amps = sorted(set(amps + warm_amps))
        delays = dict(zip(all_amps, cooling_delay_times(all_amps, params, T, mode=mode)))
    best = None
    per_family = {}
    for kind in sw.families:
        pool = list(amps) + ([warm[kind][0]] if kind in warm else [])
        cands = []
        for a in dict.fromkeys(pool):
            if kind == "linear" and not gpi < a:
                continue
            d = float(delays[a]) if kind == "delayed" else 0.0
            if math.isnan(d):
                continue
            cands.extend((a, float(r), d) for r in ratios)
        if kind in warm and (kind != "linear" or gpi < warm[kind][0]):
            a = warm[kind][0]
            d = float(delays[a]) if kind == "delayed" else 0.0
            if not math.isnan(d):
                cands.append((a, warm[kind][1], d))
        if not cands:
            continue
        score = _family_batch(kind, cands, T, grid, params, mode, gpi)
        i = int(np.argmin(score))
        v, (a, r, d) = float(score[i]), cands[i]
        fine = [(a, float(x), d) for x in refine_ratios(r, sw.ratio_step)]
        sc = _family_batch(kind, fine, T, grid, params, mode, gpi)
        j = int(np.argmin(sc))
        if sc[j] < v:
            v, r = float(sc[j]), fine[j][1]
        per_family[kind] = {"g_minus": a, "ratio": r, "t_delay": d, "max_db": squeezing_db(v)}
        if best is None or v < best[0]:
            best = (v, kind, a, r, d)
    if best is None:
        raise NotReachedError(f"no admissible protocol at T={T:.3e}s")
    v, kind, a, r, d = best
    other = "rwa" if mode == "full" else "full"
    grid_o = make_grid(T, params, max(a, gpi), other)
    v_other = float(_family_batch(kind, [(a, r, d)], T, grid_o, params, other, gpi)[0])
    v_full, v_rwa = (v, v_other) if mode == "full" else (v_other, v)
    return {
        "T_s": T,
        "T_kappa_units": T * params.kappa / (2 * math.pi),
        "family": kind,
        "g_minus": a,
        "ratio": r,
        "t_delay": d,
        "max_db": squeezing_db(v),
        "max_db_full": squeezing_db(v_full),
        "max_db_rwa": squeezing_db(v_rwa),
        "variance_ratio_full_rwa": v_full / v_rwa,
        "families": per_family,
        "search_mode": mode,
    }


def _fixed_point(args):
    config, T, _ = args
    entry = config.protocols[0]
    out = {"T_s": T, "T_kappa_units": T * config.params.kappa / (2 * math.pi), "family": entry.kind}
    v = {}
    for m in ("rwa", "full"):
        pulses, delay = build_pulses(entry, config, m, T)
        v[m] = float(run_table(pulses, config, entry.label, engine="moments", mode=m).var_x1.min())
    out.update(g_minus=entry.g_minus, ratio=entry.ratio_final, t_delay=delay, max_db=squeezing_db(v[config.mode]),
               max_db_full=squeezing_db(v["full"]), max_db_rwa=squeezing_db(v["rwa"]),
               variance_ratio_full_rwa=v["full"] / v["rwa"])
    return out


def _krotov_point(args):
    config, T, _ = args
    kc = config.krotov
    params, cutoffs = config.params, config.cutoffs
    grid = make_grid(T, params, config.guess_g_minus, kc.mode)
    guess = PulsePair.constant(grid, config.guess_ratio * config.guess_g_minus, config.guess_g_minus)
    record = krotov_optimize(initial_state(params.n_th, cutoffs), guess, kc, params, cutoffs)
    v = {m: float(fock_table(record.pulses_final, params, cutoffs, m, "krotov").var_x1.min()) for m in ("rwa", "full")}
    return {
        "T_s": T, "T_kappa_units": T * params.kappa / (2 * math.pi), "family": "krotov",
        "g_minus": record.pulses_final.mean_g_minus(), "ratio": None, "t_delay": None,
        "max_db": squeezing_db(v[kc.mode]), "max_db_full": squeezing_db(v["full"]),
        "max_db_rwa": squeezing_db(v["rwa"]), "variance_ratio_full_rwa": v["full"] / v["rwa"],
        "monotonic": record.monotonic,
    }


def qsl_sweep(config: RunConfig):
    """Best achievable squeezing per duration and the shortest duration beating the threshold.

    The line-search policy runs durations in increasing order and seeds each
    point with the previous point's winners, so a protocol that worked for a
    shorter duration is always among the candidates for a longer one.
    """
    sw = config.sweep
    records = []
    if sw.policy == "line-search":
        warm = {}
        for T in sw.T_list:
            try:
                rec = _sweep_point((config, T, dict(warm)))
                warm = {k: (f["g_minus"], f["ratio"]) for k, f in rec["families"].items()}
            except OptoSqueezeError as exc:
                rec = {"T_s": T, "error": str(exc)}
            records.append(rec)
    else:
        fn = _fixed_point if sw.policy == "fixed" else _krotov_point
        for T, rec in zip(sw.T_list, _pool_map(_safe(fn), [(config, T, None) for T in sw.T_list], config.workers)):
            records.append(rec if "error" not in rec else {"T_s": T, "error": rec["error"]})
    records.sort(key=lambda r: r["T_s"])
    ok = [r for r in records if "error" not in r]
    key = "max_db_full" if sw.search_mode == "full" else "max_db_rwa"
    above = [r["T_s"] for r in ok if r[key] > sw.threshold_db]
    dbs = [r[key] for r in ok]
    summary = {
        **config.echo(),
        "policy": sw.policy,
        "threshold_db": sw.threshold_db,
        "amplitude_cap": sw.amplitude_cap,
        "smallest_T_above_threshold": above[0] if above else None,
        "non_decreasing": all(b >= a for a, b in zip(dbs, dbs[1:])),
        "variance_ratio_full_rwa": [r["variance_ratio_full_rwa"] for r in ok],
        "records": records,
    }
    return records, summary


class _safe:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, args):
        try:
            return self.fn(args)
        except OptoSqueezeError as exc:
            return {"error": str(exc)}


# --- cavity-decay study -----------------------------------------------------

EXTREMUM_PROMINENCE = 0.02
PLATEAU_WINDOW = 0.1


def plateau(var, window: float = PLATEAU_WINDOW) -> float:
    """Mean of the last ``window`` fraction of a trajectory."""
    var = np.asarray(var)
    return float(var[int((1.0 - window) * (len(var) - 1)):].mean())


def extrema(var, prominence: float = EXTREMUM_PROMINENCE):
    """Indices of local minima and maxima whose prominence exceeds a fraction of the range.

    The relative threshold ignores the small ripple at 2Ω that the
    counter-rotating terms superimpose on the slow dynamics.
    """
    var = np.asarray(var)
    span = float(var.max() - var.min()) or 1.0
    mins, _ = find_peaks(-var, prominence=prominence * span)
    maxs, _ = find_peaks(var, prominence=prominence * span)
    return mins, maxs


def kappa_study(config: RunConfig):
    """ΔX1² trajectories with the cavity decay reduced by each configured factor, from the ground state."""
    entry = config.protocol
    if entry.kind != "constant":
        raise ConfigError("protocol.kind", "the cavity-decay study uses a constant protocol")
    base = config.params.with_(n_th=0.0)
    cfg0 = replace(config, params=base)
    pulses, _ = build_pulses(entry, cfg0)
    gp, gm = float(pulses.g_plus[0]), float(pulses.g_minus[0])
    tables, rows = [], []
    for red in config.kappa_reductions:
        p = base.with_(kappa=base.kappa / red)
        table = moments_table(pulses, p, config.mode, f"kappa/{red:g}")
        mins, maxs = extrema(table.var_x1)
        i_first = int(mins[0]) if len(mins) else int(np.argmin(table.var_x1))
        tables.append((red, table))
        rows.append({
            "kappa_reduction": red,
            "kappa": p.kappa,
            "n_extrema": int(len(mins) + len(maxs)),
            "oscillating": bool(len(mins) + len(maxs) >= 2),
            "first_min_time": float(table.times[i_first]),
            "first_min_var": float(table.var_x1[i_first]),
            "max_db": squeezing_db(float(table.var_x1.min())),
            "plateau_var": plateau(table.var_x1),
            "steady_state_var_rwa": steady_state(gp, gm, p, "rwa").var_x1,
        })
    summary = {**config.echo(), "mode": config.mode, "runs": rows}
    return tables, summary
