"""Run configuration and deterministic CSV/JSON output.

Configs are TOML.  Frequencies carry an ``_hz`` suffix and are multiplied by
2π on load; durations are given in seconds (``T_s``) or in cavity decay
times 2π/κ (``T_kappa_units``).
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .fock import FockCutoffs
from .krotov import KrotovConfig
from .model import TWO_PI, PulsePair, SystemParams, TimeGrid
from .propagator import required_steps

SCHEMA_VERSION = 1
ENGINES = ("moments", "fock")
TRAJECTORY_COLUMNS = (
    "t_s", "g_plus_rad_s", "g_minus_rad_s", "var_x1", "var_x2", "db",
    "purity_mech", "purity_cav", "purity_total", "engine", "mode", "protocol",
)
PULSE_COLUMNS = ("t_s", "g_plus_rad_s", "g_minus_rad_s")
#: Default sweep: 12 log-spaced durations from 0.1 µs to 150 µs.
DEFAULT_SWEEP = (1e-7, 1.5e-4, 12)
POLICIES = ("line-search", "fixed", "krotov")

_DEVICE_HZ = dict(nu_cav_hz=6.23e9, nu_mech_hz=3.6e6, g0_hz=36.0, kappa_hz=450e3, Gamma_hz=3.0, n_th=2.0)
_PROTOCOL_KEYS = {"kind", "g_minus_hz", "ratio_final", "g_plus_initial_hz", "t_delay_s", "path", "label"}
_KROTOV_KEYS = {"lambda_a_plus", "lambda_a_minus", "max_iters", "stop_delta_J", "amplitude_cap_hz", "mode",
                "snapshot_every", "guess_g_minus_hz", "guess_ratio"}
_SWEEP_KEYS = {"T_s", "T_kappa_units", "T_min_s", "T_max_s", "n_points", "policy", "families",
               "amplitude_cap_hz", "n_amplitudes", "ratio_step", "threshold_db", "search_mode"}
_TOP_KEYS = {"engine", "mode", "threshold_db", "workers", "pulse_file", "stored_every",
             "params", "cutoffs", "grid", "protocol", "protocols", "krotov", "sweep", "kappa_study"}


def _unknown(section: dict, allowed: set, prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _num(section: dict, key: str, prefix: str, default=None, *, positive=False, integer=False):
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(prefix + key, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(prefix + key, f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(prefix + key, f"must be > 0, got {v!r}")
    return int(v) if integer else float(v)


def config_hash(raw: dict) -> str:
    """Stable digest of the parsed config, embedded in every output."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ProtocolEntry:
    """A protocol as configured: amplitudes in rad/s, ``t_delay=None`` means automatic."""

    label: str
    kind: str
    g_minus: float = TWO_PI * 70e3
    ratio_final: float = 0.86
    g_plus_initial: float = TWO_PI * 25e3
    t_delay: float | None = None
    path: str | None = None


@dataclass(frozen=True)
class SweepConfig:
    T_list: tuple
    policy: str = "line-search"
    families: tuple = ("constant", "linear", "delayed")
    amplitude_cap: float | None = None
    n_amplitudes: int = 8
    ratio_step: float = 0.02
    threshold_db: float = 3.0
    search_mode: str = "full"


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    cutoffs: FockCutoffs
    T: float
    n_steps: int | None
    engine: str
    mode: str
    protocols: tuple
    krotov: KrotovConfig | None
    krotov_iters: int
    guess_g_minus: float
    guess_ratio: float
    sweep: SweepConfig
    kappa_reductions: tuple
    threshold_db: float
    stored_every: int
    workers: int
    raw: dict = field(repr=False)
    hash: str = ""

    @property
    def protocol(self) -> ProtocolEntry:
        if len(self.protocols) != 1:
            raise ConfigError("protocol", f"expected exactly one protocol, found {len(self.protocols)}")
        return self.protocols[0]

    def grid(self, max_amplitude: float, mode: str | None = None, T: float | None = None) -> TimeGrid:
        """Grid honoring ``grid.n_steps`` when given, else the smallest allowed one."""
        mode = mode or self.mode
        n = self.n_steps if T is None else None
        T = self.T if T is None else T
        need = required_steps(T, self.params, max_amplitude, mode)
        if n is None:
            return TimeGrid(T, need)
        if n < need:
            raise ConfigError("grid.n_steps", f"{n} steps are too coarse; need at least {need}")
        return TimeGrid(T, n)

    def echo(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "config_hash": self.hash, "config": self.raw}


def _parse_protocol(sec: dict, prefix: str, label: str) -> ProtocolEntry:
    if not isinstance(sec, dict):
        raise ConfigError(prefix.rstrip("."), "expected a table")
    _unknown(sec, _PROTOCOL_KEYS, prefix)
    kind = sec.get("kind", "constant")
    if kind not in ("constant", "linear", "delayed", "file"):
        raise ConfigError(prefix + "kind", f"unknown protocol kind {kind!r}")
    if kind == "file" and "path" not in sec:
        raise ConfigError(prefix + "path", "required for file protocols")
    ratio = _num(sec, "ratio_final", prefix, 0.86)
    if not 0 <= ratio < 1:
        raise ConfigError(prefix + "ratio_final", f"must lie in [0, 1), got {ratio}")
    gm = _num(sec, "g_minus_hz", prefix, 70e3, positive=True) * TWO_PI
    gpi = _num(sec, "g_plus_initial_hz", prefix, 25e3) * TWO_PI
    if kind == "linear" and not 0 <= gpi < gm:
        raise ConfigError(prefix + "g_plus_initial_hz", "must lie in [0, g_minus_hz)")
    delay = sec.get("t_delay_s", "auto")
    if delay == "auto":
        delay = None
    else:
        delay = _num(sec, "t_delay_s", prefix)
        if delay < 0:
            raise ConfigError(prefix + "t_delay_s", "must be >= 0")
    return ProtocolEntry(str(sec.get("label", label)), kind, gm, ratio, gpi, delay, sec.get("path"))


def _parse_T(sec: dict, prefix: str, kappa: float, required: bool = True):
    if "T_s" in sec and "T_kappa_units" in sec:
        raise ConfigError(prefix + "T_s", "give either T_s or T_kappa_units, not both")
    if "T_kappa_units" in sec:
        return _num(sec, "T_kappa_units", prefix, positive=True) * TWO_PI / kappa
    if "T_s" in sec:
        return _num(sec, "T_s", prefix, positive=True)
    if required:
        raise ConfigError(prefix + "T_s", "a duration is required")
    return None


def _parse_T_list(sec: dict, kappa: float) -> tuple:
    p = "sweep."
    if "T_s" in sec or "T_kappa_units" in sec:
        key = "T_s" if "T_s" in sec else "T_kappa_units"
        vals = sec[key]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(p + key, "expected a non-empty list")
        scale = 1.0 if key == "T_s" else TWO_PI / kappa
        Ts = [float(v) * scale for v in vals]
    else:
        lo = _num(sec, "T_min_s", p, DEFAULT_SWEEP[0], positive=True)
        hi = _num(sec, "T_max_s", p, DEFAULT_SWEEP[1], positive=True)
        n = _num(sec, "n_points", p, DEFAULT_SWEEP[2], positive=True, integer=True)
        Ts = list(np.geomspace(lo, hi, n)) if n > 1 else [lo]
    if any(not t > 0 for t in Ts):
        raise ConfigError(p + "T_s", "durations must be > 0")
    if any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise ConfigError(p + "T_s", "durations must be strictly increasing")
    return tuple(Ts)


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed TOML mapping; errors name the offending key."""
    _unknown(raw, _TOP_KEYS, "")
    pr = raw.get("params", {})
    _unknown(pr, set(_DEVICE_HZ), "params.")
    hz = {k: _num(pr, k, "params.", v) for k, v in _DEVICE_HZ.items()}
    try:
        params = SystemParams.from_hz(hz["nu_cav_hz"], hz["nu_mech_hz"], hz["g0_hz"], hz["kappa_hz"],
                                      hz["Gamma_hz"], hz["n_th"])
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from None
    if not params.kappa > 0:
        raise ConfigError("params.kappa_hz", "must be > 0 for run configs")

    cu = raw.get("cutoffs", {})
    _unknown(cu, {"n_cav", "n_mech"}, "cutoffs.")
    n_cav = _num(cu, "n_cav", "cutoffs.", 6, integer=True)
    n_mech = _num(cu, "n_mech", "cutoffs.", 20, integer=True)
    try:
        cutoffs = FockCutoffs(n_cav, n_mech)
    except ValueError as exc:
        raise ConfigError("cutoffs", str(exc)) from None

    gr = raw.get("grid", {})
    _unknown(gr, {"T_s", "T_kappa_units", "n_steps"}, "grid.")
    T = _parse_T(gr, "grid.", params.kappa, required=False) or 42 * TWO_PI / params.kappa
    n_steps = _num(gr, "n_steps", "grid.", None, positive=True, integer=True)

    engine = raw.get("engine", "moments")
    if engine not in ENGINES:
        raise ConfigError("engine", f"must be one of {ENGINES}, got {engine!r}")
    mode = raw.get("mode", "full")
    if mode not in ("rwa", "full"):
        raise ConfigError("mode", f"must be 'rwa' or 'full', got {mode!r}")

    if "protocol" in raw and "protocols" in raw:
        raise ConfigError("protocols", "give either [protocol] or [protocols.*], not both")
    if "pulse_file" in raw and ("protocol" in raw or "protocols" in raw):
        raise ConfigError("pulse_file", "give either a pulse file or a protocol, not both")
    if "pulse_file" in raw:
        protocols = (ProtocolEntry("file", "file", path=str(raw["pulse_file"])),)
    elif "protocols" in raw:
        protocols = tuple(_parse_protocol(sec, f"protocols.{name}.", name) for name, sec in raw["protocols"].items())
    else:
        sec = raw.get("protocol", {})
        protocols = (_parse_protocol(sec, "protocol.", sec.get("kind", "constant") if isinstance(sec, dict) else ""),)

    kr = raw.get("krotov", {})
    _unknown(kr, _KROTOV_KEYS, "krotov.")
    iters = _num(kr, "max_iters", "krotov.", 50, integer=True)
    if iters < 0:
        raise ConfigError("krotov.max_iters", "must be >= 0")
    cap = _num(kr, "amplitude_cap_hz", "krotov.", None, positive=True)
    kw = dict(
        lambda_a_plus=_num(kr, "lambda_a_plus", "krotov.", None, positive=True),
        lambda_a_minus=_num(kr, "lambda_a_minus", "krotov.", None, positive=True),
        max_iters=max(iters, 1),
        stop_delta_J=_num(kr, "stop_delta_J", "krotov.", 1e-9, positive=True),
        amplitude_cap=None if cap is None else cap * TWO_PI,
        mode=kr.get("mode", "rwa"),
        snapshot_every=_num(kr, "snapshot_every", "krotov.", 0, integer=True),
    )
    try:
        krotov = KrotovConfig(**kw)
    except ValueError as exc:
        raise ConfigError("krotov", str(exc)) from None
    guess_gm = _num(kr, "guess_g_minus_hz", "krotov.", 5.8e3, positive=True) * TWO_PI
    guess_ratio = _num(kr, "guess_ratio", "krotov.", 0.7)
    if not 0 <= guess_ratio < 1:
        raise ConfigError("krotov.guess_ratio", "must lie in [0, 1)")

    sw = raw.get("sweep", {})
    _unknown(sw, _SWEEP_KEYS, "sweep.")
    policy = sw.get("policy", "line-search")
    if policy not in POLICIES:
        raise ConfigError("sweep.policy", f"must be one of {POLICIES}, got {policy!r}")
    families = tuple(sw.get("families", ("constant", "linear", "delayed")))
    for fam in families:
        if fam not in ("constant", "linear", "delayed"):
            raise ConfigError("sweep.families", f"unknown family {fam!r}")
    sweep_cap = _num(sw, "amplitude_cap_hz", "sweep.", None, positive=True)
    ratio_step = _num(sw, "ratio_step", "sweep.", 0.02, positive=True)
    search_mode = sw.get("search_mode", "full")
    if search_mode not in ("rwa", "full"):
        raise ConfigError("sweep.search_mode", "must be 'rwa' or 'full'")
    sweep = SweepConfig(
        T_list=_parse_T_list(sw, params.kappa),
        policy=policy,
        families=families,
        amplitude_cap=None if sweep_cap is None else sweep_cap * TWO_PI,
        n_amplitudes=_num(sw, "n_amplitudes", "sweep.", 8, positive=True, integer=True),
        ratio_step=ratio_step,
        threshold_db=_num(sw, "threshold_db", "sweep.", 3.0),
        search_mode=search_mode,
    )

    ks = raw.get("kappa_study", {})
    _unknown(ks, {"reductions"}, "kappa_study.")
    reductions = tuple(float(r) for r in ks.get("reductions", (1, 10, 100)))
    if any(not r >= 1 for r in reductions):
        raise ConfigError("kappa_study.reductions", "reductions must be >= 1")

    stored_every = _num(raw, "stored_every", "", 1, positive=True, integer=True)
    workers = _num(raw, "workers", "", 1, positive=True, integer=True)
    return RunConfig(
        params=params, cutoffs=cutoffs, T=T, n_steps=n_steps, engine=engine, mode=mode,
        protocols=protocols, krotov=krotov, krotov_iters=iters, guess_g_minus=guess_gm,
        guess_ratio=guess_ratio, sweep=sweep, kappa_reductions=reductions,
        threshold_db=_num(raw, "threshold_db", "", 3.0), stored_every=stored_every, workers=workers,
        raw=raw, hash=config_hash(raw),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    return parse_config(raw)


def loads_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<string>", f"invalid TOML: {exc}") from None
    return parse_config(raw)


# --- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, columns, rows) -> None:
    """Write rows with ``repr`` floats so the text is exact and reproducible."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_pulses(path, pulses: PulsePair) -> None:
    rows = zip(pulses.grid.times, pulses.g_plus, pulses.g_minus)
    write_csv(path, PULSE_COLUMNS, rows)


def read_pulses(path) -> PulsePair:
    """Load a pulse CSV; the times must form a uniform grid starting at 0."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header[:3]) != PULSE_COLUMNS:
            raise ConfigError(str(path), f"pulse file header must start with {','.join(PULSE_COLUMNS)}")
        data = np.array([[float(x) for x in row[:3]] for row in reader if row])
    if data.ndim != 2 or len(data) < 2:
        raise ConfigError(str(path), "pulse file needs at least two rows")
    t = data[:, 0]
    n = len(t) - 1
    grid = TimeGrid(float(t[-1]), n)
    if abs(t[0]) > 1e-15 or np.max(np.abs(t - grid.times)) > 1e-9 * grid.T:
        raise ConfigError(str(path), "pulse times must be uniform and start at 0")
    return PulsePair(grid, data[:, 1], data[:, 2])
