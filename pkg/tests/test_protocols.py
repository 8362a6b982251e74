import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optosqueeze.errors import NotReachedError
from optosqueeze.io import write_pulses
from optosqueeze.model import TWO_PI, SystemParams, TimeGrid
from optosqueeze.moments import GaussianState, drift_matrix, evolve_moments, steady_state
from optosqueeze.protocols import (
    GUESS_G_MINUS,
    GUESS_RATIO,
    ProtocolSpec,
    cooling_delay_time,
    cooling_delay_times,
    line_search_ratio,
    make_pulses,
    protocol_variances,
    refine_ratios,
    time_to_db,
)
from optosqueeze.propagator import make_grid

G70 = TWO_PI * 70e3
DEVICE = SystemParams.device()
# zero-point crossing (ΔX1² = 0.55) of cooling-only full-mode evolution at
# G-/2π = 70 kHz from n_th = 2, located by an adaptive solver with event detection
DELAY_70KHZ = 1.2967201958917635e-05


def grid42():
    return make_grid(42 * DEVICE.kappa_time, DEVICE, G70, "full")


def test_constant_endpoint():
    p = make_pulses(ProtocolSpec("constant", grid42(), G70, 0.86))
    np.testing.assert_allclose(p.g_plus / TWO_PI, 60.2e3, rtol=1e-12)
    np.testing.assert_array_equal(p.g_minus, np.full_like(p.g_minus, G70))


def test_linear_endpoints():
    p = make_pulses(ProtocolSpec("linear", grid42(), G70, 0.95, g_plus_initial=TWO_PI * 25e3))
    assert p.g_plus[0] / TWO_PI == pytest.approx(25e3, rel=1e-12)
    assert p.g_plus[-1] / TWO_PI == pytest.approx(66.5e3, rel=1e-12)
    assert np.all(np.diff(p.g_plus) > 0)


def test_delayed_zero_is_constant():
    g = grid42()
    a = make_pulses(ProtocolSpec("delayed", g, G70, 0.86, t_delay=0.0))
    b = make_pulses(ProtocolSpec("constant", g, G70, 0.86))
    np.testing.assert_array_equal(a.g_plus, b.g_plus)
    np.testing.assert_array_equal(a.g_minus, b.g_minus)


def test_delayed_switch():
    g = grid42()
    p = make_pulses(ProtocolSpec("delayed", g, G70, 0.86, t_delay=DELAY_70KHZ))
    before = g.times < DELAY_70KHZ
    assert np.all(p.g_plus[before] == 0) and np.all(p.g_plus[~before] == 0.86 * G70)


def test_guess_values():
    assert GUESS_G_MINUS / TWO_PI == pytest.approx(5.8e3)
    assert GUESS_RATIO == 0.7


@pytest.mark.parametrize(
    "kw",
    [
        dict(ratio_final=1.0),
        dict(ratio_final=-0.1),
        dict(g_minus=0.0),
        dict(t_delay=-1e-9),
        dict(t_delay=1.0),
        dict(kind="spline"),
        dict(kind="linear", g_plus_initial=2 * G70),
        dict(kind="file"),
    ],
)
def test_spec_validation(kw):
    base = dict(kind="constant", grid=TimeGrid(1e-5, 100), g_minus=G70, ratio_final=0.5)
    with pytest.raises(ValueError):
        ProtocolSpec(**{**base, **kw})


@given(
    kind=st.sampled_from(["constant", "linear", "delayed"]),
    ratio=st.floats(0.0, 0.999),
    gm=st.floats(TWO_PI * 1e3, TWO_PI * 5e5),
    frac=st.floats(0.0, 1.0),
    gpi=st.floats(0.0, 0.999),
)
@settings(max_examples=60, deadline=None)
def test_ordering_and_determinism(kind, ratio, gm, frac, gpi):
    grid = TimeGrid(1e-5, 200)
    spec = ProtocolSpec(kind, grid, gm, ratio, g_plus_initial=gpi * gm, t_delay=frac * grid.T)
    p = make_pulses(spec)
    assert np.all(p.g_minus > p.g_plus) and np.all(p.g_plus >= 0)
    q = make_pulses(ProtocolSpec(kind, grid, gm, ratio, g_plus_initial=gpi * gm, t_delay=frac * grid.T))
    assert p.g_plus.tobytes() == q.g_plus.tobytes() and p.g_minus.tobytes() == q.g_minus.tobytes()


def test_file_protocol_round_trip(tmp_path):
    p = make_pulses(ProtocolSpec("linear", TimeGrid(1e-5, 50), G70, 0.9))
    path = tmp_path / "p.csv"
    write_pulses(path, p)
    q = make_pulses(ProtocolSpec("file", p.grid, path=str(path)))
    assert q == p


def test_protocol_variances_match_single_runs():
    grid = make_grid(8 * DEVICE.kappa_time, DEVICE, G70, "full")
    var = protocol_variances("linear", G70, [0.5, 0.9], grid, DEVICE)
    for i, r in enumerate((0.5, 0.9)):
        pulses = make_pulses(ProtocolSpec("linear", grid, G70, r))
        ref = evolve_moments(GaussianState.thermal(2.0), pulses, DEVICE, "full").var_x1
        np.testing.assert_allclose(var[i], ref, rtol=1e-13)


def test_cooling_delay_vacuum_start():
    assert cooling_delay_time(G70, DEVICE.with_(n_th=0.0), 1e-5) == 0.0


def test_cooling_delay_regression():
    T = 42 * DEVICE.kappa_time
    t = cooling_delay_time(G70, DEVICE, T)
    dt = make_grid(T, DEVICE, G70, "full").dt
    assert 0 < t < T
    assert DELAY_70KHZ <= t < DELAY_70KHZ + dt + 1e-15


def test_cooling_delay_faster_with_stronger_drive():
    T = 42 * DEVICE.kappa_time
    t1, t2 = cooling_delay_times([G70, 2 * G70], DEVICE, T)
    assert t2 < t1
    assert cooling_delay_time(2 * G70, DEVICE, T) == t2


def test_cooling_delay_not_reached():
    with pytest.raises(NotReachedError):
        cooling_delay_time(TWO_PI * 1e3, DEVICE, 1e-6)
    assert math.isnan(cooling_delay_times([TWO_PI * 1e3], DEVICE, 1e-6)[0])
    with pytest.raises(ValueError):
        cooling_delay_time(0.0, DEVICE, 1e-6)


def test_steady_state_limit():
    gp, gm = 0.86 * G70, G70
    A = steady_state(gp, gm, DEVICE)
    rate = -np.max(np.linalg.eigvals(drift_matrix(gp, gm, 0.0, DEVICE)).real)
    grid = make_grid(30 / rate, DEVICE, gm, "rwa")
    var = protocol_variances("constant", gm, [0.86], grid, DEVICE, mode="rwa")[0]
    assert abs(var[-1] - A.var_x1) <= 1e-4


def test_refine_ratios_bounds():
    r = refine_ratios(0.98, 0.02)
    assert r.min() == pytest.approx(0.96) and r.max() <= 0.999
    assert refine_ratios(0.0, 0.02).min() == 0.0


def test_line_search_matches_dense_scan(desk):
    T = 4 * desk.kappa_time
    gm = TWO_PI * 2e5
    res = line_search_ratio("constant", gm, T, desk, mode="rwa")
    grid = make_grid(T, desk, gm, "rwa")
    dense = np.round(np.arange(0, 0.999, 0.001), 10)
    var = protocol_variances("constant", gm, dense, grid, desk, mode="rwa").min(axis=1)
    assert res.ratio == pytest.approx(dense[np.argmin(var)], abs=1e-9)
    assert res.db == pytest.approx(-10 * np.log10(var.min() / 0.5), abs=1e-12)
    ratio, db = res
    assert (ratio, db) == (res.ratio, res.db)


def test_line_search_terminal_objective(desk):
    T = 4 * desk.kappa_time
    gm = TWO_PI * 2e5
    term = line_search_ratio("constant", gm, T, desk, mode="rwa", objective="terminal")
    best = line_search_ratio("constant", gm, T, desk, mode="rwa")
    assert term.db <= best.db + 1e-12
    with pytest.raises(ValueError):
        line_search_ratio("constant", gm, T, desk, ratios=[0.5, 1.0])


def test_time_to_db():
    t = np.array([0.0, 1.0, 2.0])
    assert time_to_db(t, np.array([0.5, 0.3, 0.2]), 3.0) == 2.0
    assert math.isnan(time_to_db(t, np.array([0.5, 0.4, 0.3]), 3.0))
