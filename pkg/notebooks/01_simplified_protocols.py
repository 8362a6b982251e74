# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Simplified squeezing protocols
#
# A red tone at ω_cav − Ω cools the resonator and a weaker blue tone at
# ω_cav + Ω squeezes it.  Here we compare three analytic envelopes on the
# Gaussian moment engine: both tones constant, a blue tone switched on once
# cooling reaches the zero point, and a blue tone ramped linearly.

# %%
import numpy as np

from optosqueeze import SystemParams
from optosqueeze.model import TWO_PI
from optosqueeze.moments import steady_state
from optosqueeze.protocols import ProtocolSpec, cooling_delay_time, line_search_ratio, make_pulses
from optosqueeze.propagator import make_grid
from optosqueeze.experiments import moments_table

params = SystemParams.device()
T = 42 * params.kappa_time
g_minus = TWO_PI * 70e3
print(f"T = {T * 1e6:.1f} us, G-/2pi = {g_minus / TWO_PI / 1e3:.0f} kHz")

# %% [markdown]
# ## Cooling delay
# The delayed protocol waits until cooling alone brings ΔX1² within 10% of ½.

# %%
t_delay = cooling_delay_time(g_minus, params, T)
print(f"delay {t_delay * 1e6:.2f} us")

# %% [markdown]
# ## Trajectories in full mode (counter-rotating terms included)

# %%
grid = make_grid(T, params, g_minus, "full")
specs = {
    "constant": ProtocolSpec("constant", grid, g_minus, 0.86),
    "delayed": ProtocolSpec("delayed", grid, g_minus, 0.86, t_delay=t_delay),
    "linear": ProtocolSpec("linear", grid, g_minus, 0.95, g_plus_initial=TWO_PI * 25e3),
}
tables = {k: moments_table(make_pulses(s), params, "full", k) for k, s in specs.items()}
for k, tab in tables.items():
    s = tab.summary(3.0)
    print(f"{k:9s} max {s['max_db']:6.3f} dB at {s['t_of_max'] * 1e6:6.2f} us, "
          f"3 dB reached at {s['time_to_threshold'] * 1e6:6.2f} us")

# %% [markdown]
# ## Line search over the final ratio
# Each candidate ratio is one member of a batched covariance integration.

# %%
for kind in ("constant", "delayed", "linear"):
    r = line_search_ratio(kind, g_minus, T, params)
    print(f"{kind:9s} best ratio {r.ratio:.3f} -> {r.db:.3f} dB")

# %% [markdown]
# ## Short protocols
# At eight cavity decay times a stronger red tone is needed.

# %%
T8 = 8 * params.kappa_time
for kind in ("constant", "delayed", "linear"):
    r = line_search_ratio(kind, TWO_PI * 92e3, T8, params)
    print(f"{kind:9s} best ratio {r.ratio:.3f} -> {r.db:.3f} dB")

# %% [markdown]
# ## Steady state in the rotating-wave limit
# Raising G+ toward G- deepens the stationary squeezing.

# %%
for ratio in np.linspace(0.5, 0.9, 5):
    ss = steady_state(ratio * g_minus, g_minus, params)
    print(f"ratio {ratio:.1f}: steady ΔX1² = {ss.var_x1:.4f}")
