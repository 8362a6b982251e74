# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Protocol duration and cavity decay
#
# Two batch studies run through the same code paths as the CLI.  The first
# finds the best simplified protocol per duration with amplitudes capped at
# 200 kHz.  The second starts from the ground state and shrinks the cavity
# decay rate.

# %%
from pathlib import Path

from optosqueeze import experiments
from optosqueeze.io import load_config, parse_config
from optosqueeze.model import TWO_PI

configs = Path.cwd().parent / "configs" if Path.cwd().name == "notebooks" else Path("configs")

# %% [markdown]
# ## Duration sweep (a few durations to keep this quick)

# %%
cfg = load_config(configs / "qsl_sweep.toml")
raw = dict(cfg.raw, sweep={**cfg.raw["sweep"], "T_kappa_units": [0.5, 1, 2, 8]})
for key in ("T_min_s", "T_max_s", "n_points"):
    raw["sweep"].pop(key)
records, summary = experiments.qsl_sweep(parse_config(raw))
for r in records:
    print(f"T = {r['T_kappa_units']:4.1f} x 2pi/kappa: {r['family']:8s} G-/2pi {r['g_minus'] / TWO_PI / 1e3:6.1f} kHz "
          f"ratio {r['ratio']:.3f} -> {r['max_db_full']:.2f} dB (rwa {r['max_db_rwa']:.2f})")
print("smallest duration above 3 dB:", summary["smallest_T_above_threshold"])

# %% [markdown]
# ## Reduced cavity decay

# %%
_, ks = experiments.kappa_study(load_config(configs / "kappa_study.toml"))
for r in ks["runs"]:
    print(f"kappa/{r['kappa_reduction']:<4g} extrema {r['n_extrema']:2d}, first minimum {r['first_min_time'] * 1e6:6.2f} us, "
          f"plateau {r['plateau_var']:.4f}")
