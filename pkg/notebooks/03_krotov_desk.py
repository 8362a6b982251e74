# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Krotov optimization on a small instance
#
# Starting from constant tones (G-/2π = 5.8 kHz, G+/G- = 0.7) the terminal
# variance of X1 is minimized in the rotating-wave approximation.  The
# optimized pulses are then re-evaluated with the counter-rotating terms.

# %%
import numpy as np

from optosqueeze import SystemParams
from optosqueeze.fock import FockCutoffs, initial_state
from optosqueeze.krotov import KrotovConfig, evaluate, optimize
from optosqueeze.model import TWO_PI, PulsePair
from optosqueeze.propagator import make_grid
from optosqueeze.protocols import GUESS_G_MINUS, GUESS_RATIO, line_search_ratio

params = SystemParams.device().with_(n_th=0.5)
cutoffs = FockCutoffs(4, 12)
T = 5 * params.kappa_time
grid = make_grid(T, params, GUESS_G_MINUS, "rwa")
guess = PulsePair.constant(grid, GUESS_RATIO * GUESS_G_MINUS, GUESS_G_MINUS)
rho0 = initial_state(params.n_th, cutoffs)

# %%
record = optimize(rho0, guess, KrotovConfig(max_iters=20), params, cutoffs)
for it in record.iterations[::5]:
    print(f"iteration {it.iteration:3d}  J_T = {it.J_T:.5f}  retries {it.retries}")
print("monotonic:", record.monotonic, f"wall {record.wall_time:.1f} s")

# %%
final = record.pulses_final
for mode in ("rwa", "full"):
    ev = evaluate(rho0, final, params, cutoffs, mode)
    print(f"{mode}: max squeezing {ev.max_db:.3f} dB, terminal variance {ev.J_T:.4f}")

# %% [markdown]
# A constant protocol with the same mean red amplitude, line-searched over
# its ratio, is the benchmark.

# %%
best = line_search_ratio("constant", final.mean_g_minus(), T, params, mode="rwa")
print(f"mean G-/2pi = {final.mean_g_minus() / TWO_PI / 1e3:.2f} kHz, constant ratio {best.ratio:.3f}: {best.db:.3f} dB")
print("pulse range G+/2pi [kHz]:", np.round([final.g_plus.min() / TWO_PI / 1e3, final.g_plus.max() / TWO_PI / 1e3], 2))
