# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Fock-space master equation against the Gaussian oracle
#
# The Hamiltonian is quadratic and the jump operators are linear, so a
# Gaussian initial state stays Gaussian.  Any difference between the
# truncated density-matrix propagation and the moment equations is
# truncation error.

# %%
import numpy as np

from optosqueeze import SystemParams
from optosqueeze.analysis import variance
from optosqueeze.fock import FockCutoffs, initial_state, quadrature_ops
from optosqueeze.model import TWO_PI, PulsePair
from optosqueeze.moments import GaussianState, evolve_moments
from optosqueeze.propagator import cutoff_convergence, make_grid, propagate_forward

params = SystemParams.device().with_(n_th=0.5)
g_minus = TWO_PI * 5.8e3
grid = make_grid(10 * params.kappa_time, params, g_minus, "rwa")
pulses = PulsePair.constant(grid, 0.8 * g_minus, g_minus)

# %%
for cutoffs in (FockCutoffs(3, 8), FockCutoffs(4, 12), FockCutoffs(6, 20)):
    traj = propagate_forward(initial_state(params.n_th, cutoffs), pulses, params, cutoffs)
    x1 = quadrature_ops(cutoffs)[0]
    vf = np.array([variance(r, x1) for r in traj.states])
    vm = evolve_moments(GaussianState.thermal(params.n_th), pulses, params).var_x1
    print(f"{cutoffs.n_cav}x{cutoffs.n_mech}: max relative deviation {np.max(np.abs(vf / vm - 1)):.2e}")

# %% [markdown]
# `cutoff_convergence` repeats the run with both cutoffs grown by half and
# reports the relative change of the terminal variance.

# %%
report = cutoff_convergence(pulses, params, FockCutoffs(4, 12))
print(report.cutoffs, "->", report.larger, f"change {report.rel_change:.1e}", "converged:", report.converged)
