"""
Distribution of the voltage change under random power changes
==============================================================

Every odd-numbered bus of the 37-node feeder changes its draw at random,
with correlated Gaussian P and Q. The voltage change at bus 9 phase a is
then a linear function of a Gaussian vector, and its magnitude is close to
Nakagami distributed. Fitting takes milliseconds; sampling checks the fit.
"""

# %%
import time

import numpy as np

from pvsa import assemble_covariance, build_sensitivity_vectors, load_feeder, load_scenario, solve
from pvsa.stochastic import fitted_js_distance, gamma_params, mc_distribution, moments, nakagami_params, violation_probability

graph, loads = load_feeder("ieee37")
base = solve(graph, loads)
scenario = load_scenario("odd-nodes")
cov = assemble_covariance(graph, scenario)
print(f"{len(scenario.actors)} actors, covariance {cov.matrix.shape}, support {cov.support.size}")

# %%
# Moments of the real and imaginary parts, then the fitted law.
t = time.perf_counter()
cv = build_sensitivity_vectors(graph, base, "9", "a")
mo = moments(cv, cov)
nk = nakagami_params(gamma_params(mo))
print(f"fit in {1e3 * (time.perf_counter() - t):.1f} ms")
print(f"var_r {mo.var_r:.2f} V^2  var_i {mo.var_i:.2f} V^2  cov {mo.c:.2f} V^2")
print(f"Nakagami m = {nk.m:.4f}, Omega = {nk.omega / graph.v_base**2:.4e} pu^2, mean {nk.mean / graph.v_base:.5f} pu")

# %%
# How likely is a change above a given threshold?
for thr in (0.005, 0.01, 0.02, 0.05):
    print(f"P(|dV| > {thr} pu) = {violation_probability(nk, thr, graph.v_base):.4g}")

# %%
# Monte-Carlo check. Linear mode applies the same linear map to each draw;
# oracle mode runs the full load flow for each draw, in batches.
lin = mc_distribution(graph, loads, cov, "9", "a", 50_000, seed=1, base=base)
orc = mc_distribution(graph, loads, cov, "9", "a", 10_000, seed=1, mode="oracle", jobs=2, base=base)
for name, r in (("linear", lin), ("oracle", orc)):
    js = fitted_js_distance(r.histogram, nk, graph.v_base)
    print(f"{name:>6}: {r.magnitudes.size} samples, mean {r.magnitudes.mean():.5f} pu, JS distance to fit {js:.4f}")

# %%
# A coarse text histogram of the oracle samples against the fitted density.
h = orc.histogram
edges = h.edges[::20]
counts = np.add.reduceat(h.counts, np.arange(0, h.counts.size, 20))
for lo, c in zip(edges[:-1], counts):
    print(f"{lo:.4f} {'#' * int(60 * c / counts.max())}")
