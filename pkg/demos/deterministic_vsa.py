"""
Voltage change from several actors on the IEEE 37-node feeder
==============================================================

Solve the base case once, then predict the voltage change everywhere for a
handful of simultaneous load changes with the closed form. The load flow is
run a second time only to see how close the prediction is.
"""

# %%
# The feeder and the base case. Voltages are line-to-neutral phasors in volts.
import numpy as np

from pvsa import delta_v_oracle, load_feeder, load_scenario, solve
from pvsa.vsa import delta_v_all

graph, loads = load_feeder("ieee37")
base = solve(graph, loads)
print(graph, "iterations:", base.iterations)
print("lowest voltage %.4f pu" % base.v_pu[graph.phase_mask].min())

# %%
# Five actors change their draw at once (positive means more consumption).
scenario = load_scenario("table1")
for (bus, phase), ds in scenario.load_changes().items():
    print(f"  bus {bus:>3} phase {phase.name}: {ds.real / 1e3:+7.1f} kW {ds.imag / 1e3:+7.1f} kvar")

# %%
# One analytic pass gives every (bus, phase). The load flow is the reference.
analytic = delta_v_all(graph, base, scenario)
oracle = delta_v_oracle(graph, loads, scenario, base=base)
err = {k: abs(analytic[k] - oracle[k]) / graph.v_base for k in oracle}
print("max error  %.2e pu" % max(err.values()))
print("mean error %.2e pu" % np.mean(list(err.values())))

# %%
# The largest predicted drops, with the reference next to them.
top = sorted(oracle, key=lambda k: -abs(oracle[k]))[:8]
print(" bus ph  analytic_pu  oracle_pu")
for bus, ph in top:
    print(f"{bus:>4} {ph.name:>2}  {abs(analytic[(bus, ph)]) / graph.v_base:11.5f}  {abs(oracle[(bus, ph)]) / graph.v_base:9.5f}")
