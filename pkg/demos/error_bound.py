"""
How far off can the closed form be?
===================================

The closed form ignores how the actor's own voltage moves. A conservative
bound on that error comes from the same inputs, so it can be reported
next to every prediction without running a load flow.
"""

# %%
from pvsa import Phase, delta_v_oracle, load_feeder, load_scenario, solve
from pvsa.vsa import delta_v_multi, error_bound_multi

graph, loads = load_feeder("ieee37")
base = solve(graph, loads)
scenario = load_scenario("fig4")  # 21 kW more at bus 22, phase c
oracle = delta_v_oracle(graph, loads, scenario, base=base)

# %%
# Along the path from the source to the actor, error and bound side by side.
print(" bus  error_pu   bound_pu  ratio")
for bus in ["2", "8", "20", "21", "22"]:
    dv = delta_v_multi(graph, base, scenario, bus)
    eb = error_bound_multi(graph, base, scenario, bus)
    e = abs(dv["c"] - oracle[(bus, Phase.c)]) / graph.v_base
    b = eb.bound_mag_pu[2]
    print(f"{bus:>4}  {e:.3e}  {b:.3e}  {e / b:5.3f}")

# %%
# Grow the change until it is a large fraction of the feeder load. The bound
# is linear in the change while the true error grows faster, so the margin
# shrinks with size; over this range it still holds.
for scale in (1, 5, 20, 50):
    s = scenario.scaled(scale)
    o = delta_v_oracle(graph, loads, s, base=base)
    dv = delta_v_multi(graph, base, s, "22")
    eb = error_bound_multi(graph, base, s, "22")
    e = abs(dv["c"] - o[("22", Phase.c)]) / graph.v_base
    print(f"x{scale:<3} error {e:.3e} pu   bound {eb.bound_mag_pu[2]:.3e} pu   bounded: {bool(e <= eb.bound_mag_pu[2])}")
