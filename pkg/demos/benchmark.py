"""
Analytic queries against load-flow solves
=========================================

Once the base case is solved, a single voltage-change query is a short sum
over the actors, so its cost hardly depends on feeder size. The load flow
has to touch every bus. This reproduces the timing comparison at desk scale.
"""

# %%
from pvsa.cli import bench

rows = bench(repetitions=11, samples=5_000, mc_repetitions=1)
by = {(c, m): s for c, m, s in rows}
print(f"{'case':<8} {'method':<6} {'seconds':>10}")
for c, m, s in rows:
    print(f"{c:<8} {m:<6} {s:10.6f}")

# %%
# Ratios are what carry over between machines.
for case in ("ieee37", "ieee123"):
    print(f"{case}: query is {by[(case, 'solve')] / by[(case, 'query')]:.0f}x faster than a solve, "
          f"fit is {by[(case, 'mc')] / by[(case, 'fit')]:.0f}x faster than {5_000} oracle samples")
print(f"query time 123 vs 37 nodes: {by[('ieee123', 'query')] / by[('ieee37', 'query')]:.2f}x")
