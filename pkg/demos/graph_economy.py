"""Graph size of E[w^2] under Normal(mu, sigma): naive per-sample build vs one tuple.

    python demos/graph_economy.py
"""

import numpy as np

from mcrepar import distributions as ds
from mcrepar import repar as rp
from mcrepar import tape as tp

spec = ds.family("normal")
g = ds.power(2)
tup = rp.build_tuple(spec, g)
print(f"tuple for {g.label}: d_P = {tup.d_P}, monomials {tup.monomials}")

print(f"{'M':>7} {'direct grad':>12} {'tuple grad':>11} {'value gap':>10}")
for M in (1, 3, 10, 100, 1000, 10000):
    xi = ds.sample_ancillary(spec, M, seed=M)

    naive = tp.Tape()
    th = naive.params([0.5, 0.1])
    a = rp.direct_mc_build(naive, g, spec, th, xi)

    fast = tp.Tape()
    th = fast.params([0.5, 0.1])
    b = rp.evaluate_tuple(tup, fast, th, xi)

    print(f"{M:>7} {naive.stats().grad_nodes:>12} {fast.stats().grad_nodes:>11} {abs(a.value - b.value):>10.1e}")

# the sample-only aggregates t are plain means; only n(theta) sees gradients
xi = ds.sample_ancillary(spec, 5, seed=0)
form = tup.form
print("t =", np.round(tup.t_aggregator(form.suff(form.prepare(xi))), 4))
