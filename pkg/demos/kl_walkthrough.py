"""KL(q || p) per weight, three ways, plus the Taylor route for a Gamma prior.

    python demos/kl_walkthrough.py
"""

from mcrepar import kl
from mcrepar import tape as tp


def estimate(posterior, prior, method, theta):
    t = tp.Tape()
    th = t.params(theta)
    br = kl.kl_estimate(posterior, prior, method, t, th)
    return br, t.gradient(br.handle, th)


prior = ("normal", (0.0, 1.0))
for method in (kl.ClosedForm(), kl.DirectMC(2000, seed=1), kl.ReparMC(2000, seed=1)):
    br, grad = estimate("normal", prior, method, [1.0, 1.0])
    print(f"{method.kind:>6}: KL {br.total:.6f}  grad {grad}  grad nodes {br.grad_nodes_used}")

# ln w has no exact tuple under a location-scale posterior, so a Gamma prior
# goes through a truncated Taylor series about the posterior mean
m = kl.ReparMC(20000, seed=2, taylor_K=5, taylor_center=1.0)
br, _ = estimate("normal", ("gamma", (2.0, 1.0)), m, [1.0, 0.05])
ref, _ = estimate("normal", ("gamma", (2.0, 1.0)), kl.DirectMC(20000, seed=2), [1.0, 0.05])
print(f"gamma prior: taylor {br.total:.6f}, direct {ref.total:.6f}, routes {br.routes}")

# Laplace has |w|, which only the scaling families handle exactly
br, _ = estimate("exponential", ("laplace", (0.0, 1.0)), kl.ReparMC(5000, seed=3), [0.5])
print(f"exponential || laplace: {br.total:.6f}, routes {br.routes}")
