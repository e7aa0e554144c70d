"""KL(q_theta || p) per weight, as E[ln q(w)] - E[ln p(w)].

Three backends: closed form (Gaussian || Gaussian), direct MC (one subgraph
per sample) and reparameterized MC (one parameterization tuple per prior
term).  Direct and reparameterized estimates drawn from the same seed use the
same ancillary draws, so they agree to rounding.

theta is either one weight's parameters (``[mu, sigma]``, ``[theta]``) or a
mean-field vector ``(mus, sigmas)``; for the vector form the ancillary matrix
has one column per weight (Radial: one shared direction per draw, last column
the radius).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import repar as rp
from . import tape as tp
from .distributions import (
    DistributionSpec,
    FamilyKind,
    LogDensityTerm,
    Prior,
    TermShape,
    _as_prior,
    family,
    kl_gaussian_closed_form,
    log_pdf_terms,
    prior_log_pdf,
    radial,
)
from .errors import (
    DomainError,
    UnsupportedG,
    UnsupportedPosteriorError,
    UnsupportedTermError,
)

EULER_GAMMA = 0.5772156649015329
HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)

CLOSED = "closed"
DIRECT = "direct"
REPAR = "repar"


@dataclass(frozen=True)
class KlMethod:
    kind: str
    M: int = 1
    seed: int | None = None
    # Taylor fallback for terms without an exact tuple (ln w, 1/w^k or
    # logistic priors under location-scale posteriors)
    taylor_K: int | None = None
    taylor_center: float | None = None

    def __post_init__(self):
        if self.kind not in (CLOSED, DIRECT, REPAR):
            raise ValueError(f"unknown KL method {self.kind!r}")
        if self.kind != CLOSED and self.M < 1:
            raise ValueError("M must be >= 1")


def ClosedForm() -> KlMethod:
    return KlMethod(CLOSED)


def DirectMC(M: int, seed=None, **kw) -> KlMethod:
    return KlMethod(DIRECT, int(M), seed, **kw)


def ReparMC(M: int, seed=None, **kw) -> KlMethod:
    return KlMethod(REPAR, int(M), seed, **kw)


@dataclass
class KlBreakdown:
    entropy_part: float
    cross_part: float
    total: float
    grad_nodes_used: int
    handle: tp.Var | float = field(repr=False, default=0.0)
    routes: dict = field(default_factory=dict)


# -- sampling ----------------------------------------------------------------


def _is_vector(theta) -> bool:
    return isinstance(theta[0], (list, tuple, np.ndarray))


def _per_weight(theta) -> list[list]:
    if not _is_vector(theta):
        return [list(theta)]
    return [list(t) for t in zip(*theta)]


def draw_ancillary(posterior: DistributionSpec, M: int, n_weights: int = 1, seed=None) -> np.ndarray:
    """(M, n_weights) ancillary matrix; Radial gets (M, n_weights + 1)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if posterior.name == "radial":
        spec = posterior if posterior.dim == n_weights else radial(n_weights)
        return spec.ancillary(rng, M)
    return posterior.ancillary(rng, M * n_weights).reshape(M, n_weights)


def weight_columns(posterior: DistributionSpec, xi: np.ndarray) -> np.ndarray:
    """Per-weight statistic columns (Radial: the composite direction times radius)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    if posterior.name == "radial":
        return posterior.epsilon(xi)
    return xi


def _realized(posterior, theta_j, col):
    eta = [float(e.value) if isinstance(e, tp.Var) else float(e) for e in posterior.eta(theta_j)]
    T = posterior.suff(col)
    w = sum(e * t for e, t in zip(eta, T))
    w = np.broadcast_to(np.asarray(w, dtype=np.float64), col.shape)
    return np.exp(w) if posterior.transform_name == "exp" else w


def _check_support(posterior, pr: Prior, theta_j, col):
    if pr.positive_support and not posterior.positive_support:
        w = _realized(posterior, theta_j, col)
        if np.any(w <= 0):
            raise DomainError(
                f"{posterior.name} samples fall outside the positive support of the {pr.name} prior"
            )


# -- per-term estimators -----------------------------------------------------

_TUPLES: dict = {}


def _tuple_for(posterior: DistributionSpec, g: LogDensityTerm, method: KlMethod):
    key = (posterior.name, g.shape, g.k, g.shift, method.taylor_K, method.taylor_center)
    if key in _TUPLES:
        return _TUPLES[key]
    try:
        tup, route = rp.build_tuple(posterior, g), "tuple"
    except UnsupportedG:
        tup, route = _taylor_fallback(posterior, g, method), "taylor"
    _TUPLES[key] = (tup, route)
    return tup, route


def _taylor_fallback(posterior, g, method):
    if g.shape not in (TermShape.LOG, TermShape.INV_POWER):
        raise UnsupportedTermError(f"no tuple for {g.label} under {posterior.name}")
    if method.taylor_K is None:
        raise UnsupportedTermError(f"{g.label} under {posterior.name} needs a Taylor spec (taylor_K)")
    if posterior.kind is FamilyKind.TRANSFORMED:
        raise UnsupportedTermError("Taylor fallback is defined for untransformed posteriors only")
    center = 1.0 if method.taylor_center is None else method.taylor_center
    return rp.build_taylor_tuple(g, method.taylor_K, center, spec=posterior)


def _logistic_taylor(pr: Prior, posterior, method):
    m, s = pr.params
    if method.taylor_K is None:
        raise UnsupportedTermError("logistic prior needs a Taylor spec (taylor_K)")
    if posterior.kind is FamilyKind.TRANSFORMED:
        raise UnsupportedTermError("Taylor fallback is defined for untransformed posteriors only")
    K = method.taylor_K
    center = m if method.taylor_center is None else method.taylor_center
    # ln p = ln sigmoid(z) + ln sigmoid(-z) - ln s
    a = rp.logsigmoid_taylor(K, center, s, m)
    b = rp.logsigmoid_taylor(K, center, -s, m)
    coefs = tuple(x + y for x, y in zip(a.coefficients, b.coefficients))
    coefs = (coefs[0] - math.log(s),) + coefs[1:]
    ts = rp.TaylorSpec(center, coefs, f"taylor[logistic,K={K},a={center:g}]", radius=math.pi * s)
    return rp.build_taylor_tuple(ts, spec=posterior)


def _direct_mean(tape, posterior, theta_j, col, fn):
    """(1/M) sum_i fn(w_i) with w_i realized on the tape per sample."""
    eta = posterior.eta(theta_j)
    cols = posterior.suff(col)
    vals = []
    for i in range(col.shape[0]):
        parts = []
        for e, c in zip(eta, cols):
            ci = c if np.isscalar(c) else float(c[i])
            parts.append(tape.dot(e, ci) if isinstance(e, tp.Var) else e * ci)
        w = tape.sum(parts)
        if posterior.transform is not None:
            w = posterior.transform(w)
        vals.append(fn(w))
    return tape.sum(vals) * (1.0 / col.shape[0])


def _cross_one(tape, posterior, pr: Prior, method, theta_j, col, routes):
    """E[ln p(w)] for one weight."""
    _check_support(posterior, pr, theta_j, col)
    if method.kind == DIRECT:
        routes["ln p"] = "direct"
        return _direct_mean(tape, posterior, theta_j, col, lambda w: prior_log_pdf(pr, w))
    if pr.name == "logistic":
        key = (posterior.name, "logistic", pr.params, method.taylor_K, method.taylor_center)
        if key not in _TUPLES:
            _TUPLES[key] = _logistic_taylor(pr, posterior, method)
        routes["logistic"] = "taylor"
        return rp.evaluate_tuple(_TUPLES[key], tape, theta_j, col)
    const, terms = log_pdf_terms(pr)
    parts = [const]
    for g in terms:
        if g.shape is TermShape.ABS:
            try:
                tup, route = _tuple_for(posterior, g, method)
            except UnsupportedTermError:
                warnings.warn(
                    f"|w - {g.shift:g}| has no tuple under {posterior.name}; using direct MC for this term",
                    stacklevel=3,
                )
                routes[g.label] = "direct"
                parts.append(_direct_mean(tape, posterior, theta_j, col, lambda w, g=g: g.evaluate(w)))
                continue
        else:
            tup, route = _tuple_for(posterior, g, method)
        routes[g.label] = route
        parts.append(rp.evaluate_tuple(tup, tape, theta_j, col) * g.coefficient)
    return tape.sum(parts)


# -- entropy -----------------------------------------------------------------


def neg_entropy_closed(posterior: DistributionSpec, theta_j):
    """E[ln q(w)] in closed form for one weight (theta may be tape handles)."""
    name = posterior.name
    if name == "normal":
        return -tp.log(theta_j[1]) - HALF_LOG_2PIE
    if name == "radial":
        return -tp.log(theta_j[1])
    if name == "exponential":
        return -tp.log(theta_j[0]) - 1.0
    if name == "rayleigh":
        return -tp.log(theta_j[0]) + 0.5 * math.log(2.0) - 1.0 - 0.5 * EULER_GAMMA
    if name == "lognormal":
        return -theta_j[0] - tp.log(theta_j[1]) - HALF_LOG_2PIE
    raise UnsupportedPosteriorError(name)


def _entropy_one(tape, posterior, method, theta_j, col, routes):
    if posterior.name in ("normal", "radial") or method.kind == CLOSED:
        routes["ln q"] = "closed"
        return neg_entropy_closed(posterior, theta_j)
    if posterior.log_q_terms is None:
        raise UnsupportedPosteriorError(posterior.name)
    if method.kind == DIRECT:
        routes["ln q"] = "direct"
        return _direct_mean(tape, posterior, theta_j, col, lambda w: posterior.log_pdf(theta_j, w))
    const, terms = posterior.log_q_terms(theta_j)
    parts = [const]
    for g in terms:
        tup, route = _tuple_for(posterior, g, method)
        routes["ln q " + g.label] = route
        parts.append(rp.evaluate_tuple(tup, tape, theta_j, col) * g.coefficient)
    return tape.sum(parts)


def _columns_for(posterior, method, n, xi):
    if method.kind == CLOSED:
        return [None] * n
    if xi is None:
        xi = draw_ancillary(posterior, method.M, n, method.seed)
    cols = weight_columns(posterior, xi)
    if cols.shape[1] != n:
        raise ValueError(f"ancillary matrix has {cols.shape[1]} weight columns, expected {n}")
    return [cols[:, j] for j in range(n)]


def entropy_term(posterior: DistributionSpec, method: KlMethod, tape: tp.Tape, theta, xi=None):
    """Sum over weights of E[ln q(w)] (the negated entropy)."""
    weights = _per_weight(theta)
    cols = _columns_for(posterior, method, len(weights), xi)
    routes = {}
    return tape.sum([_entropy_one(tape, posterior, method, th, c, routes) for th, c in zip(weights, cols)])


def kl_estimate(posterior, prior, method: KlMethod, tape: tp.Tape, theta, xi=None) -> KlBreakdown:
    """KL over all weights in ``theta``; ``xi`` overrides the seeded draw."""
    if isinstance(posterior, str):
        posterior = family(posterior)
    pr = _as_prior(prior)
    start = len(tape)
    weights = _per_weight(theta)
    for th in weights:
        posterior.validate(th)
    routes: dict = {}

    if method.kind == CLOSED:
        if posterior.name != "normal" or pr.name != "normal":
            raise UnsupportedTermError(f"no closed form for {posterior.name} || {pr.name}")
        m0, s0 = pr.params
        ent = tape.sum([neg_entropy_closed(posterior, th) for th in weights])
        total = tape.sum([kl_gaussian_closed_form(th[0], th[1], m0, s0) for th in weights])
        cross = total - ent
        routes["kl"] = "closed"
    else:
        cols = _columns_for(posterior, method, len(weights), xi)
        ent = tape.sum([_entropy_one(tape, posterior, method, th, c, routes) for th, c in zip(weights, cols)])
        cross = -tape.sum([_cross_one(tape, posterior, pr, method, th, c, routes) for th, c in zip(weights, cols)])
        total = ent + cross
    return KlBreakdown(
        entropy_part=float(ent),
        cross_part=float(cross),
        total=float(total),
        grad_nodes_used=tape.count_grad_nodes(start),
        handle=total,
        routes=routes,
    )


# -- error sweeps ------------------------------------------------------------


def cell_seed(seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed)] + [int(k) for k in keys])


def kl_error_sweep(
    posterior_params: Sequence[float],
    prior_params: Sequence[float],
    M_grid: Sequence[int],
    R: int,
    seed: int,
    D: int = 1,
    posterior: str = "normal",
) -> list[dict]:
    """ReparMC error against the Gaussian closed form, R replications per M.

    With ``D > 1`` the model has D independent weights sharing (mu, sigma);
    the per-weight tuple aggregates are pooled over the D * M draws, which by
    linearity of the combiner equals the sum of D per-weight estimates.
    """
    mu, sigma = (float(x) for x in posterior_params)
    mu0, s0 = (float(x) for x in prior_params)
    spec = family(posterior)
    if spec.name != "normal":
        raise UnsupportedPosteriorError("the closed-form oracle covers Normal posteriors only")
    exact = D * kl_gaussian_closed_form(mu, sigma, mu0, s0)
    pr = _as_prior(("normal", (mu0, s0)))
    rows = []
    for M in M_grid:
        cell = []
        for r in range(R):
            rng = np.random.default_rng(cell_seed(seed, M, r, D))
            xi = spec.ancillary(rng, int(M) * D)[:, 0]
            tape = tp.Tape()
            th = tape.params([mu, sigma])
            t0 = time.perf_counter_ns()
            br = kl_estimate(spec, pr, ReparMC(int(M) * D), tape, th, xi=xi[:, None])
            value = D * br.total
            elapsed = time.perf_counter_ns() - t0
            st = tape.stats()
            cell.append(dict(m=int(M), replication=r, error=abs(value - exact), grad_nodes=st.grad_nodes,
                             interaction_nodes=st.interaction_nodes, wall_time_ns=elapsed, estimate=value))
        rmse = math.sqrt(sum(c["error"] ** 2 for c in cell) / len(cell))
        for c in cell:
            c["rmse"] = rmse
            if D != 1:
                c["d"] = D
        rows.extend(cell)
    return rows
