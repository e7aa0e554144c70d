"""Parameterization tuples: MC averages whose gradient graph does not grow with M.

An MC average ``(1/M) sum_i g(W(theta, xi_i))`` is rewritten as
``sum_j n_j(theta) * t_j(xi_1..xi_M) + offset(xi)`` where ``t`` and ``offset``
are sample averages computed without gradients and entered on the tape as
constants.  Only the ``d_P`` products ``n_j * t_j`` (interaction nodes) and the
handful of nodes building ``n`` require gradients, whatever M is.

The main entry points are :func:`build_tuple` (picks the construction for a
family and a g), :func:`evaluate_tuple`, and the naive baseline
:func:`direct_mc_build` used for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import tape as tp
from .distributions import DistributionSpec, FamilyKind, LogDensityTerm, TermShape, family
from .errors import NoConstantStatError, UnsupportedG

MAX_DEGREE = 20


# -- monomial bookkeeping ----------------------------------------------------


@lru_cache(maxsize=None)
def monomial_exponents(k: int, S: int) -> tuple[tuple[int, ...], ...]:
    """Exponent vectors of total degree ``k`` in ``S`` variables, graded lex order."""
    if S == 1:
        return ((k,),)
    out = []
    for first in range(k, -1, -1):
        for rest in monomial_exponents(k - first, S - 1):
            out.append((first,) + rest)
    return tuple(out)


def multinomial(k: int, e: Sequence[int]) -> int:
    out = math.factorial(k)
    for x in e:
        out //= math.factorial(x)
    return out


@dataclass(frozen=True)
class MonomialBasis:
    exponents: tuple[tuple[int, ...], ...]
    coefficients: tuple[int, ...]


def monomial_basis(k: int, S: int, up_to: bool = False) -> MonomialBasis:
    """Degree-``k`` monomials (or all degrees 1..k with ``up_to``) and multinomial coefficients."""
    _check_degree(k)
    degrees = range(1, k + 1) if up_to else (k,)
    exps = tuple(e for d in degrees for e in monomial_exponents(d, S))
    return MonomialBasis(exps, tuple(multinomial(sum(e), e) for e in exps))


def _check_degree(k):
    if not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"degree must be in 1..{MAX_DEGREE}, got {k}")


def dp_power(k: int, S: int) -> int:
    """Interaction count for ``g(w) = w^k`` with S sufficient statistics."""
    if k < 1 or S < 1:
        raise ValueError("k and S must be positive")
    return math.comb(k + S - 1, S - 1)


def dp_polynomial(K: int, S: int) -> int:
    """Interaction count for a degree-K polynomial, constant term excluded."""
    if K < 1 or S < 1:
        raise ValueError("K and S must be positive")
    return math.comb(K + S, S) - 1


def dp_taylor_routes(K: int, S: int) -> tuple[int, int]:
    """Counts for the two Taylor constructions: S+1 indeterminates, and shift absorption."""
    if K < 1 or S < 2:
        raise ValueError("need K >= 1 and S >= 2")
    route1 = (K + 1) * math.comb(K + S + 1, S) // (S + 1) - (K + 1)
    route2 = (K + 1) * math.comb(K + S, S - 1) // S + 1
    return route1, route2


# -- Taylor expansions -------------------------------------------------------


@dataclass(frozen=True)
class TaylorSpec:
    """Truncated series ``sum_k c_k (w - center)^k``."""

    center: float
    coefficients: tuple[float, ...]
    label: str = "taylor"
    radius: float = math.inf

    @property
    def K(self) -> int:
        return len(self.coefficients) - 1

    def apply(self, w):
        d = w - self.center
        out = self.coefficients[0]
        for k in range(1, len(self.coefficients)):
            c = self.coefficients[k]
            if c != 0.0:
                out = out + c * tp.pow_int(d, k)
        return out


def taylor_spec(g: LogDensityTerm, K: int, center: float = 1.0) -> TaylorSpec:
    """K-term Taylor series of ``ln w`` or ``w^-k`` about ``center > 0``."""
    _check_degree(K)
    a = float(center)
    if a <= 0:
        raise ValueError("expansion center must be positive")
    if g.shape is TermShape.LOG:
        coefs = [math.log(a)] + [(-1) ** (k + 1) / (k * a**k) for k in range(1, K + 1)]
    elif g.shape is TermShape.INV_POWER:
        p = g.k
        coefs = [(-1) ** j * math.comb(p + j - 1, j) * a ** (-p - j) for j in range(K + 1)]
    else:
        raise UnsupportedG(f"no built-in Taylor series for {g.label}")
    return TaylorSpec(a, tuple(coefs), f"taylor[{g.label},K={K},a={a:g}]", radius=a)


def _sigmoid_derivative_polys(n: int) -> list[np.polynomial.Polynomial]:
    # d^j sigma / dx^j as a polynomial in s = sigma(x), using sigma' = s (1 - s)
    P = np.polynomial.Polynomial
    polys = [P([0.0, 1.0])]
    ds = P([0.0, 1.0, -1.0])
    for _ in range(n):
        polys.append(polys[-1].deriv() * ds)
    return polys


def logsigmoid_taylor(K: int, center: float = 0.0, scale: float = 1.0, loc: float = 0.0) -> TaylorSpec:
    """Series of ``ln sigmoid((w - loc) / scale)`` about ``w = center``."""
    _check_degree(K)
    z0 = (center - loc) / scale
    s = 1.0 / (1.0 + math.exp(-z0))
    polys = _sigmoid_derivative_polys(K)
    coefs = [-math.log1p(math.exp(-z0)) if z0 > -30 else z0]
    for k in range(1, K + 1):
        # f(z) = ln sigma(z): f' = 1 - sigma, f^(k) = -sigma^(k-1) for k >= 2
        dk = (1.0 - s) if k == 1 else -polys[k - 1](s)
        coefs.append(dk / math.factorial(k) / scale**k)
    return TaylorSpec(center, tuple(coefs), f"taylor[logsigmoid,K={K},a={center:g}]", radius=math.pi * scale)


# -- linear forms ------------------------------------------------------------


@dataclass(frozen=True)
class Form:
    """``L = sum_s eta_s(theta) * T_s(eps)``.

    ``prepare`` maps raw ancillary draws to the column the statistics act on;
    ``suff`` returns one entry per component, a scalar for constant statistics.
    """

    S: int
    eta: Callable[[Sequence], list]
    suff: Callable[[np.ndarray], list]
    prepare: Callable[[np.ndarray], np.ndarray]
    theta_free: tuple[bool, ...]
    const_stat: tuple[int, float] | None = None
    transform: Callable | None = None
    label: str = ""


def _column(xi, coord=0):
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim == 1:
        return xi
    return xi[:, coord]


def family_form(spec: DistributionSpec, coord: int = 0) -> Form:
    """Base linear form of a posterior family (before any output transform)."""
    if spec.name == "radial":
        def prepare(xi):
            xi = np.asarray(xi, dtype=np.float64)
            if xi.ndim == 1:
                # already the composite (xi / ||xi||) * |r| column
                return xi
            return spec.epsilon(xi)[:, coord]
    else:
        def prepare(xi):
            return _column(xi, coord)
    return Form(
        S=spec.S,
        eta=spec.eta,
        suff=spec.suff,
        prepare=prepare,
        theta_free=(False,) * spec.S,
        const_stat=spec.const_stat,
        transform=spec.transform,
        label=spec.name,
    )


def linear_form(S: int, const_first: bool = False) -> Form:
    """Generic form: theta is the eta vector itself, xi an (M, S) statistics matrix."""

    def suff(X):
        cols = [X[:, s] for s in range(S)]
        if const_first:
            cols[0] = 1.0
        return cols

    return Form(
        S=S,
        eta=lambda th: list(th),
        suff=suff,
        prepare=lambda xi: np.atleast_2d(np.asarray(xi, dtype=np.float64)),
        theta_free=(False,) * S,
        const_stat=(0, 1.0) if const_first else None,
        label=f"linear[S={S}]",
    )


def log_form(form: Form) -> Form:
    """ln(eta * T) = ln(eta) * 1 + 1 * ln(T) for a one-component positive form."""
    if form.S != 1:
        raise UnsupportedG("log factorization needs a single-component (scaling) form")
    return Form(
        S=2,
        eta=lambda th: [tp.log(form.eta(th)[0]), 1.0],
        suff=lambda col: [1.0, np.log(form.suff(col)[0])],
        prepare=form.prepare,
        theta_free=(False, True),
        const_stat=(0, 1.0),
        label=f"log({form.label})",
    )


def abs_form(form: Form) -> Form:
    # |eta * T| = eta * |T| because eta > 0 on a scaling family
    if form.S != 1:
        raise UnsupportedG("|w| factorizes only on a scaling form")
    return Form(1, form.eta, lambda col: [np.abs(form.suff(col)[0])], form.prepare, form.theta_free, None,
                label=f"abs({form.label})")


def shifted_form(form: Form, a: float) -> Form:
    """Absorb ``L - a`` into the eta of the constant statistic: eta_j - a / c."""
    if form.const_stat is None:
        raise NoConstantStatError(f"{form.label} has no constant sufficient statistic")
    j, c = form.const_stat

    def eta(th):
        e = list(form.eta(th))
        e[j] = e[j] - a / c
        return e

    return Form(form.S, eta, form.suff, form.prepare, form.theta_free, form.const_stat,
                label=f"shift({form.label},{a:g})")


def augmented_form(form: Form, a: float) -> Form:
    """``L - a`` with ``-a`` as an extra theta-free component paired with T = 1."""
    return Form(
        S=form.S + 1,
        eta=lambda th: list(form.eta(th)) + [-a],
        suff=lambda col: list(form.suff(col)) + [1.0],
        prepare=form.prepare,
        theta_free=form.theta_free + (True,),
        const_stat=(form.S, 1.0),
        label=f"augment({form.label},{a:g})",
    )


# -- tuples ------------------------------------------------------------------


@dataclass(frozen=True)
class ParamTuple:
    """``G(n, t) = sum_j n_j * t_j + offset``.

    ``n_builder`` maps an eta vector to ``d_P`` tape values, ``t_aggregator``
    maps the statistics of M samples to ``d_P`` sample means, ``offset`` is the
    gradient-free remainder (theta-free monomials, constant terms).
    """

    g_kind: str
    d_P: int
    form: Form
    n_builder: Callable[[Sequence], list]
    t_aggregator: Callable[[list], np.ndarray]
    offset: Callable[[Sequence, list], float]
    monomials: tuple[tuple[int, ...], ...] = ()


class _PowerCache:
    """Per-aggregation cache of column powers so shared factors are computed once."""

    def __init__(self, cols):
        self.cols = cols
        self.cache = {}

    def get(self, s, e):
        key = (s, e)
        if key not in self.cache:
            c = self.cols[s]
            if np.isscalar(c):
                self.cache[key] = float(c) ** e
            elif e == 1:
                self.cache[key] = c
            elif e == 2:
                self.cache[key] = c * c
            elif e > 2 and (s, e - 1) in self.cache:
                self.cache[key] = self.cache[(s, e - 1)] * c
            else:
                self.cache[key] = np.power(c, e)
        return self.cache[key]

    def mean_product(self, e):
        scalar = 1.0
        factors = []
        for s, x in enumerate(e):
            if x == 0:
                continue
            c = self.cols[s]
            if np.isscalar(c):
                scalar *= float(c) ** x
            else:
                factors.append((s, x))
        if not factors:
            return scalar
        degree = sum(x for _, x in factors)
        if degree == 1:
            c = self.cols[factors[0][0]]
            return scalar * float(np.sum(c)) / c.shape[0]
        if degree == 2:
            # one BLAS pass, no temporary
            a = self.cols[factors[0][0]]
            b = self.cols[factors[-1][0]]
            return scalar * float(np.dot(a, b)) / a.shape[0]
        arrays = [self.get(s, x) for s, x in factors]
        prod = arrays[0]
        for a in arrays[1:]:
            prod = prod * a
        return scalar * float(np.sum(prod)) / prod.shape[0]


def monomial_tuple(form: Form, degree_coefs: dict[int, float], label: str, constant: float = 0.0) -> ParamTuple:
    """Tuple for ``constant + sum_k a_k L^k`` over ``form``.

    Negative degrees are allowed for single-component forms only.  Monomials
    that involve theta-free components alone are moved into the offset.
    """
    grad_monos, free_monos = [], []
    for k, a in sorted(degree_coefs.items()):
        if a == 0.0:
            continue
        if k < 0:
            if form.S != 1:
                raise UnsupportedG("negative powers need a single-component form")
            exps = ((k,),)
        else:
            _check_degree(k)
            exps = monomial_exponents(k, form.S)
        for e in exps:
            coef = float(a) * (multinomial(k, e) if k > 0 else 1)
            if any(x != 0 and not form.theta_free[s] for s, x in enumerate(e)):
                grad_monos.append((e, coef))
            else:
                free_monos.append((e, coef))
    theta_free = form.theta_free

    def n_builder(eta):
        powers = {}
        out = []
        for e, coef in grad_monos:
            factor = coef
            vars_ = []
            for s, x in enumerate(e):
                if x == 0:
                    continue
                if theta_free[s]:
                    factor *= float(eta[s]) ** x
                    continue
                key = (s, x)
                if key not in powers:
                    powers[key] = eta[s] if x == 1 else tp.pow_int(eta[s], x)
                vars_.append(powers[key])
            v = vars_[0]
            for other in vars_[1:]:
                v = v * other
            out.append(v if factor == 1.0 else v * factor)
        return out

    def t_aggregator(cols):
        pc = _PowerCache(cols)
        return np.array([pc.mean_product(e) for e, _ in grad_monos])

    def offset(eta, cols):
        if not free_monos:
            return float(constant)
        pc = _PowerCache(cols)
        total = float(constant)
        for e, coef in free_monos:
            f = coef
            for s, x in enumerate(e):
                if x:
                    f *= float(eta[s]) ** x
            total += f * pc.mean_product(e)
        return total

    return ParamTuple(label, len(grad_monos), form, n_builder, t_aggregator, offset,
                      tuple(e for e, _ in grad_monos))


def _resolve_form(spec_or_form, S=2) -> Form:
    if isinstance(spec_or_form, Form):
        return spec_or_form
    if isinstance(spec_or_form, DistributionSpec):
        return family_form(spec_or_form)
    if isinstance(spec_or_form, str):
        return family_form(family(spec_or_form))
    if S == 2:
        return family_form(family("normal"))
    return linear_form(S)


def build_scaling_tuple(g: LogDensityTerm, spec="exponential") -> ParamTuple:
    """d_P = 1 tuples for w^k, ln w and w^-k on a scaling family."""
    form = _resolve_form(spec)
    if form.S != 1:
        raise UnsupportedG(f"{form.label} is not a scaling family")
    if g.shape is TermShape.POWER:
        return monomial_tuple(form, {g.k: 1.0}, g.label)
    if g.shape is TermShape.INV_POWER:
        return monomial_tuple(form, {-g.k: 1.0}, g.label)
    if g.shape is TermShape.LOG:
        return monomial_tuple(log_form(form), {1: 1.0}, g.label)
    raise UnsupportedG(f"no scaling tuple for {g.label}")


def build_locscale_power_tuple(k: int, S: int = 2, spec=None) -> ParamTuple:
    form = _resolve_form(spec, S)
    return monomial_tuple(form, {k: 1.0}, f"w^{k}")


def build_polynomial_tuple(coefficients: Sequence[float], S: int = 2, spec=None, constant: float = 0.0) -> ParamTuple:
    """``constant + sum_k a_k w^k`` with ``coefficients = (a_1, ..., a_K)``."""
    form = _resolve_form(spec, S)
    coefs = {k + 1: float(a) for k, a in enumerate(coefficients)}
    return monomial_tuple(form, coefs, f"poly[K={len(coefficients)}]", constant)


def build_taylor_tuple(g, K: int | None = None, center: float = 1.0, spec=None, route: str = "auto",
                       S: int = 2) -> ParamTuple:
    """Tuple for the truncated Taylor series of ``g`` (a term or a :class:`TaylorSpec`).

    Route ``"shift"`` absorbs ``-center`` into the eta of a constant statistic
    (one extra subtraction node, no extra interactions); route ``"augment"``
    treats ``-center`` as an additional indeterminate.  ``"auto"`` prefers the
    shift route whenever the family has a constant statistic.
    """
    ts = g if isinstance(g, TaylorSpec) else taylor_spec(g, K, center)
    form = _resolve_form(spec, S)
    coefs = {k: c for k, c in enumerate(ts.coefficients) if k > 0}
    if route == "auto":
        route = "shift" if form.const_stat is not None else "augment"
    if route == "shift":
        inner = shifted_form(form, ts.center)
    elif route == "augment":
        inner = augmented_form(form, ts.center)
    else:
        raise ValueError(f"unknown route {route!r}")
    return monomial_tuple(inner, coefs, ts.label, constant=ts.coefficients[0])


def build_tuple(spec: DistributionSpec, g: LogDensityTerm) -> ParamTuple:
    """Pick the M-independent construction for ``g`` under a posterior family."""
    form = family_form(spec)
    kind = spec.kind
    s = g.shape
    if kind is FamilyKind.SCALING:
        if s is TermShape.ABS and not g.shift:
            return monomial_tuple(abs_form(form), {1: 1.0}, g.label)
        if s is TermShape.LOG_POWER:
            return monomial_tuple(log_form(form), {g.k: 1.0}, g.label)
        if s in (TermShape.POWER, TermShape.LOG, TermShape.INV_POWER):
            return build_scaling_tuple(g, form)
    elif kind is FamilyKind.LOCATION_SCALE:
        if s is TermShape.POWER:
            return monomial_tuple(form, {g.k: 1.0}, g.label)
    elif kind is FamilyKind.TRANSFORMED and spec.transform_name == "exp":
        # ln w = L, so powers of ln w are powers of the base location-scale form
        base = Form(form.S, form.eta, form.suff, form.prepare, form.theta_free, form.const_stat, None, form.label)
        if s is TermShape.LOG:
            return monomial_tuple(base, {1: 1.0}, g.label)
        if s is TermShape.LOG_POWER:
            return monomial_tuple(base, {g.k: 1.0}, g.label)
    raise UnsupportedG(f"no M-independent tuple for {g.label} under {spec.name}")


def combine(tup: ParamTuple, tape: tp.Tape, eta: Sequence, cols: list) -> tp.Var:
    """Emit the d_P interaction nodes and the final sum for given eta and statistics."""
    n = tup.n_builder(eta)
    t = tup.t_aggregator(cols)
    terms = [tape.dot(nj, float(tj)) for nj, tj in zip(n, t)]
    off = tup.offset(eta, cols)
    if off != 0.0 or not terms:
        terms.append(tape.constant(off))
    return tape.sum(terms)


def evaluate_tuple(tup: ParamTuple, tape: tp.Tape, theta: Sequence, xi) -> tp.Var:
    form = tup.form
    return combine(tup, tape, form.eta(theta), form.suff(form.prepare(xi)))


# -- naive baseline ----------------------------------------------------------


def _row(c, i):
    return c if np.isscalar(c) else float(c[i])


def direct_mc_build(tape: tp.Tape, g, spec, theta: Sequence, xi, style: str = "natural") -> tp.Var:
    """``(1/M) sum_i g(W(theta, xi_i))`` with one realization subgraph per sample.

    ``style="natural"`` realizes ``w_i = sum_s eta_s * T_s(xi_i)`` and applies
    ``g`` on the tape.  ``style="monomial"`` expands ``w_i^k`` per sample, the
    convention in which a degree-k location-scale build has dp_power(k, S)
    interactions per sample.
    """
    form = _resolve_form(spec)
    col = form.prepare(xi)
    cols = form.suff(col)
    M = col.shape[0]
    eta = form.eta(theta)
    if style == "monomial":
        if not (isinstance(g, LogDensityTerm) and g.shape is TermShape.POWER) or form.transform is not None:
            raise UnsupportedG("monomial-style direct builds are defined for w^k only")
        tup = monomial_tuple(form, {g.k: 1.0}, g.label)
        n = tup.n_builder(eta)
        per_sample = []
        for i in range(M):
            row = [np.array([_row(c, i)]) if not np.isscalar(c) else c for c in cols]
            t = tup.t_aggregator(row)
            per_sample.append(tape.sum([tape.dot(nj, float(tj)) for nj, tj in zip(n, t)]))
        return tape.sum(per_sample) * (1.0 / M)
    if style != "natural":
        raise ValueError(f"unknown style {style!r}")
    values = []
    for i in range(M):
        parts = []
        for s in range(form.S):
            e = eta[s]
            c = _row(cols[s], i)
            parts.append(tape.dot(e, c) if isinstance(e, tp.Var) else e * c)
        w = tape.sum(parts)
        if form.transform is not None:
            w = form.transform(w)
        values.append(g.apply(w))
    return tape.sum(values) * (1.0 / M)


def direct_mc_value(g, spec, theta: Sequence, xi) -> float:
    """Vectorized oracle for the direct MC average (no tape)."""
    form = _resolve_form(spec)
    col = form.prepare(xi)
    cols = form.suff(col)
    eta = [float(e.value) if isinstance(e, tp.Var) else e for e in form.eta(theta)]
    w = sum(e * c for e, c in zip(eta, cols))
    if form.transform is not None:
        w = np.exp(w)
    w = np.broadcast_to(np.asarray(w, dtype=np.float64), col.shape[:1])
    return float(np.mean(g.apply(w)))


def taylor_outside_fraction(spec, theta: Sequence, xi, ts: TaylorSpec) -> float:
    """Fraction of realized samples outside the series' convergence radius."""
    form = _resolve_form(spec)
    cols = form.suff(form.prepare(xi))
    eta = [float(e.value) if isinstance(e, tp.Var) else e for e in form.eta(theta)]
    w = np.asarray(sum(e * c for e, c in zip(eta, cols)), dtype=np.float64)
    return float(np.mean(np.abs(w - ts.center) >= ts.radius))
