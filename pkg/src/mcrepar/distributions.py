"""Posterior sampling maps, prior log-density term lists and closed-form oracles.

A posterior family realizes a weight as ``w = f(sum_s eta_s(theta) * T_s(eps))``
where ``eps`` is drawn from a parameter-free base law and ``f`` is the identity
except for transformed families (log-normal uses ``exp``).  All formulas are
written with the elementwise helpers from :mod:`mcrepar.tape`, so passing tape
handles for ``theta`` builds a graph and passing floats evaluates directly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from . import tape as tp
from .errors import (
    DegenerateDirectionError,
    ParameterDomainError,
    UnknownFamilyError,
    UnknownPriorError,
    UnsupportedTermError,
)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class FamilyKind(enum.Enum):
    SCALING = "scaling"
    LOCATION_SCALE = "location-scale"
    TRANSFORMED = "transformed"


class TermShape(enum.Enum):
    POWER = "power"  # w^k, k >= 1
    LOG = "log"  # ln w
    INV_POWER = "inverse-power"  # w^-k
    ABS = "abs"  # |w - shift|
    LOG_POWER = "log-power"  # (ln w)^k, k >= 2


@dataclass(frozen=True)
class LogDensityTerm:
    """``coefficient * shape(w)``.  The coefficient may be a tape handle."""

    shape: TermShape
    k: int = 1
    coefficient: Any = 1.0
    shift: float = 0.0

    def apply(self, w):
        """Shape value without the coefficient."""
        s = self.shape
        if s is TermShape.POWER:
            return tp.pow_int(w, self.k)
        if s is TermShape.LOG:
            return tp.log(w)
        if s is TermShape.INV_POWER:
            return tp.pow_int(w, -self.k)
        if s is TermShape.ABS:
            return tp.absolute(w - self.shift) if self.shift else tp.absolute(w)
        if s is TermShape.LOG_POWER:
            return tp.pow_int(tp.log(w), self.k)
        raise ValueError(s)

    def evaluate(self, w):
        return self.coefficient * self.apply(w)

    def with_coefficient(self, c) -> "LogDensityTerm":
        return replace(self, coefficient=c)

    @property
    def label(self) -> str:
        s = self.shape
        if s is TermShape.POWER:
            return "w" if self.k == 1 else f"w^{self.k}"
        if s is TermShape.LOG:
            return "ln w"
        if s is TermShape.INV_POWER:
            return f"w^-{self.k}"
        if s is TermShape.ABS:
            return "|w|" if not self.shift else f"|w-{self.shift:g}|"
        return f"(ln w)^{self.k}"


def power(k: int = 1, coefficient=1.0) -> LogDensityTerm:
    if k < 1:
        raise ValueError("power terms need k >= 1")
    return LogDensityTerm(TermShape.POWER, k, coefficient)


def log_term(coefficient=1.0) -> LogDensityTerm:
    return LogDensityTerm(TermShape.LOG, 1, coefficient)


def inv_power(k: int = 1, coefficient=1.0) -> LogDensityTerm:
    return LogDensityTerm(TermShape.INV_POWER, k, coefficient)


def abs_term(coefficient=1.0, shift=0.0) -> LogDensityTerm:
    return LogDensityTerm(TermShape.ABS, 1, coefficient, shift)


def log_power(k: int, coefficient=1.0) -> LogDensityTerm:
    return LogDensityTerm(TermShape.LOG_POWER, k, coefficient)


def parse_g(text: str) -> LogDensityTerm:
    """Parse a g descriptor such as ``w``, ``w2``, ``w^3``, ``log``, ``inv1``, ``logpow2``."""
    t = text.strip().lower().replace(" ", "")
    if t in ("w", "w1", "w^1"):
        return power(1)
    if t in ("log", "lnw", "ln", "logw"):
        return log_term()
    if t in ("abs", "|w|"):
        return abs_term()
    for prefix, ctor in (("logpow", log_power), ("inv", inv_power), ("1/w^", inv_power), ("w^", power), ("w", power)):
        if t.startswith(prefix) and t[len(prefix):].isdigit():
            return ctor(int(t[len(prefix):]))
    if t == "1/w":
        return inv_power(1)
    raise ValueError(f"cannot parse g descriptor {text!r}")


# -- posterior families ------------------------------------------------------


@dataclass(frozen=True)
class DistributionSpec:
    name: str
    kind: FamilyKind
    param_names: tuple[str, ...]
    base_kind: FamilyKind
    ancillary: Callable[[np.random.Generator, int], np.ndarray]
    eta: Callable[[Sequence], list]
    suff: Callable[[np.ndarray], list]
    validate: Callable[[Sequence], None]
    sampling_map: Callable[[Sequence, np.ndarray], Any]
    transform: Callable | None = None
    transform_name: str = ""
    epsilon: Callable[[np.ndarray], np.ndarray] = lambda xi: xi
    log_q_terms: Callable[[Sequence], tuple] | None = None
    neg_entropy: Callable[[Sequence], Any] | None = None
    log_pdf: Callable[[Sequence, Any], Any] | None = None
    positive_support: bool = False
    # index j and value c of a constant sufficient statistic T_j = c, if any
    const_stat: tuple[int, float] | None = None
    dim: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def S(self) -> int:
        return len(self.param_names)


def _positive(name, x):
    v = x.value if isinstance(x, tp.Var) else x
    if not np.all(np.asarray(v) > 0):
        raise ParameterDomainError(f"{name} must be positive, got {v!r}")


def _exponential() -> DistributionSpec:
    # scale (mean) parameterization: w = theta * xi, xi ~ Exp(1)
    def validate(th):
        _positive("theta", th[0])

    def log_q(th):
        return -tp.log(th[0]), [power(1, -1.0 / th[0])]

    return DistributionSpec(
        name="exponential",
        kind=FamilyKind.SCALING,
        param_names=("theta",),
        base_kind=FamilyKind.SCALING,
        ancillary=lambda rng, m: rng.standard_exponential((m, 1)),
        eta=lambda th: [th[0]],
        suff=lambda xi: [xi],
        validate=validate,
        sampling_map=lambda th, xi: th[0] * xi,
        log_q_terms=log_q,
        log_pdf=lambda th, w: -tp.log(th[0]) - w / th[0],
        positive_support=True,
    )


def _rayleigh() -> DistributionSpec:
    def validate(th):
        _positive("sigma", th[0])

    def log_q(th):
        s = th[0]
        return -2.0 * tp.log(s), [log_term(1.0), power(2, -0.5 / (s * s))]

    return DistributionSpec(
        name="rayleigh",
        kind=FamilyKind.SCALING,
        param_names=("sigma",),
        base_kind=FamilyKind.SCALING,
        ancillary=lambda rng, m: rng.rayleigh(1.0, (m, 1)),
        eta=lambda th: [th[0]],
        suff=lambda xi: [xi],
        validate=validate,
        sampling_map=lambda th, xi: th[0] * xi,
        log_q_terms=log_q,
        log_pdf=lambda th, w: tp.log(w) - 2.0 * tp.log(th[0]) - w * w / (2.0 * th[0] * th[0]),
        positive_support=True,
    )


def _normal_log_q(th):
    mu, s = th
    const = -tp.log(s) - HALF_LOG_2PI - mu * mu / (2.0 * s * s)
    return const, [power(1, mu / (s * s)), power(2, -1.0 / (2.0 * s * s))]


def _normal() -> DistributionSpec:
    def validate(th):
        _positive("sigma", th[1])

    return DistributionSpec(
        name="normal",
        kind=FamilyKind.LOCATION_SCALE,
        param_names=("mu", "sigma"),
        base_kind=FamilyKind.LOCATION_SCALE,
        ancillary=lambda rng, m: rng.standard_normal((m, 1)),
        eta=lambda th: [th[0], th[1]],
        suff=lambda xi: [1.0, xi],
        validate=validate,
        sampling_map=lambda th, xi: th[0] + th[1] * xi,
        log_q_terms=_normal_log_q,
        neg_entropy=lambda th: -tp.log(th[1]) - 0.5 * math.log(2.0 * math.pi * math.e),
        log_pdf=lambda th, w: -tp.log(th[1]) - HALF_LOG_2PI - (w - th[0]) * (w - th[0]) / (2.0 * th[1] * th[1]),
        const_stat=(0, 1.0),
    )


def _lognormal() -> DistributionSpec:
    def validate(th):
        _positive("sigma", th[1])

    def log_q(th):
        mu, s = th
        const = -tp.log(s) - HALF_LOG_2PI - mu * mu / (2.0 * s * s)
        return const, [log_term(mu / (s * s) - 1.0), log_power(2, -1.0 / (2.0 * s * s))]

    def log_pdf(th, w):
        mu, s = th
        lw = tp.log(w)
        return -lw - tp.log(s) - HALF_LOG_2PI - (lw - mu) * (lw - mu) / (2.0 * s * s)

    return DistributionSpec(
        name="lognormal",
        kind=FamilyKind.TRANSFORMED,
        param_names=("mu", "sigma"),
        base_kind=FamilyKind.LOCATION_SCALE,
        ancillary=lambda rng, m: rng.standard_normal((m, 1)),
        eta=lambda th: [th[0], th[1]],
        suff=lambda xi: [1.0, xi],
        validate=validate,
        sampling_map=lambda th, xi: np.exp(th[0] + th[1] * xi),
        transform=tp.exp,
        transform_name="exp",
        log_q_terms=log_q,
        log_pdf=log_pdf,
        positive_support=True,
        const_stat=(0, 1.0),
    )


def radial_epsilon(xi: np.ndarray) -> np.ndarray:
    """Composite ancillary (xi / ||xi||) * |r| from rows laid out as [xi_1..xi_n, r]."""
    xi = np.asarray(xi, dtype=np.float64)
    direction, r = xi[:, :-1], xi[:, -1:]
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise DegenerateDirectionError("direction sample with norm below 1e-12")
    return direction / norms * np.abs(r)


def radial_realize(mu, sigma, xi, r) -> np.ndarray:
    """``mu + sigma * xi / ||xi|| * |r|`` for one direction draw."""
    xi = np.asarray(xi, dtype=np.float64)
    norm = float(np.linalg.norm(xi))
    if norm < 1e-12:
        raise DegenerateDirectionError("direction sample with norm below 1e-12")
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ParameterDomainError("sigma must be positive")
    return np.asarray(mu, dtype=np.float64) + sigma * (xi / norm) * abs(float(r))


def radial(dim: int = 1) -> DistributionSpec:
    """Radial posterior over ``dim`` weights.  ``eta``/``suff`` act per coordinate."""

    def validate(th):
        _positive("sigma", th[1])

    def sampling_map(th, xi):
        eps = radial_epsilon(np.atleast_2d(xi))
        return np.asarray(th[0]) + np.asarray(th[1]) * eps

    def neg_entropy(th):
        sig = th[1]
        if isinstance(sig, (list, tuple)):
            return -sum(tp.log(s) for s in sig)
        return -tp.log(sig) if isinstance(sig, tp.Var) else -np.sum(np.log(sig))

    return DistributionSpec(
        name="radial",
        kind=FamilyKind.LOCATION_SCALE,
        param_names=("mu", "sigma"),
        base_kind=FamilyKind.LOCATION_SCALE,
        ancillary=lambda rng, m: np.concatenate(
            [rng.standard_normal((m, dim)), rng.standard_normal((m, 1))], axis=1
        ),
        eta=lambda th: [th[0], th[1]],
        suff=lambda eps: [1.0, eps],
        validate=validate,
        sampling_map=sampling_map,
        epsilon=radial_epsilon,
        neg_entropy=neg_entropy,
        const_stat=(0, 1.0),
        dim=dim,
    )


_FAMILIES = {
    "exponential": _exponential,
    "rayleigh": _rayleigh,
    "normal": _normal,
    "gaussian": _normal,
    "lognormal": _lognormal,
    "log-normal": _lognormal,
    "radial": radial,
}

FAMILY_NAMES = ("exponential", "rayleigh", "normal", "radial", "lognormal")


def family(name: str, **kwargs) -> DistributionSpec:
    key = name.strip().lower()
    if key not in _FAMILIES:
        raise UnknownFamilyError(name)
    return _FAMILIES[key](**kwargs)


def sample_ancillary(spec: DistributionSpec, M: int, seed) -> np.ndarray:
    """M draws from the parameter-free base law, shape (M, base dimension)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return spec.ancillary(rng, int(M))


def realize(spec: DistributionSpec, theta: Sequence, xi):
    """W(theta, xi) assembled as ``f(sum_s eta_s(theta) * T_s(eps))``."""
    spec.validate(theta)
    eps = spec.epsilon(np.atleast_2d(xi)) if spec.name == "radial" else xi
    eta = spec.eta(theta)
    T = spec.suff(eps)
    lin = sum(e * t for e, t in zip(eta, T))
    return spec.transform(lin) if spec.transform is not None else lin


# -- priors ------------------------------------------------------------------

PRIOR_NAMES = ("normal", "exponential", "gamma", "laplace", "lognormal", "rayleigh", "logistic")
_PRIOR_DEFAULTS = {
    "normal": (0.0, 1.0),
    "exponential": (1.0,),
    "gamma": (2.0, 1.0),
    "laplace": (0.0, 1.0),
    "lognormal": (0.0, 1.0),
    "rayleigh": (1.0,),
    "logistic": (0.0, 1.0),
}
_POSITIVE_PRIORS = {"exponential", "gamma", "lognormal", "rayleigh"}


@dataclass(frozen=True)
class Prior:
    name: str
    params: tuple[float, ...]

    @property
    def positive_support(self) -> bool:
        return self.name in _POSITIVE_PRIORS


def prior(name: str, params: Sequence[float] | None = None) -> Prior:
    key = name.strip().lower().replace("log-normal", "lognormal").replace("gaussian", "normal")
    if key not in _PRIOR_DEFAULTS:
        raise UnknownPriorError(name)
    p = tuple(float(x) for x in (params if params is not None else _PRIOR_DEFAULTS[key]))
    if len(p) != len(_PRIOR_DEFAULTS[key]):
        raise ParameterDomainError(f"{key} prior takes {len(_PRIOR_DEFAULTS[key])} parameters")
    scale_idx = {"normal": 1, "exponential": 0, "gamma": 0, "laplace": 1, "lognormal": 1, "rayleigh": 0, "logistic": 1}
    if p[scale_idx[key]] <= 0 or (key == "gamma" and p[1] <= 0):
        raise ParameterDomainError(f"invalid {key} prior parameters {p}")
    return Prior(key, p)


def _as_prior(p) -> Prior:
    if isinstance(p, Prior):
        return p
    if isinstance(p, str):
        return prior(p)
    name, params = p
    return prior(name, params)


def log_pdf_terms(name, params: Sequence[float] | None = None) -> tuple[float, list[LogDensityTerm]]:
    """``ln p(w) = constant + sum(term(w))`` on the prior's support."""
    pr = prior(name, params) if isinstance(name, str) else _as_prior(name)
    p = pr.params
    if pr.name == "normal":
        m, s = p
        terms = [power(1, m / (s * s)), power(2, -0.5 / (s * s))]
        const = -math.log(s) - HALF_LOG_2PI - m * m / (2 * s * s)
    elif pr.name == "exponential":
        (lam,) = p
        const, terms = math.log(lam), [power(1, -lam)]
    elif pr.name == "gamma":
        k, rate = p
        const = k * math.log(rate) - math.lgamma(k)
        terms = [log_term(k - 1.0), power(1, -rate)]
    elif pr.name == "laplace":
        m, b = p
        const, terms = -math.log(2.0 * b), [abs_term(-1.0 / b, shift=m)]
    elif pr.name == "lognormal":
        m, s = p
        const = -math.log(s) - HALF_LOG_2PI - m * m / (2 * s * s)
        terms = [log_term(m / (s * s) - 1.0), log_power(2, -0.5 / (s * s))]
    elif pr.name == "rayleigh":
        (s,) = p
        const, terms = -2.0 * math.log(s), [log_term(1.0), power(2, -0.5 / (s * s))]
    else:
        raise UnsupportedTermError(f"{pr.name} log-density is not a finite term list; use a Taylor spec")
    return const, [t for t in terms if t.coefficient != 0.0]


def prior_log_pdf(p, w):
    """Direct log-density of a catalogued prior; works on tape handles and arrays."""
    pr = _as_prior(p)
    a = pr.params
    if pr.name == "normal":
        m, s = a
        d = w - m
        return -math.log(s) - HALF_LOG_2PI - d * d / (2 * s * s)
    if pr.name == "exponential":
        return math.log(a[0]) - a[0] * w
    if pr.name == "gamma":
        k, rate = a
        return k * math.log(rate) - math.lgamma(k) + (k - 1.0) * tp.log(w) - rate * w
    if pr.name == "laplace":
        m, b = a
        return -math.log(2.0 * b) - tp.absolute(w - m) / b
    if pr.name == "lognormal":
        m, s = a
        lw = tp.log(w)
        d = lw - m
        return -lw - math.log(s) - HALF_LOG_2PI - d * d / (2 * s * s)
    if pr.name == "rayleigh":
        (s,) = a
        return tp.log(w) - 2.0 * math.log(s) - w * w / (2 * s * s)
    if pr.name == "logistic":
        m, s = a
        z = (w - m) / s
        return -z - 2.0 * tp.softplus(-z) - math.log(s)
    raise UnknownPriorError(pr.name)


def kl_gaussian_closed_form(mu: float, sigma: float, mu0: float, sigma0: float):
    """KL(N(mu, sigma^2) || N(mu0, sigma0^2)).  Accepts tape handles for mu, sigma."""
    for name, v in (("sigma", sigma), ("sigma0", sigma0)):
        _positive(name, v)
    d = mu - mu0
    return math.log(sigma0) - tp.log(sigma) + (sigma * sigma + d * d) / (2.0 * sigma0 * sigma0) - 0.5


@dataclass(frozen=True)
class ExpFamilyForm:
    """``ln p(w) = ln h(w) + eta . T(w) - A`` with ``ln h = log_h_const + sum(log_h_terms)``."""

    log_h_terms: tuple
    log_h_const: float
    eta_nat: tuple
    suff_stats: tuple
    log_partition: float

    def log_pdf(self, w):
        out = self.log_h_const - self.log_partition
        for t in self.log_h_terms:
            out = out + t.evaluate(w)
        for e, T in zip(self.eta_nat, self.suff_stats):
            out = out + e * T.apply(w)
        return out


def exp_family_form(p) -> ExpFamilyForm:
    """Exponential-family factorization of a catalogued prior (logistic excluded)."""
    pr = _as_prior(p)
    a = pr.params
    if pr.name == "normal":
        m, s = a
        return ExpFamilyForm((), -HALF_LOG_2PI, (m / (s * s), -0.5 / (s * s)), (power(1), power(2)),
                             m * m / (2 * s * s) + math.log(s))
    if pr.name == "exponential":
        return ExpFamilyForm((), 0.0, (-a[0],), (power(1),), -math.log(a[0]))
    if pr.name == "gamma":
        k, rate = a
        return ExpFamilyForm((), 0.0, (k - 1.0, -rate), (log_term(), power(1)), math.lgamma(k) - k * math.log(rate))
    if pr.name == "laplace":
        m, b = a
        return ExpFamilyForm((), 0.0, (-1.0 / b,), (abs_term(shift=m),), math.log(2.0 * b))
    if pr.name == "lognormal":
        m, s = a
        return ExpFamilyForm((log_term(-1.0),), -HALF_LOG_2PI, (m / (s * s), -0.5 / (s * s)),
                             (log_term(), log_power(2)), m * m / (2 * s * s) + math.log(s))
    if pr.name == "rayleigh":
        (s,) = a
        return ExpFamilyForm((log_term(1.0),), 0.0, (-0.5 / (s * s),), (power(2),), 2.0 * math.log(s))
    raise UnsupportedTermError(f"{pr.name} is not handled as an exponential family here")
