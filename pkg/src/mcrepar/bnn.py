"""Small Bayesian MLP trained by variational inference on the scalar tape.

Each weight has a variational mean ``mu`` and ``rho`` with
``sigma = ln(1 + e^rho)``.  Training minimizes, per minibatch,
``beta * KL(q || p) - sum_b ln p(y_b | w_b, x_b)`` with one weight draw per
data point; with ``beta = 1 / n_batches`` an epoch sums to the full-data
negative ELBO.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kl as klmod
from . import repar as rp
from . import tape as tp
from .distributions import HALF_LOG_2PI, Prior, _as_prior, family
from .errors import DivergenceError, NonFiniteError, UnsupportedTaskError

POSTERIORS = ("gaussian", "radial")
THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(s):
    return np.log(np.expm1(s))


# -- layers ------------------------------------------------------------------


@dataclass
class BayesDense:
    in_dim: int
    out_dim: int
    mu: np.ndarray
    mu_b: np.ndarray
    rho: np.ndarray
    rho_b: np.ndarray
    posterior: str = "radial"
    prior: Prior = field(default_factory=lambda: _as_prior("normal"))

    def __post_init__(self):
        if self.posterior not in POSTERIORS:
            raise ValueError(f"posterior must be one of {POSTERIORS}")

    @property
    def sigma(self):
        return softplus(self.rho)

    @property
    def sigma_b(self):
        return softplus(self.rho_b)

    @property
    def n_weights(self) -> int:
        return self.out_dim * self.in_dim + self.out_dim

    def flat_mu(self) -> np.ndarray:
        return np.concatenate([self.mu.ravel(), self.mu_b])

    def flat_sigma(self) -> np.ndarray:
        return softplus(np.concatenate([self.rho.ravel(), self.rho_b]))

    def kl_spec(self):
        return family("normal" if self.posterior == "gaussian" else "radial")


def init_layer(in_dim, out_dim, rng, posterior="radial", prior="normal", sigma_scale=0.05) -> BayesDense:
    """Uniform fan-in init for mu; initial sigma = sigma_scale / sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(in_dim)
    mu = rng.uniform(-bound, bound, (out_dim, in_dim))
    mu_b = rng.uniform(-bound, bound, out_dim)
    rho0 = float(inv_softplus(sigma_scale * bound))
    return BayesDense(in_dim, out_dim, mu, mu_b, np.full((out_dim, in_dim), rho0), np.full(out_dim, rho0),
                      posterior, _as_prior(prior))


def draw_eps(layer: BayesDense, n: int, rng: np.random.Generator, radial_mode: str = "layer") -> np.ndarray:
    """(n, n_weights) composite ancillary draws in flat [weights, bias] order.

    Radial ``layer`` mode uses one direction per draw over the whole layer;
    ``weight`` mode draws an independent 1-D direction per weight.
    """
    k = layer.n_weights
    if layer.posterior == "gaussian":
        return rng.standard_normal((n, k))
    xi = rng.standard_normal((n, k))
    r = rng.standard_normal((n, 1))
    if radial_mode == "weight":
        return np.sign(xi) * np.abs(r)
    return radial_composite(xi, r)


def radial_composite(xi, r):
    xi = np.atleast_2d(xi)
    norms = np.linalg.norm(xi, axis=1, keepdims=True)
    return xi / norms * np.abs(np.reshape(r, (-1, 1)))


def _affine(layer: BayesDense, X, w_flat):
    k = layer.out_dim * layer.in_dim
    W = w_flat[..., :k].reshape(w_flat.shape[:-1] + (layer.out_dim, layer.in_dim))
    b = w_flat[..., k:]
    return np.einsum("...oi,...i->...o", W, X) + b


def forward_sample(layer: BayesDense, X, mode: str = "per-datapoint", seed=None, eps=None,
                   radial_mode: str = "layer") -> np.ndarray:
    """Pre-activation outputs of one layer under sampled weights.

    ``per-batch`` draws one weight realization for all rows; ``per-datapoint``
    draws one per row.  ``eps`` (composite draws) overrides the seeded draw.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    B = X.shape[0]
    if eps is None:
        rng = np.random.default_rng(seed)
        eps = draw_eps(layer, 1 if mode == "per-batch" else B, rng, radial_mode)
    eps = np.atleast_2d(eps)
    w = layer.flat_mu() + layer.flat_sigma() * eps
    if mode == "per-batch":
        return _affine(layer, X, w[0][None, :].repeat(B, axis=0))
    if mode != "per-datapoint":
        raise ValueError(f"unknown mode {mode!r}")
    return _affine(layer, X, w)


# -- model -------------------------------------------------------------------


@dataclass
class BayesMLP:
    layers: list
    task: str = "classification"
    sigma_obs: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise UnsupportedTaskError(self.task)

    @property
    def n_params(self) -> int:
        return sum(2 * l.n_weights for l in self.layers)

    def get_flat(self) -> np.ndarray:
        parts = []
        for l in self.layers:
            parts += [l.mu.ravel(), l.mu_b, l.rho.ravel(), l.rho_b]
        return np.concatenate(parts)

    def set_flat(self, v):
        v = np.asarray(v, dtype=np.float64)
        i = 0
        for l in self.layers:
            k = l.out_dim * l.in_dim
            l.mu = v[i:i + k].reshape(l.out_dim, l.in_dim).copy(); i += k
            l.mu_b = v[i:i + l.out_dim].copy(); i += l.out_dim
            l.rho = v[i:i + k].reshape(l.out_dim, l.in_dim).copy(); i += k
            l.rho_b = v[i:i + l.out_dim].copy(); i += l.out_dim


def make_model(sizes: Sequence[int], posterior="radial", prior="normal", task="classification", seed=0,
               sigma_scale=0.05, sigma_obs=1.0) -> BayesMLP:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1A17]))
    layers = [init_layer(a, b, rng, posterior, prior, sigma_scale) for a, b in zip(sizes[:-1], sizes[1:])]
    return BayesMLP(layers, task, sigma_obs, seed)


def predict_outputs(model: BayesMLP, X, eps_list) -> np.ndarray:
    """Network outputs for per-row weight draws; eps_list[l] has shape (..., n_weights)."""
    h = np.asarray(X, dtype=np.float64)
    for i, (l, eps) in enumerate(zip(model.layers, eps_list)):
        w = l.flat_mu() + l.flat_sigma() * eps
        h = _affine(l, h, w)
        if i < len(model.layers) - 1:
            h = np.maximum(h, 0.0)
    return h


# -- likelihoods -------------------------------------------------------------


def log_lik_regression(u, y, sigma_hat: float = 1.0):
    """Mean over the batch of the Gaussian log-density with fixed scale."""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = (y - u) / sigma_hat
    return float(np.mean(-0.5 * r * r - math.log(sigma_hat) - HALF_LOG_2PI))


def log_lik_classification(u, y, variant: str = "exact"):
    """Mean Bernoulli log-likelihood of logits ``u``.

    ``taylor_k2`` replaces ``-ln(1 + e^-u)`` with its second-order expansion
    about 0, ``-ln 2 + u/2 - u^2/8``.
    """
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if variant == "exact":
        return float(np.mean(-np.logaddexp(0.0, -u) - (1.0 - y) * u))
    if variant == "taylor_k2":
        return float(np.mean(-math.log(2.0) + u / 2.0 - u * u / 8.0 - (1.0 - y) * u))
    raise ValueError(f"unknown variant {variant!r}")


def _point_loglik(z, y, task, sigma_obs):
    if task == "classification":
        return -tp.softplus(-z) - (1.0 - y) * z
    d = z - y
    return d * d * (-0.5 / (sigma_obs * sigma_obs)) - (math.log(sigma_obs) + HALF_LOG_2PI)


def _quadratic_coefs(task, y, sigma_obs):
    """(a0, a1, a2) with ln p(y | z) = a0 + a1 z + a2 z^2 (classification: Taylor about 0)."""
    if task == "regression":
        s2 = sigma_obs * sigma_obs
        return -y * y / (2 * s2) - math.log(sigma_obs) - HALF_LOG_2PI, y / s2, -0.5 / s2
    if task == "classification-taylor":
        return -math.log(2.0), 0.5 - (1.0 - y), -0.125
    raise UnsupportedTaskError(f"{task} likelihood is not polynomial; use classification-taylor")


def _lin_sum(items):
    for x in items:
        if isinstance(x, tp.Var):
            return x.tape.sum(items)
    return math.fsum(items)


_LAST_TUPLES: dict = {}


def _last_layer_tuples(H: int):
    if H not in _LAST_TUPLES:
        S = H + 2

        def eta(th):
            h, mu, sig = th
            loc = _lin_sum([hj * mj for hj, mj in zip(h, mu[:H])] + [mu[H]])
            return [loc] + [hj * sj for hj, sj in zip(h, sig[:H])] + [sig[H]]

        def suff(eps):
            return [1.0] + [eps[:, j] for j in range(H + 1)]

        form = rp.Form(S, eta, suff, lambda e: np.atleast_2d(e), (False,) * S, (0, 1.0), label=f"last[H={H}]")
        _LAST_TUPLES[H] = (rp.monomial_tuple(form, {1: 1.0}, "z"), rp.monomial_tuple(form, {2: 1.0}, "z^2"))
    return _LAST_TUPLES[H]


def last_layer_lik_repar(tape, h_rows, mu, sigma, y, M: int, task: str, eps=None, seed=None,
                         posterior: str = "gaussian", sigma_obs: float = 1.0):
    """S_1 for a single-output last layer with M weight draws per data point.

    The logit ``z = sum_j h_j w_j + w_b`` is location-scale in the last-layer
    weights, so a quadratic log-likelihood in ``z`` has an exact tuple whose
    size depends on the width H and never on M.  ``eps`` has shape
    (B, M, H + 1).  Returns the batch mean of the per-point M-sample average.
    """
    B = len(h_rows)
    H = len(mu) - 1
    if eps is None:
        rng = np.random.default_rng(seed)
        layer = BayesDense(H, 1, np.zeros((1, H)), np.zeros(1), np.zeros((1, H)), np.zeros(1), posterior)
        eps = draw_eps(layer, B * M, rng).reshape(B, M, H + 1)
    t_z, t_z2 = _last_layer_tuples(H)
    terms = []
    for b in range(B):
        a0, a1, a2 = _quadratic_coefs(task, float(y[b]), sigma_obs)
        th = (list(h_rows[b]), list(mu), list(sigma))
        ez = rp.evaluate_tuple(t_z, tape, th, eps[b])
        ez2 = rp.evaluate_tuple(t_z2, tape, th, eps[b])
        terms += [ez * a1, ez2 * a2, a0]
    return tape.sum(terms) * (1.0 / B)


def sgvb_last_layer(tape, h_rows, mu, sigma, y, eps, task: str, sigma_obs: float = 1.0):
    """One-draw-per-point S_1 for the same last layer; ``eps`` has shape (B, H + 1)."""
    B = len(h_rows)
    H = len(mu) - 1
    terms = []
    for b in range(B):
        w = [mu[j] + sigma[j] * float(eps[b, j]) for j in range(H + 1)]
        z = _lin_sum([h * wj for h, wj in zip(h_rows[b], w[:H])] + [w[H]])
        if task in ("regression", "classification-taylor"):
            a0, a1, a2 = _quadratic_coefs(task, float(y[b]), sigma_obs)
            terms.append(a0 + a1 * z + a2 * z * z)
        else:
            terms.append(_point_loglik(z, float(y[b]), task, sigma_obs))
    return tape.sum(terms) * (1.0 / B)


# -- ELBO --------------------------------------------------------------------


@dataclass(frozen=True)
class ElboConfig:
    beta: float | None = None
    m_kl: int = 100
    m_lik: int = 1
    batch_size: int = 20
    kl_method: str = "repar"
    radial_mode: str = "layer"
    last_layer_repar: bool = False


@dataclass
class ElboBreakdown:
    kl: float
    nll: float
    beta: float
    loss: float
    grad_nodes: int = 0
    kl_grad_nodes: int = 0


def _kl_method(config: ElboConfig, seed):
    if config.kl_method == "repar":
        return klmod.ReparMC(config.m_kl, seed)
    if config.kl_method == "direct":
        return klmod.DirectMC(config.m_kl, seed)
    if config.kl_method == "closed":
        return klmod.ClosedForm()
    raise ValueError(f"unknown kl_method {config.kl_method!r}")


def _stream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]))


def build_elbo(model: BayesMLP, X, y, config: ElboConfig, seed, flat=None):
    """Build the minibatch loss on a fresh tape.

    Returns ``(tape, param handles, loss handle, breakdown)``.  Parameter
    handles follow :meth:`BayesMLP.get_flat` order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    B = X.shape[0]
    beta = 1.0 if config.beta is None else float(config.beta)
    flat = model.get_flat() if flat is None else np.asarray(flat, dtype=np.float64)
    tape = tp.Tape()
    handles = tape.params(flat)
    mus, sigmas = [], []
    i = 0
    for l in model.layers:
        n = l.n_weights
        mus.append(handles[i:i + n]); i += n
        sigmas.append([tape.softplus(r) for r in handles[i:i + n]]); i += n

    # KL over all layers, each with its own ancillary stream
    kl_start = len(tape)
    kl_parts = []
    for li, l in enumerate(model.layers):
        br = klmod.kl_estimate(l.kl_spec(), l.prior, _kl_method(config, 0), tape, (mus[li], sigmas[li]),
                               xi=_layer_kl_draws(l, config, _stream(seed, 1, li)))
        kl_parts.append(br.handle)
    kl_total = tape.sum(kl_parts)
    kl_nodes = tape.count_grad_nodes(kl_start)

    # likelihood, one weight draw per data point (m_lik draws averaged)
    rng = _stream(seed, 2)
    L = len(model.layers)
    eps = [draw_eps(l, B * config.m_lik, rng, config.radial_mode).reshape(B, config.m_lik, l.n_weights)
           for l in model.layers]
    if config.last_layer_repar:
        if model.task == "classification":
            raise UnsupportedTaskError("last-layer reparameterization needs a polynomial likelihood")
        h_rows = [_tape_forward(tape, model, mus, sigmas, X[b], [eps[k][b, 0] for k in range(L - 1)], hidden_only=True)
                  for b in range(B)]
        s1 = last_layer_lik_repar(tape, h_rows, mus[-1], sigmas[-1], y, config.m_lik, model.task,
                                  eps=eps[-1], sigma_obs=model.sigma_obs)
        loglik = s1 * float(B)
    else:
        terms = []
        for b in range(B):
            for m in range(config.m_lik):
                z = _tape_forward(tape, model, mus, sigmas, X[b], [e[b, m] for e in eps])
                terms.append(_point_loglik(z, float(y[b]), model.task, model.sigma_obs))
        loglik = tape.sum(terms) * (1.0 / config.m_lik)
    nll = -loglik
    loss = kl_total * beta + nll
    br = ElboBreakdown(float(kl_total), float(nll), beta, float(loss), tape.count_grad_nodes(), kl_nodes)
    return tape, handles, loss, br


def _layer_kl_draws(layer, config, rng):
    if config.kl_method == "closed":
        return None
    if layer.posterior == "radial":
        xi = rng.standard_normal((config.m_kl, layer.n_weights + 1))
        return xi
    return rng.standard_normal((config.m_kl, layer.n_weights))


def _tape_forward(tape, model, mus, sigmas, x, eps_rows, hidden_only=False):
    h = [float(v) for v in x]
    L = len(model.layers)
    dot = tape.dot
    for li, l in enumerate(model.layers):
        if hidden_only and li == L - 1:
            return h
        mu, sig, e = mus[li], sigmas[li], eps_rows[li]
        n_in, k = l.in_dim, l.out_dim * l.in_dim
        out = []
        for o in range(l.out_dim):
            parts = []
            for j in range(n_in):
                idx = o * n_in + j
                hj = h[j]
                if isinstance(hj, tp.Var):
                    # (mu + sigma * eps) * h
                    parts.append(tape.add(mu[idx], dot(sig[idx], float(e[idx]))) * hj)
                else:
                    parts.append(dot(mu[idx], hj))
                    parts.append(dot(sig[idx], float(e[idx]) * hj))
            idx = k + o
            parts.append(mu[idx])
            parts.append(dot(sig[idx], float(e[idx])))
            out.append(tape.sum(parts))
        h = out if li == L - 1 else [tape.relu(v) for v in out]
    return h[0] if len(h) == 1 else h


def elbo(model: BayesMLP, X, y, config: ElboConfig, seed):
    """Minibatch loss handle and its breakdown."""
    _, _, loss, br = build_elbo(model, X, y, config, seed)
    return loss, br


# -- optimizer ---------------------------------------------------------------


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1**self.t)
        vh = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mh / (np.sqrt(vh) + self.eps)


# -- data --------------------------------------------------------------------


@dataclass
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray


def two_moons(n_train=200, n_val=200, noise=0.15, seed=0) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x300]))
    n = n_train + n_val
    y = rng.integers(0, 2, n)
    t = rng.uniform(0.0, math.pi, n)
    x0 = np.where(y == 0, np.cos(t), 1.0 - np.cos(t))
    x1 = np.where(y == 0, np.sin(t), 0.5 - np.sin(t))
    X = np.stack([x0, x1], axis=1) + noise * rng.standard_normal((n, 2))
    X = (X - np.array([0.5, 0.25])) / np.array([0.85, 0.5])
    return Dataset(X[:n_train], y[:n_train].astype(float), X[n_train:], y[n_train:].astype(float))


def sinusoid(n_train=100, n_val=100, noise=0.1, seed=0) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x51]))
    n = n_train + n_val
    x = rng.uniform(-3.0, 3.0, n)
    y = np.sin(x) + noise * rng.standard_normal(n)
    X = x[:, None] / 3.0
    return Dataset(X[:n_train], y[:n_train], X[n_train:], y[n_train:])


# -- prediction --------------------------------------------------------------


def predict_with_confidence(model: BayesMLP, X, n_samples: int, seed, statistic: str = "vote",
                            radial_mode: str = "layer"):
    """Majority-vote labels and the winning vote fraction per input.

    Each input gets its own derived stream.  Ties go to the lower class.
    ``statistic="mean_prob"`` reports max(p, 1 - p) of the mean predicted
    probability instead.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N = X.shape[0]
    eps = [np.empty((N, n_samples, l.n_weights)) for l in model.layers]
    for i in range(N):
        rng = _stream(seed, 3, i)
        for k, l in enumerate(model.layers):
            eps[k][i] = draw_eps(l, n_samples, rng, radial_mode)
    logits = predict_outputs(model, X[:, None, :].repeat(n_samples, axis=1), eps)[..., 0]
    if model.task != "classification":
        raise UnsupportedTaskError("predict_with_confidence needs a classification model")
    if statistic == "vote":
        frac1 = np.mean(logits > 0.0, axis=1)
    elif statistic == "mean_prob":
        frac1 = np.mean(1.0 / (1.0 + np.exp(-logits)), axis=1)
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    labels = (frac1 > 0.5).astype(int)
    conf = np.maximum(frac1, 1.0 - frac1)
    return labels, conf


def confident_sets(labels, conf, y, thresholds=THRESHOLDS):
    """[(threshold, size, accuracy on {conf >= threshold})]; accuracy is nan on empty sets."""
    correct = labels == np.asarray(y).astype(int)
    out = []
    for tau in thresholds:
        mask = conf >= tau - 1e-12
        size = int(mask.sum())
        out.append((tau, size, float(correct[mask].mean()) if size else float("nan")))
    return out


# -- training ----------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    elbo: float
    nll: float
    kl: float
    accuracy: float


@dataclass
class TrainReport:
    seed: int
    epochs: list
    wall_time_s: float = 0.0
    confident: list = field(default_factory=list)
    val_accuracy: float = float("nan")
    beta: float = 1.0
    step_grad_nodes: int = 0


def train(model: BayesMLP, data: Dataset, epochs: int, optimizer: Adam | None = None,
          config: ElboConfig = ElboConfig(), seed: int = 0, n_predictive: int = 100,
          eval_every: int = 0) -> TrainReport:
    """Minibatch VI training.  Deterministic given ``seed``.

    ``eval_every`` > 0 records validation accuracy every that many epochs
    (20 predictive draws); the final accuracy and confident sets always use
    ``n_predictive`` draws.
    """
    opt = optimizer if optimizer is not None else Adam()
    N = data.X_train.shape[0]
    B = config.batch_size
    n_batches = (N + B - 1) // B
    beta = 1.0 / n_batches if config.beta is None else config.beta
    cfg = ElboConfig(beta, config.m_kl, config.m_lik, B, config.kl_method, config.radial_mode,
                     config.last_layer_repar)
    flat = model.get_flat()
    records = []
    step_nodes = 0
    t0 = time.perf_counter()
    for ep in range(epochs):
        order = _stream(seed, 4, ep).permutation(N)
        tot_kl = tot_nll = 0.0
        for bi in range(n_batches):
            idx = order[bi * B:(bi + 1) * B]
            try:
                tape, handles, loss, br = build_elbo(model, data.X_train[idx], data.y_train[idx], cfg,
                                                     np.random.SeedSequence([seed, 5, ep, bi]).generate_state(1)[0],
                                                     flat)
                grad = tape.gradient(loss, handles)
            except NonFiniteError as exc:
                raise DivergenceError(str(exc), ep, bi) from exc
            if not np.all(np.isfinite(grad)):
                raise DivergenceError("non-finite gradient", ep, bi)
            step_nodes = br.grad_nodes
            tot_kl += br.kl
            tot_nll += br.nll
            flat = opt.step(flat, grad)
            model.set_flat(flat)
        acc = float("nan")
        if eval_every and (ep + 1) % eval_every == 0 and model.task == "classification":
            labels, _ = predict_with_confidence(model, data.X_val, 20, seed + 1000 + ep)
            acc = float(np.mean(labels == data.y_val.astype(int)))
        records.append(EpochRecord(ep, beta * tot_kl + tot_nll, tot_nll, tot_kl, acc))
    report = TrainReport(seed, records, 0.0, [], float("nan"), beta, step_nodes)
    if model.task == "classification":
        labels, conf = predict_with_confidence(model, data.X_val, n_predictive, seed + 7919)
        report.val_accuracy = float(np.mean(labels == data.y_val.astype(int)))
        report.confident = confident_sets(labels, conf, data.y_val)
    report.wall_time_s = time.perf_counter() - t0
    return report


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_MAGIC = "mcrepar-checkpoint 1"


def save_checkpoint(model: BayesMLP, path) -> None:
    """Text checkpoint; floats are stored as hex literals so reloads are exact."""
    lines = [CHECKPOINT_MAGIC, f"task {model.task}", f"seed {model.seed}",
             f"sigma_obs {float(model.sigma_obs).hex()}", f"layers {len(model.layers)}"]
    for l in model.layers:
        prior_params = " ".join(float(p).hex() for p in l.prior.params)
        lines.append(f"layer {l.in_dim} {l.out_dim} {l.posterior} {l.prior.name} {prior_params}")
        for name in ("mu", "mu_b", "rho", "rho_b"):
            vals = np.asarray(getattr(l, name)).ravel()
            lines.append(name + " " + " ".join(float(v).hex() for v in vals))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> BayesMLP:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file")
    head = dict(ln.split(" ", 1) for ln in lines[1:5])
    n_layers = int(head["layers"])
    layers = []
    pos = 5
    for _ in range(n_layers):
        f = lines[pos].split()
        in_dim, out_dim, post, prior_name = int(f[1]), int(f[2]), f[3], f[4]
        prior_params = [float.fromhex(x) for x in f[5:]]
        arrays = {}
        for k, name in enumerate(("mu", "mu_b", "rho", "rho_b")):
            g = lines[pos + 1 + k].split()
            assert g[0] == name
            arrays[name] = np.array([float.fromhex(x) for x in g[1:]])
        layers.append(BayesDense(in_dim, out_dim, arrays["mu"].reshape(out_dim, in_dim), arrays["mu_b"],
                                 arrays["rho"].reshape(out_dim, in_dim), arrays["rho_b"], post,
                                 _as_prior((prior_name, prior_params))))
        pos += 5
    return BayesMLP(layers, head["task"], float.fromhex(head["sigma_obs"]), int(head["seed"]))
