"""The four sweep commands.  Each returns named reports and SVG texts; the CLI writes them."""

from __future__ import annotations

import math
import time

import numpy as np

from .. import bnn
from .. import kl as klmod
from .. import repar as rp
from .. import tape as tp
from ..distributions import FamilyKind, family, parse_g, sample_ancillary
from ..errors import ConfigError, UnknownFamilyError, UnsupportedG
from . import svg
from .config import SweepConfig
from .report import ExperimentReport

KL_COLUMNS = ["m", "replication", "error", "rmse", "grad_nodes", "interaction_nodes", "wall_time_ns"]


def _rng(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]))


def _theta_for(spec, theta):
    if spec.S == 1:
        return [abs(theta[0]) if theta[0] != 0 else 1.0]
    if len(theta) < 2 or theta[1] <= 0:
        raise ConfigError("theta needs (mu, sigma) with sigma > 0 for two-parameter families")
    return list(theta[:2])


def _family(name):
    try:
        return family(name)
    except UnknownFamilyError:
        raise ConfigError(f"unknown family {name!r}") from None


def _g(text):
    try:
        return parse_g(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- graph-size ----------------------------------------------------------------


def graph_size(cfg: SweepConfig):
    cols = ["method", "family", "g", "m", "total_nodes", "grad_nodes", "param_nodes", "interaction_nodes",
            "interaction_per_m", "value"]
    rep = ExperimentReport(cols)
    bars: dict = {}
    for fam in cfg["family"]:
        spec = _family(fam)
        th0 = _theta_for(spec, cfg["theta"])
        for gtext in cfg["g"]:
            g = _g(gtext)
            try:
                tup = rp.build_tuple(spec, g)
            except UnsupportedG as exc:
                raise ConfigError(str(exc)) from None
            for method in cfg["methods"]:
                if method not in ("direct", "repar"):
                    raise ConfigError(f"graph-size methods are direct and repar, got {method!r}")
                for M in cfg["m_grid"]:
                    if M < 1:
                        raise ConfigError("m_grid entries must be >= 1")
                    xi = sample_ancillary(spec, M, _rng(cfg.seed, M))
                    tape = tp.Tape()
                    th = tape.params(th0)
                    if method == "repar":
                        v = rp.evaluate_tuple(tup, tape, th, xi)
                    else:
                        style = cfg["direct_style"]
                        if style == "monomial" and not (g.shape.name == "POWER" and spec.transform is None):
                            style = "natural"
                        v = rp.direct_mc_build(tape, g, spec, th, xi, style=style)
                    st = tape.stats()
                    rep.add(method=method, family=spec.name, g=g.label, m=M, total_nodes=st.total_nodes,
                            grad_nodes=st.grad_nodes, param_nodes=st.param_nodes,
                            interaction_nodes=st.interaction_nodes,
                            interaction_per_m=st.interaction_nodes / M, value=v.value)
                    bars.setdefault(f"{method} {spec.name} {g.label}", {})[str(M)] = st.interaction_nodes
    plot = svg.bar_chart(bars, "interaction nodes requiring gradients", "M", "interaction nodes")
    return {"graph_size.csv": rep}, {"graph_size.svg": plot}


# -- kl-error ------------------------------------------------------------------


def kl_error(cfg: SweepConfig):
    reports, series = {}, {}
    summary = ExperimentReport(["sweep", "sigma", "d", "m", "median_error", "rmse", "grad_nodes"])
    for sigma in cfg["sigma_grid"]:
        if sigma <= 0:
            raise ConfigError("sigma_grid entries must be positive")
        rows = klmod.kl_error_sweep([cfg["mu"], sigma], [cfg["prior_mu"], cfg["prior_sigma"]], cfg["m_grid"],
                                    cfg["replications"], cfg.seed)
        rep = ExperimentReport(KL_COLUMNS, rows)
        reports[f"kl_error_sigma_{sigma:g}.csv"] = rep
        pts = []
        for M in cfg["m_grid"]:
            cell = [r for r in rows if r["m"] == M]
            med = float(np.median([r["error"] for r in cell]))
            summary.add(sweep="sigma", sigma=sigma, d=1, m=M, median_error=med, rmse=cell[0]["rmse"],
                        grad_nodes=cell[0]["grad_nodes"])
            pts.append((M, cell[0]["rmse"]))
        series[f"sigma={sigma:g}"] = pts
    size_rows = []
    for D in cfg["d_grid"]:
        rows = klmod.kl_error_sweep([cfg["mu"], cfg["d_sigma"]], [cfg["prior_mu"], cfg["prior_sigma"]],
                                    [cfg["d_m"]], cfg["d_replications"], cfg.seed, D=D)
        for r in rows:
            r["d"] = D
        size_rows += rows
        summary.add(sweep="size", sigma=cfg["d_sigma"], d=D, m=cfg["d_m"],
                    median_error=float(np.median([r["error"] for r in rows])), rmse=rows[0]["rmse"],
                    grad_nodes=rows[0]["grad_nodes"])
    reports["kl_error_size.csv"] = ExperimentReport(["d"] + KL_COLUMNS, size_rows)
    reports["kl_error_summary.csv"] = summary
    plot = svg.line_chart(series, "RMSE of reparameterized KL vs closed form", "M", "RMSE", logx=True, logy=True)
    return reports, {"kl_error.svg": plot}


# -- timing --------------------------------------------------------------------


def _time_repar(tup, spec, th0, xi):
    t0 = time.perf_counter_ns()
    tape = tp.Tape()
    th = tape.params(th0)
    v = rp.evaluate_tuple(tup, tape, th, xi)
    tape.backward(v)
    return time.perf_counter_ns() - t0, tape


def _time_direct(g, spec, th0, xi):
    t0 = time.perf_counter_ns()
    tape = tp.Tape()
    th = tape.params(th0)
    v = rp.direct_mc_build(tape, g, spec, th, xi)
    tape.backward(v)
    return time.perf_counter_ns() - t0, tape


def accumulate_gradients(g, spec, th0, xi):
    """M separate build + backward passes, gradients summed (accumulation baseline)."""
    M = xi.shape[0]
    total = np.zeros(len(th0))
    value = 0.0
    for i in range(M):
        tape = tp.Tape()
        th = tape.params(th0)
        v = rp.direct_mc_build(tape, g, spec, th, xi[i:i + 1]) * (1.0 / M)
        total += tape.gradient(v, th)
        value += v.value
    return value, total


def _time_accumulate(g, spec, th0, xi):
    t0 = time.perf_counter_ns()
    accumulate_gradients(g, spec, th0, xi)
    return time.perf_counter_ns() - t0, None


def timing(cfg: SweepConfig):
    spec = _family(cfg["family"])
    g = _g(cfg["g"])
    th0 = _theta_for(spec, cfg["theta"])
    try:
        tup = rp.build_tuple(spec, g)
    except UnsupportedG as exc:
        raise ConfigError(str(exc)) from None
    if cfg["repeats"] < 1:
        raise ConfigError("repeats must be >= 1")
    raw = ExperimentReport(["method", "m", "repeat", "grad_nodes", "interaction_nodes", "wall_time_ns"])
    summary = ExperimentReport(["method", "m", "grad_nodes", "interaction_nodes", "median_ns"])
    series = {}
    for method in cfg["methods"]:
        if method not in ("direct", "repar", "accumulate"):
            raise ConfigError(f"unknown timing method {method!r}")
        for M in cfg["m_grid"]:
            if method == "direct" and M > cfg["max_m_direct"]:
                continue
            if method == "accumulate" and M > cfg["max_m_accumulate"]:
                continue
            xi = sample_ancillary(spec, M, _rng(cfg.seed, M))
            times = []
            stats = None
            for r in range(cfg["repeats"]):
                if method == "repar":
                    ns, tape = _time_repar(tup, spec, th0, xi)
                elif method == "direct":
                    ns, tape = _time_direct(g, spec, th0, xi)
                else:
                    ns, tape = _time_accumulate(g, spec, th0, xi)
                st = tape.stats() if tape is not None else None
                gn = st.grad_nodes if st else ""
                inn = st.interaction_nodes if st else ""
                raw.add(method=method, m=M, repeat=r, grad_nodes=gn, interaction_nodes=inn, wall_time_ns=ns)
                times.append(ns)
                stats = (gn, inn)
            med = int(np.median(times))
            summary.add(method=method, m=M, grad_nodes=stats[0], interaction_nodes=stats[1], median_ns=med)
            series.setdefault(method, []).append((M, med))
    plot = svg.line_chart(series, "median wall time per gradient estimate", "M", "ns", logx=True, logy=True)
    return {"timing.csv": raw, "timing_summary.csv": summary}, {"timing.svg": plot}


# -- train-demo ----------------------------------------------------------------


def _posterior_name(text):
    t = text.strip().lower()
    if t in ("normal", "gaussian"):
        return "gaussian"
    if t == "radial":
        return "radial"
    raise ConfigError(f"posterior must be radial or gaussian, got {text!r}")


def run_demo(cfg: SweepConfig, m_kl: int, seed: int):
    data = bnn.two_moons(cfg["n_train"], cfg["n_val"], cfg["noise"], cfg["data_seed"])
    model = bnn.make_model([2, cfg["hidden"], 1], _posterior_name(cfg["posterior"]),
                           (cfg["prior"], cfg["prior_params"]), seed=seed)
    econf = bnn.ElboConfig(None, m_kl, 1, cfg["batch_size"], cfg["kl_method"])
    return bnn.train(model, data, cfg["epochs"], bnn.Adam(lr=cfg["lr"]), econf, seed=seed,
                     n_predictive=cfg["n_predictive"])


def train_demo(cfg: SweepConfig):
    epochs = ExperimentReport(["m_kl", "seed", "epoch", "elbo", "nll", "kl"])
    conf = ExperimentReport(["m_kl", "seed", "threshold", "size", "accuracy"])
    runs = ExperimentReport(["m_kl", "seed", "val_accuracy", "size_at_0.9", "step_grad_nodes", "wall_time_ns"])
    acc: dict = {}
    sizes: dict = {}
    for m_kl in cfg["m_kl"]:
        if m_kl < 1:
            raise ConfigError("m_kl entries must be >= 1")
        for seed in cfg["seeds"]:
            rep = run_demo(cfg, m_kl, seed)
            for e in rep.epochs:
                epochs.add(m_kl=m_kl, seed=seed, epoch=e.epoch, elbo=e.elbo, nll=e.nll, kl=e.kl)
            for tau, size, a in rep.confident:
                conf.add(m_kl=m_kl, seed=seed, threshold=tau, size=size, accuracy=a)
                acc.setdefault(m_kl, {}).setdefault(tau, []).append(a)
                sizes.setdefault(m_kl, {}).setdefault(tau, []).append(size)
            runs.add(m_kl=m_kl, seed=seed, val_accuracy=rep.val_accuracy,
                     **{"size_at_0.9": dict((t, s) for t, s, _ in rep.confident)[0.9]},
                     step_grad_nodes=rep.step_grad_nodes, wall_time_ns=int(rep.wall_time_s * 1e9))
    thr = list(bnn.THRESHOLDS)
    table = ExperimentReport(["row"] + [f"acc_{t:.1f}" for t in thr] + [f"size_std_{t:.1f}" for t in thr])
    medians = {}
    for m_kl in cfg["m_kl"]:
        medians[m_kl] = [float(np.nanmedian(acc[m_kl][t])) if not all(map(math.isnan, acc[m_kl][t]))
                         else float("nan") for t in thr]
        stds = [float(np.std(sizes[m_kl][t])) for t in thr]
        table.add(row=f"m_kl={m_kl}", **{f"acc_{t:.1f}": v for t, v in zip(thr, medians[m_kl])},
                  **{f"size_std_{t:.1f}": v for t, v in zip(thr, stds)})
    ms = list(cfg["m_kl"])
    if len(ms) >= 2:
        lo, hi = min(ms), max(ms)
        # median over seeds of the per-seed difference
        deltas = []
        for t in thr:
            d = [a - b for a, b in zip(acc[hi][t], acc[lo][t]) if not (math.isnan(a) or math.isnan(b))]
            deltas.append(float(np.median(d)) if d else float("nan"))
        table.add(row=f"delta({hi}-{lo})", **{f"acc_{t:.1f}": v for t, v in zip(thr, deltas)})
    series = {f"m_kl={m}": list(zip(thr, medians[m])) for m in ms}
    plot = svg.line_chart(series, "confidence-set accuracy (median over seeds)", "confidence threshold", "accuracy")
    return ({"train_report.csv": epochs, "confidence.csv": conf, "runs.csv": runs, "accuracy_table.csv": table},
            {"confidence.svg": plot})


COMMAND_FUNCS = {"graph-size": graph_size, "kl-error": kl_error, "timing": timing, "train-demo": train_demo}
