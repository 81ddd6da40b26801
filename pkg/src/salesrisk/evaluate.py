"""Evaluation protocol: quantile calibration, two-sample distances, and
unconditional/conditional generative tests with replication sweeps.

Replication seeds derive from a base seed through SeedSequence spawning, so
results are independent of execution order and safe to parallelize.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import datagen
from .errors import DataError, DomainError
from .generator import ConditionalSampler, transform_uniform


def wasserstein1(a, b):
    """1-D W1 distance between samples.

    Equal sizes: mean absolute difference of order statistics.  Unequal:
    integral of |ECDF_a - ECDF_b| over the pooled support.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DomainError("wasserstein1 needs nonempty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    pooled = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(a, pooled[:-1], side="right") / a.size
    fb = np.searchsorted(b, pooled[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * np.diff(pooled)))


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov statistic sup |ECDF_a - ECDF_b|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DomainError("ks_statistic needs nonempty samples")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_one_sample(draws, cdf):
    """KS distance between an empirical sample and a PiecewiseCdf.

    Ties (the endpoint atoms) are compared after their full ECDF jump; the
    left-limit side uses the pre-jump ECDF against cdf_left."""
    x = np.asarray(draws, dtype=float)
    n = x.size
    vals, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts)
    ec_hi = cum / n
    ec_lo = (cum - counts) / n
    F = cdf.cdf(vals)
    F_left = cdf.cdf_left(vals)
    return float(max(np.max(np.abs(ec_hi - F)), np.max(np.abs(ec_lo - F_left))))


def calibration(model, X_test, y_test, tau_range=None):
    """Empirical coverage tau_hat_j = mean(y <= predicted quantile_j) per level."""
    X_test = np.asarray(X_test, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if y_test.size == 0:
        raise DataError("empty test set")
    Q = model.predict_quantiles(X_test)
    tau_hat = (y_test[:, None] <= Q).mean(axis=0)
    if tau_range is not None:
        lv = model.grid.levels
        sel = (lv >= tau_range[0]) & (lv <= tau_range[1])
        return tau_hat[sel]
    return tau_hat


@dataclass
class ReplicationPlan:
    replications: int = 10
    split: float = 0.8
    base_seed: int = 0
    m_override: int | None = None
    model_kind: str = "linear"

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if not 0.0 < self.split < 1.0:
            raise DomainError("split must lie in (0, 1)")

    def seeds(self, n=None):
        n = self.replications if n is None else n
        return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(self.base_seed).spawn(n)]


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)

    def aggregate(self):
        if not self.rows:
            return
        keys = [k for k in self.rows[0] if isinstance(self.rows[0][k], (int, float))]
        self.aggregates = {k: float(np.mean([r[k] for r in self.rows])) for k in keys}
        self.aggregates["replications"] = len(self.rows)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"rows": self.rows, "aggregates": self.aggregates,
                       "histograms": self.histograms}, fh, indent=2)

    def to_csv(self, path):
        if not self.rows:
            raise DataError("empty report")
        keys = list(self.rows[0])
        with open(path, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in self.rows:
                fh.write(",".join(str(r[k]) for k in keys) + "\n")

    def histograms_to_csv(self, path):
        """Bin data with recorded edges, one row per (series, bin)."""
        if not self.histograms:
            raise DataError("no histogram data recorded")
        with open(path, "w") as fh:
            fh.write("series,bin_lo,bin_hi,count\n")
            for name, h in self.histograms.items():
                edges = h["edges"]
                for i, c in enumerate(h["counts"]):
                    fh.write(f"{name},{edges[i]!r},{edges[i + 1]!r},{c}\n")


def histogram_data(samples, bins=60, lo=None, hi=None):
    """Fixed-bin histogram with recorded edges, so figures rebuild bit-exactly."""
    samples = np.asarray(samples, dtype=float)
    lo = float(samples.min()) if lo is None else lo
    hi = float(samples.max()) if hi is None else hi
    counts, edges = np.histogram(samples, bins=bins, range=(lo, hi))
    return {"counts": counts.tolist(), "edges": edges.tolist()}


def unconditional_test(model, test_data, plan, bins=60):
    """One generated draw per test covariate vs the held-out responses.

    Each replication redraws the generation uniforms from a derived seed;
    reports mean/SD of both samples plus W1 and KS per replication.
    """
    X, y = test_data.rows, test_data.response
    if test_data.schema != model.schema:
        raise DataError("test covariates do not match the model schema")
    Q = model.predict_quantiles(X)
    m = model.grid.m
    report = EvalReport()
    for rep, seed in enumerate(plan.seeds()):
        rng = np.random.default_rng(seed)
        u = np.maximum(rng.random(X.shape[0]), np.finfo(float).tiny)
        gen = transform_uniform(Q, u, m)
        report.rows.append({
            "replication": rep, "seed": seed,
            "gen_mean": float(gen.mean()), "gen_sd": float(gen.std(ddof=1)),
            "true_mean": float(y.mean()), "true_sd": float(y.std(ddof=1)),
            "wd": wasserstein1(gen, y), "ks": ks_statistic(gen, y),
        })
        if rep == 0:
            lo = float(min(gen.min(), y.min()))
            hi = float(max(gen.max(), y.max()))
            report.histograms = {"generated": histogram_data(gen, bins, lo, hi),
                                 "observed": histogram_data(y, bins, lo, hi)}
    report.aggregate()
    return report


def conditional_test(model, truth_params, x, plan, K=10_000, bins=60):
    """K generated draws at fixed x vs K oracle draws from the ground truth.

    Only available when the data-generating parameters are known (synthetic
    studies); raises DomainError otherwise.
    """
    if truth_params is None:
        raise DomainError("conditional test needs ground-truth parameters")
    x = np.asarray(x, dtype=float)
    sampler = ConditionalSampler(model)
    report = EvalReport()
    seeds = plan.seeds(2 * plan.replications)
    for rep in range(plan.replications):
        gen = sampler.sample(x, K, seeds[2 * rep])
        oracle = datagen.true_conditional_sample(truth_params, x, K, seeds[2 * rep + 1])
        report.rows.append({
            "replication": rep, "seed": seeds[2 * rep],
            "gen_mean": float(gen.mean()), "gen_sd": float(gen.std(ddof=1)),
            "oracle_mean": float(oracle.mean()), "oracle_sd": float(oracle.std(ddof=1)),
            "wd": wasserstein1(gen, oracle), "ks": ks_statistic(gen, oracle),
        })
        if rep == 0:
            lo = float(min(gen.min(), oracle.min()))
            hi = float(max(gen.max(), oracle.max()))
            report.histograms = {"generated": histogram_data(gen, bins, lo, hi),
                                 "oracle": histogram_data(oracle, bins, lo, hi)}
    report.aggregate()
    if report.aggregates.get("oracle_sd"):
        # flags models whose conditional spread is off by more than a quarter
        dev = abs(report.aggregates["gen_sd"] - report.aggregates["oracle_sd"])
        report.aggregates["sd_deviation_flag"] = bool(dev > 0.25 * report.aggregates["oracle_sd"])
    return report


def replication_sweep(source, plan, fit_fn, truth_params=None, x=None, K=10_000):
    """Full protocol: per replication, resplit (or regenerate), refit, and run
    the unconditional (and optionally conditional) comparisons.

    source: a Dataset to split plan.split/1-plan.split per replication, or a
    callable seed -> (train Dataset, test Dataset) for synthetic studies.
    fit_fn: (train Dataset, seed) -> fitted model.
    """
    uncond = EvalReport()
    cond = EvalReport() if truth_params is not None and x is not None else None
    for rep, seed in enumerate(plan.seeds()):
        rng = np.random.default_rng(seed)
        if callable(source):
            train, test = source(seed)
        else:
            n = source.n
            idx = rng.permutation(n)
            cut = int(round(plan.split * n))
            train = datagen.Dataset(source.schema, source.rows[idx[:cut]], source.response[idx[:cut]])
            test = datagen.Dataset(source.schema, source.rows[idx[cut:]], source.response[idx[cut:]])
        model = fit_fn(train, seed)
        one = ReplicationPlan(replications=1, base_seed=seed, split=plan.split,
                              model_kind=plan.model_kind)
        u_rep = unconditional_test(model, test, one)
        row = dict(u_rep.rows[0])
        row["replication"] = rep
        uncond.rows.append(row)
        if cond is not None:
            c_rep = conditional_test(model, truth_params, x, one, K=K)
            crow = dict(c_rep.rows[0])
            crow["replication"] = rep
            cond.rows.append(crow)
    uncond.aggregate()
    if cond is not None:
        cond.aggregate()
    return uncond, cond
