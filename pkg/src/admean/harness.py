"""Experiment orchestration: dataset I/O, accuracy sweeps and timing benchmarks."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from admean.covsafe import CovNoise, covsafe
from admean.datagen import DistSpec, err_sigma, paired_cov, sample
from admean.estimator import privmean, schedule
from admean.meansafe import MeanNoise, meansafe
from admean.mechanisms import PrivacyBudget, Rng

log = logging.getLogger(__name__)

DATA_STREAM = 100
EST_STREAM = 200
THREADS_ENV = "ADMEAN_THREADS"


def resolve_threads(value: Optional[int]) -> int:
    """Explicit value, else ``$ADMEAN_THREADS``, else 1."""
    if value is not None:
        return max(1, int(value))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


@dataclass
class ExperimentConfig:
    command: str
    input: Optional[str] = None
    output: Optional[str] = None
    dist: dict = field(default_factory=dict)
    eps: float = 1.0
    delta: float = 1e-6
    bound: Optional[float] = None
    adaptive: bool = False
    seeds: list = field(default_factory=lambda: [0])
    trials: int = 1
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in ("estimate", "gen", "audit", "bench", "sweep"):
            raise ValueError(f"unknown command {self.command!r}")
        PrivacyBudget(self.eps, self.delta)
        if self.bound is not None and not self.bound > 0:
            raise ValueError("bound must be positive")
        if self.trials < 1 or self.threads < 1:
            raise ValueError("trials and threads must be positive")
        return self

    def to_json(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# dataset I/O


def read_csv(path: str, header: bool = False) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for row in reader:
            if row and any(cell.strip() for cell in row):
                rows.append([float(cell) for cell in row])
    if not rows:
        return np.zeros((0, 0))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"rows have differing numbers of columns: {sorted(widths)}")
    return np.array(rows, dtype=np.float64)


def write_csv(path: str, x, header: Optional[Sequence[str]] = None):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        for row in x:
            # repr gives the shortest string that round-trips a double
            w.writerow([repr(float(v)) for v in row])


def write_json(path: str, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------------------
# accuracy sweep


def default_bound(n: int, d: int) -> float:
    return 4.0 * (d + math.log(n))


@dataclass(frozen=True)
class SweepCell:
    n: int
    d: int
    eps: float
    delta: float
    B: float
    sigma_diag: tuple
    kind: str = "gaussian"
    dof: Optional[float] = None

    def spec(self) -> DistSpec:
        extra = {"dof": self.dof} if self.kind == "student_t" else {}
        return DistSpec(self.kind, np.zeros(self.d), np.diag(self.sigma_diag), extra)


def run_trial(cell: SweepCell, seed: int) -> dict:
    """One seeded run on freshly sampled data, with error metrics and a no-prune check."""
    spec = cell.spec()
    x = sample(spec, cell.n, Rng(seed, DATA_STREAM).child(cell.n))
    t0 = time.perf_counter()
    out = {"seed": seed, "n": cell.n}
    try:
        est, rec = privmean(x, cell.B, PrivacyBudget(cell.eps, cell.delta),
                            Rng(seed, EST_STREAM).child(cell.n), keep_transcripts=True)
    except Exception as exc:  # a failed cell is reported, not fatal to the sweep
        out.update(failed=True, error=f"{type(exc).__name__}: {exc}")
        return out
    out["wall_ms"] = 1e3 * (time.perf_counter() - t0)
    out["cov"] = rec.cov
    out["mean"] = rec.mean
    out["aborted"] = est is None
    out["failed"] = False
    if est is None:
        return out
    xbar = x.mean(axis=0)
    out["err_xbar"] = math.sqrt(err_sigma(est, xbar, spec.sigma))
    out["err_mu"] = math.sqrt(err_sigma(est, spec.mu, spec.sigma))
    no_prune = rec.cov["n_removed"] == 0 and rec.mean["n_removed"] == 0
    out["no_prune"] = no_prune
    if no_prune:
        expected = xbar + paired_cov(x).sqrt @ rec.mean_noise.z_gauss
        scale = max(1.0, float(np.max(np.abs(expected))))
        out["identity_gap"] = float(np.max(np.abs(est - expected))) / scale
    return out


def _run_task(args):
    return run_trial(*args)


def run_tasks(tasks: list, threads: int) -> list:
    """Run ``(cell, seed)`` tasks, returning results in task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [run_trial(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_task, tasks))


def _stats(values: list) -> Optional[dict]:
    if not values:
        return None
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3), "iqr": float(q3 - q1)}


@dataclass
class SweepResult:
    config: dict
    cells: list

    def to_json(self) -> dict:
        return {"config": self.config, "cells": self.cells}

    def write(self, prefix: str):
        write_json(prefix + ".json", self.to_json())
        with open(prefix + ".csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "d", "eps", "delta", "B", "trials", "abort_rate", "fail_rate",
                        "err_xbar_median", "err_xbar_iqr", "err_mu_median", "err_mu_iqr"])
            for c in self.cells:
                ex, em = c["err_xbar"] or {}, c["err_mu"] or {}
                w.writerow([c["n"], c["d"], c["eps"], c["delta"], c["B"], c["trials"], c["abort_rate"],
                            c["fail_rate"], ex.get("median"), ex.get("iqr"), em.get("median"), em.get("iqr")])


def summarize_cell(cell: SweepCell, results: list) -> dict:
    ok = [r for r in results if not r.get("failed")]
    released = [r for r in ok if not r["aborted"]]
    trials = len(results)
    abort_rate = (len(ok) - len(released)) / len(ok) if ok else None
    out = asdict(cell)
    out["sigma_diag"] = list(cell.sigma_diag)
    out.update(
        trials=trials,
        abort_rate=abort_rate,
        fail_rate=(trials - len(ok)) / trials if trials else 0.0,
        err_xbar=_stats([r["err_xbar"] for r in released]),
        err_mu=_stats([r["err_mu"] for r in released]),
        no_prune_runs=sum(bool(r.get("no_prune")) for r in released),
        max_identity_gap=max((r["identity_gap"] for r in released if "identity_gap" in r), default=None),
        errors=sorted({r["error"] for r in results if r.get("failed")}),
        runs=results,
    )
    return out


def run_sweep(ns: Sequence[int], d: int, eps: float, delta: float, seeds: Sequence[int],
              sigma_diag: Optional[Sequence[float]] = None, bound: Optional[float] = None,
              threads: int = 1, kind: str = "gaussian", dof: Optional[float] = None) -> SweepResult:
    """Seeded accuracy sweep over sample sizes.

    ``bound=None`` uses ``4 (d + ln n)`` for each cell.
    """
    if not ns:
        raise ValueError("the sweep grid is empty")
    sigma_diag = tuple(float(v) for v in (sigma_diag if sigma_diag is not None else np.ones(d)))
    if len(sigma_diag) != d:
        raise ValueError("sigma_diag must have length d")
    cells = [SweepCell(int(n), d, eps, delta, bound if bound else default_bound(n, d), sigma_diag, kind, dof)
             for n in ns]
    tasks = [(c, int(s)) for c in cells for s in seeds]
    results = run_tasks(tasks, threads)
    per = len(seeds)
    summaries = [summarize_cell(c, results[j * per:(j + 1) * per]) for j, c in enumerate(cells)]
    config = {"ns": list(map(int, ns)), "d": d, "eps": eps, "delta": delta, "seeds": list(map(int, seeds)),
              "sigma_diag": list(sigma_diag), "bound": bound, "kind": kind, "dof": dof}
    return SweepResult(config, summaries)


# ---------------------------------------------------------------------------
# timing


def time_phases(n: int, d: int, eps: float, delta: float, seed: int, B: Optional[float] = None) -> dict:
    """Wall time of each phase on Gaussian data at the scheduled noise levels.

    The mean phase always runs (on the last covariance iterate if the
    covariance phase aborted) so that both phases are timed at every size.
    """
    B = default_bound(n, d) if B is None else B
    x = Rng(seed, DATA_STREAM).gen.standard_normal((n, d))
    p = schedule(n, d, B, PrivacyBudget(eps, delta))
    rng = Rng(seed, EST_STREAM)
    cn = CovNoise.draw(n, p.sigma_z, p.sigma_w_cov, rng.child(1))
    t0 = time.perf_counter()
    cres = covsafe(x, B, p.m, cn)
    t1 = time.perf_counter()
    a = cres.sigma_hat if cres.sigma_hat is not None else cres.transcript.covariances[-1]
    mn = MeanNoise.draw(n, d, p.b, p.sigma_top, p.sigma_w_mean, p.sigma_gauss, rng.child(2))
    t2 = time.perf_counter()
    meansafe(x, a, B, p.b, p.k, mn)
    t3 = time.perf_counter()
    return {"n": n, "d": d, "B": B, "cov_s": t1 - t0, "mean_s": t3 - t2, "total_s": (t1 - t0) + (t3 - t2),
            "cov_iterations": cres.transcript.T, "cov_removed": cres.transcript.n_removed,
            "cov_aborted": cres.aborted}


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def run_bench(n: int, dims: Sequence[int], eps: float = 2.0, delta: float = 1e-3, seed: int = 0,
              repeats: int = 3) -> dict:
    """Best-of-``repeats`` phase timings over ``dims`` and the fitted d-exponents."""
    rows = []
    for d in dims:
        runs = [time_phases(n, d, eps, delta, seed + r) for r in range(repeats)]
        best = min(runs, key=lambda r: r["total_s"])
        best["cov_s"] = min(r["cov_s"] for r in runs)
        best["mean_s"] = min(r["mean_s"] for r in runs)
        rows.append(best)
    out = {"n": n, "dims": list(dims), "eps": eps, "delta": delta, "seed": seed, "repeats": repeats, "rows": rows}
    if len(dims) >= 2:
        out["exponent_total"] = fit_exponent(dims, [r["total_s"] for r in rows])
        out["exponent_cov"] = fit_exponent(dims, [r["cov_s"] for r in rows])
        out["exponent_mean"] = fit_exponent(dims, [r["mean_s"] for r in rows])
    return out
