"""Monte Carlo size and power experiments.

Every replicate draws its noise from ``SeedSequence([seed, rep])`` so a
scenario gives the same numbers whatever the number of worker processes.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .core import AR1, NumericalError, materialize, norm_isf
from .ksel import SelectionConfig, stability_select
from .natest import run_test
from .oracle import oracle_null_moments

INNOVATIONS = ("gaussian", "gamma", "t")
GAMMA_SHAPE = 4.0


@dataclass(frozen=True)
class SignalSpec:
    """Sparse mean vector: ``floor(p**(1 - beta))`` entries equal to ``r``.

    ``placement`` is ``"clustered"`` (leading coordinates) or ``"random"``.
    Random positions come from their own seed and are held fixed across
    replicates unless ``per_replicate`` is set.
    """

    beta: float = 0.5
    r: float = 0.0
    placement: str = "random"
    seed: int = 0
    per_replicate: bool = False

    def nonzero_count(self, p):
        if self.r == 0:
            return 0
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        # small slack keeps exact integer powers from rounding down
        return min(p, int(math.floor(p ** (1.0 - self.beta) + 1e-9)))

    def mean_vector(self, p, rep=0):
        mu = np.zeros(p)
        m = self.nonzero_count(p)
        if m == 0:
            return mu
        if self.placement == "clustered":
            mu[:m] = self.r
        elif self.placement == "random":
            key = [self.seed, 0x5157] + ([rep] if self.per_replicate else [])
            rng = np.random.default_rng(np.random.SeedSequence(key))
            mu[rng.choice(p, size=m, replace=False)] = self.r
        else:
            raise ValueError(f"unknown placement {self.placement!r}")
        return mu


@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo cell.

    ``k`` is an integer band width or ``"auto"`` for stability selection
    with ``selection`` (its seed is replaced per replicate).
    """

    n: int = 60
    p: int = 200
    model: object = AR1(0.6)
    signal: SignalSpec = SignalSpec()
    reps: int = 1000
    alpha: float = 0.05
    k: object = 3
    selection: SelectionConfig = SelectionConfig()
    innovation: str = "gaussian"
    t_df: float = 8.0
    seed: int = 0
    include_diagonal: bool = False
    include_oracle: bool = True
    force_k: bool = False

    def validate(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.n < 4 or self.p < 1:
            raise ValueError(f"need n >= 4 and p >= 1, got n={self.n}, p={self.p}")
        if self.innovation not in INNOVATIONS:
            raise ValueError(f"innovation must be one of {INNOVATIONS}, got {self.innovation!r}")
        if self.k != "auto" and (int(self.k) != self.k or self.k < 0):
            raise ValueError(f"k must be a non-negative integer or 'auto', got {self.k!r}")


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    rejection_rate: dict
    mc_se: dict
    failures: dict
    successes: dict
    statistics: dict = field(default_factory=dict, repr=False)
    chosen_k: list = field(default_factory=list, repr=False)

    def rows(self):
        cfg = self.config
        base = {
            "n": cfg.n,
            "p": cfg.p,
            "model": repr(cfg.model),
            "beta": cfg.signal.beta,
            "r": cfg.signal.r,
            "placement": cfg.signal.placement,
            "reps": cfg.reps,
            "alpha": cfg.alpha,
            "k_policy": "auto" if cfg.k == "auto" else f"fixed({cfg.k})",
            "innovation": cfg.innovation,
            "seed": cfg.seed,
        }
        out = []
        for test in self.rejection_rate:
            row = dict(base)
            row.update(
                test=test,
                rejection_rate=self.rejection_rate[test],
                mc_se=self.mc_se[test],
                failures=self.failures[test],
            )
            out.append(row)
        return out


CSV_FIELDS = [
    "n", "p", "model", "beta", "r", "placement", "reps", "alpha",
    "k_policy", "innovation", "seed", "test", "rejection_rate", "mc_se", "failures",
]


def innovations(rng, size, kind="gaussian", df=8.0):
    """Draw i.i.d. mean-0, variance-1 noise."""
    if kind == "gaussian":
        return rng.standard_normal(size)
    if kind == "gamma":
        return (rng.gamma(GAMMA_SHAPE, 1.0, size) - GAMMA_SHAPE) / math.sqrt(GAMMA_SHAPE)
    if kind == "t":
        if df <= 2:
            raise ValueError("t innovations need df > 2 for a finite variance")
        return rng.standard_t(df, size) / math.sqrt(df / (df - 2.0))
    raise ValueError(f"unknown innovation {kind!r}")


class _Scenario:
    """Per-process precomputation for one config."""

    def __init__(self, cfg):
        cfg.validate()
        self.cfg = cfg
        self.Sigma = materialize(cfg.model, cfg.p)
        # lower Cholesky factor: X = mu + Z L'
        self.L = np.linalg.cholesky(self.Sigma)
        self.mu = cfg.signal.mean_vector(cfg.p)
        self.z_alpha = norm_isf(cfg.alpha)
        if cfg.include_oracle:
            # eta = -1/2: null mean tr(I) = p, sd sqrt(2p)
            self.oracle_mean, self.oracle_sd = oracle_null_moments(self.Sigma, -0.5)

    def sample(self, rep):
        cfg = self.cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep]))
        Z = innovations(rng, (cfg.n, cfg.p), cfg.innovation, cfg.t_df)
        mu = cfg.signal.mean_vector(cfg.p, rep) if cfg.signal.per_replicate else self.mu
        return mu + Z @ self.L.T

    def selection_seed(self, rep):
        return int(np.random.SeedSequence([self.cfg.seed, rep, 1]).generate_state(1)[0])

    def run_rep(self, rep):
        cfg = self.cfg
        X = self.sample(rep)
        out = {}
        k = cfg.k
        if k == "auto":
            try:
                sel = stability_select(X, replace(cfg.selection, seed=self.selection_seed(rep)))
                k = sel.chosen_k
            except (NumericalError, np.linalg.LinAlgError):
                k = None
        out["chosen_k"] = k
        if k is None:
            out["new"] = None
        else:
            out["new"] = _safe_test(X, k, cfg.alpha, True if cfg.k == "auto" else cfg.force_k)
        if cfg.include_diagonal:
            out["new_k0"] = _safe_test(X, 0, cfg.alpha, True)
        if cfg.include_oracle:
            xbar = X.mean(axis=0)
            w = solve_triangular(self.L, np.sqrt(cfg.n) * xbar, lower=True)
            t0 = float(w @ w)
            z = (t0 - self.oracle_mean) / self.oracle_sd
            out["oracle"] = (t0, z, z >= self.z_alpha)
        return out


def _safe_test(X, k, alpha, force):
    try:
        rep = run_test(X, k, alpha, force_k=force)
    except (NumericalError, np.linalg.LinAlgError):
        return None
    return (rep.statistic, rep.z_score, rep.reject)


def sample_dataset(cfg, rep_index):
    """The data matrix of replicate ``rep_index``; fully determined by the seed."""
    return _Scenario(cfg).sample(rep_index)


def _run_chunk(cfg, reps):
    import warnings

    sc = _Scenario(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return [sc.run_rep(r) for r in reps]


def default_workers():
    try:
        return max(1, int(os.environ.get("NA_T2_THREADS", "1")))
    except ValueError:
        return 1


def run_scenario(cfg, workers=None, keep_statistics=False):
    """Replicate a scenario and tally rejections per test variant.

    Test variants are ``"new"`` (band width per ``cfg.k``), ``"oracle"``
    (true-covariance Hotelling statistic) and optionally ``"new_k0"``.
    Rates are over the replicates that completed; failures are counted
    separately.
    """
    cfg.validate()
    workers = workers or default_workers()
    idx = list(range(cfg.reps))
    if workers > 1 and cfg.reps > 1:
        chunks = [idx[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, [cfg] * len(chunks), chunks))
        results = [None] * cfg.reps
        for chunk, part in zip(chunks, parts):
            for r, res in zip(chunk, part):
                results[r] = res
    else:
        results = _run_chunk(cfg, idx)

    tests = ["new"] + (["new_k0"] if cfg.include_diagonal else []) + (["oracle"] if cfg.include_oracle else [])
    rate, se, fail, ok, stats = {}, {}, {}, {}, {}
    for t in tests:
        vals = [res[t] for res in results]
        good = [v for v in vals if v is not None]
        fail[t] = len(vals) - len(good)
        ok[t] = len(good)
        rej = np.array([v[2] for v in good], dtype=float)
        rate[t] = float(rej.mean()) if good else float("nan")
        se[t] = math.sqrt(rate[t] * (1 - rate[t]) / len(good)) if good else float("nan")
        if keep_statistics:
            stats[t] = np.array([[v[0], v[1]] if v is not None else [np.nan, np.nan] for v in vals])
    return ScenarioResult(
        config=cfg,
        rejection_rate=rate,
        mc_se=se,
        failures=fail,
        successes=ok,
        statistics=stats,
        chosen_k=[res["chosen_k"] for res in results],
    )


def power_curve(configs, workers=None):
    """Run each config in turn and return the flattened CSV rows."""
    rows = []
    for cfg in configs:
        rows.extend(run_scenario(cfg, workers=workers).rows())
    return rows


def write_csv(rows, fh):
    writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in CSV_FIELDS})
