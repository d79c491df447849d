"""The adequate-bootstrap driver.

Find the resample size n* at which the adequacy test rejects with the target
probability, then take percentile intervals from B fits at that size.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .adequacy import (
    AdequacyError,
    ClassLayout,
    GroupedData,
    PearsonTest,
    pearson_adequacy_test,
)
from .isotonic import PowerCurve, adaptive_schedule, default_stride
from .models import FitError
from .statdist import DomainError, Sampler, chi2_quantile, noncentral_chi2_median_lambda

log = logging.getLogger(__name__)

WITH_REPLACEMENT = "with_replacement"
WITHOUT_REPLACEMENT = "without_replacement"
ISOTONIC = "isotonic"
PARAMETRIC = "parametric"

# stream tags keep trial and replicate draws disjoint
_TRIAL_STREAM = 0
_REPLICATE_STREAM = 1

# errors that mark a single resample as unusable rather than the run as broken
TRIAL_FAILURES = (FitError, AdequacyError, ArithmeticError, DomainError)

MAX_REPLICATE_FAILURE_RATE = 0.10


class ConfigError(ValueError):
    """Invalid engine configuration."""


class EngineError(RuntimeError):
    """The run cannot produce a trustworthy result."""


@dataclass(frozen=True)
class EngineConfig:
    adequacy_alpha: float = 0.05
    target_power: float = 0.5
    ci_coverage: float = 0.95
    replicates_B: int = 1000
    resampling: str = WITH_REPLACEMENT
    size_method: str = ISOTONIC
    stride: Optional[int] = None
    seed: Optional[int] = None
    classes_K: int = 10
    class_layout: str = "equiprobable"
    tail_prob: float = 0.001
    param_source: str = "refit"
    min_parametric_size: int = 20
    workers: int = 1
    # skip size estimation and resample at this size
    forced_size: Optional[int] = None

    def __post_init__(self):
        for name in ("adequacy_alpha", "target_power", "ci_coverage"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie strictly between 0 and 1, got {v}")
        if self.replicates_B < 2:
            raise ConfigError("replicates_B must be at least 2")
        if self.resampling not in (WITH_REPLACEMENT, WITHOUT_REPLACEMENT):
            raise ConfigError(f"unknown resampling mode {self.resampling!r}")
        if self.size_method not in (ISOTONIC, PARAMETRIC):
            raise ConfigError(f"unknown size method {self.size_method!r}")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be positive")
        if self.classes_K < 2:
            raise ConfigError("classes_K must be at least 2")
        if self.param_source not in ("refit", "fixed"):
            raise ConfigError(f"unknown param_source {self.param_source!r}")
        if self.min_parametric_size < 1:
            raise ConfigError("min_parametric_size must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.forced_size is not None and self.forced_size < 1:
            raise ConfigError("forced_size must be positive")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        try:
            self.layout()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def layout(self) -> ClassLayout:
        return ClassLayout(self.class_layout, self.classes_K, self.tail_prob)

    def with_seed(self) -> "EngineConfig":
        """Copy with a concrete seed, drawing one if unset."""
        if self.seed is not None:
            return self
        return dataclasses.replace(self, seed=secrets.randbits(63))


def substream(seed: int, *indices: int) -> Sampler:
    """Independent sampler for ``(seed, *indices)``.

    Uses numpy's SeedSequence spawn keys, so each trial or replicate owns
    its stream and results do not depend on evaluation order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in indices))
    return Sampler(np.random.Generator(np.random.PCG64(ss)))


def child_seed(seed: int, *indices: int) -> int:
    """A 63-bit seed derived from ``(seed, *indices)``, for nested runs."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def data_size(data) -> int:
    return data.n if isinstance(data, GroupedData) else len(data)


def resample(data, size: int, sampler: Sampler, mode: str = WITH_REPLACEMENT):
    """Draw ``size`` observations from ``data``.

    Grouped data is resampled through its counts (multinomial, or
    multivariate hypergeometric without replacement).
    """
    N = data_size(data)
    if mode == WITHOUT_REPLACEMENT and size > N:
        raise ValueError(f"cannot draw {size} of {N} without replacement")
    rng = sampler.rng
    if isinstance(data, GroupedData):
        if mode == WITH_REPLACEMENT:
            counts = rng.multinomial(size, data.counts / N)
        else:
            counts = rng.multivariate_hypergeometric(data.counts, size)
        return data.with_counts(counts)
    x = np.asarray(data)
    if mode == WITH_REPLACEMENT:
        return x[rng.integers(0, N, size)]
    return x[rng.choice(N, size, replace=False)]


def _mapper(workers: int):
    if workers <= 1:
        return lambda f, xs: [f(x) for x in xs]

    def run(f, xs):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(f, xs))

    return run


def to_jsonable(obj: Any):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return obj


@dataclass
class AdequateResult:
    adequate_size: int
    saturated: bool
    intervals: dict[str, tuple[float, float]]
    replicate_params: dict[str, np.ndarray] = field(repr=False)
    power_curve: Optional[PowerCurve]
    full_data_fit: Any
    config: EngineConfig
    seed: int
    N: int
    size_method: str
    n_failed_trials: int = 0
    n_failed_replicates: int = 0
    full_data_statistic: Optional[float] = None

    def width(self, name: str) -> float:
        lo, hi = self.intervals[name]
        return hi - lo

    def to_dict(self, include_replicates: bool = False) -> dict:
        d = {
            "adequate_size": self.adequate_size,
            "saturated": self.saturated,
            "N": self.N,
            "size_method": self.size_method,
            "intervals": {k: list(v) for k, v in self.intervals.items()},
            "full_data_fit": self.full_data_fit,
            "seed": self.seed,
            "config": self.config,
            "n_failed_trials": self.n_failed_trials,
            "n_failed_replicates": self.n_failed_replicates,
            "full_data_statistic": self.full_data_statistic,
            "power_curve": None if self.power_curve is None else self.power_curve.knots,
        }
        if include_replicates:
            d["replicate_params"] = self.replicate_params
        return to_jsonable(d)

    def to_json(self, include_replicates: bool = False) -> str:
        return json.dumps(self.to_dict(include_replicates), indent=2, sort_keys=True) + "\n"

    def replicates_tsv(self) -> str:
        rows = ["replicate\tparam\tvalue"]
        names = list(self.replicate_params)
        B = len(next(iter(self.replicate_params.values()))) if names else 0
        for b in range(B):
            for name in names:
                rows.append(f"{b}\t{name}\t{float(self.replicate_params[name][b])!r}")
        return "\n".join(rows) + "\n"


def parametric_adequate_size(
    data,
    family,
    adequacy_alpha: float = 0.05,
    K: int = 10,
    min_size: int = 20,
    layout: ClassLayout | None = None,
    full_params=None,
) -> tuple[int, bool, float]:
    """Adequate size from the noncentral chi-square approximation.

    With X2 the full-data Pearson statistic at fixed full-data parameters,
    a resample of size n has statistic near noncentral chi-square with
    noncentrality ``n X2 / N``.  Solve for the noncentrality whose median is
    the critical value.  Returns ``(size, saturated, X2)``.
    """
    N = data_size(data)
    if full_params is None:
        full_params = family.fit(data)
    out = pearson_adequacy_test(
        data, family, alpha=adequacy_alpha, K=K, param_source="fixed", params=full_params, layout=layout
    )
    size, saturated = size_from_statistic(N, out.statistic, out.df, adequacy_alpha, min_size)
    return size, saturated, out.statistic


def size_from_statistic(N: int, x2: float, df: int, adequacy_alpha: float = 0.05, min_size: int = 20) -> tuple[int, bool]:
    """``round(N lambda* / x2)`` capped at N and floored at ``min_size``.

    A zero statistic means a perfect fit: the size saturates at N.
    """
    if x2 <= 0:
        return N, True
    lam = noncentral_chi2_median_lambda(df, chi2_quantile(1.0 - adequacy_alpha, df))
    n_star = round(N * lam / x2)
    if n_star >= N:
        return N, True
    return max(int(n_star), min(min_size, N)), False


def _fit_replicates(data, family, size, config: EngineConfig, seed: int, stream: int):
    def one(b):
        sampler = substream(seed, stream, b)
        try:
            return family.params_of_interest(family.fit(resample(data, size, sampler, config.resampling)))
        except TRIAL_FAILURES as exc:
            log.debug("replicate %d failed: %s", b, exc)
            return None

    results = _mapper(config.workers)(one, range(config.replicates_B))
    ok = [r for r in results if r is not None]
    failed = len(results) - len(ok)
    if failed > MAX_REPLICATE_FAILURE_RATE * config.replicates_B:
        raise EngineError(
            f"{failed} of {config.replicates_B} replicate fits failed at size {size}; interval would be unreliable"
        )
    names = list(ok[0])
    draws = {k: np.array([r[k] for r in ok]) for k in names}
    return draws, failed


def percentile_intervals(draws: dict[str, np.ndarray], coverage: float) -> dict[str, tuple[float, float]]:
    lo_q, hi_q = (1.0 - coverage) / 2.0, (1.0 + coverage) / 2.0
    out = {}
    for k, v in draws.items():
        lo, hi = np.quantile(v, [lo_q, hi_q])
        out[k] = (float(lo), float(hi))
    return out


def adequate_bootstrap(data, family, config: EngineConfig | None = None, test=None) -> AdequateResult:
    """Run the adequate bootstrap of ``family`` on ``data``.

    ``test(resample, family, full_params)`` returns an AdequacyOutcome; by
    default a Pearson test built from ``config``.
    """
    config = (config or EngineConfig()).with_seed()
    seed = config.seed
    N = data_size(data)
    if N < 1:
        raise ValueError("data must be nonempty")
    full = family.fit(data)
    if test is None:
        test = PearsonTest(config.adequacy_alpha, config.layout(), config.param_source)

    curve = None
    failed_trials = 0
    stat = None
    if config.forced_size is not None:
        size = min(config.forced_size, N) if config.resampling == WITHOUT_REPLACEMENT else config.forced_size
        saturated = size >= N
        method = "forced"
    elif config.size_method == ISOTONIC:
        stride = config.stride if config.stride is not None else default_stride(N)
        stride = min(stride, N)

        def runner(size, index):
            sampler = substream(seed, _TRIAL_STREAM, index)
            try:
                return test(resample(data, size, sampler, config.resampling), family, full).rejected
            except TRIAL_FAILURES as exc:
                log.debug("trial %d failed: %s", index, exc)
                return None

        sched = adaptive_schedule(runner, N, config.target_power, stride, _mapper(config.workers))
        curve, size, saturated, failed_trials = sched.curve, sched.adequate_size, sched.saturated, sched.n_failed
        method = ISOTONIC
    else:
        size, saturated, stat = parametric_adequate_size(
            data, family, config.adequacy_alpha, config.classes_K, config.min_parametric_size, config.layout(), full
        )
        method = PARAMETRIC

    draws, failed = _fit_replicates(data, family, size, config, seed, _REPLICATE_STREAM)
    return AdequateResult(
        adequate_size=int(size),
        saturated=bool(saturated),
        intervals=percentile_intervals(draws, config.ci_coverage),
        replicate_params=draws,
        power_curve=curve,
        full_data_fit=family.params_of_interest(full),
        config=config,
        seed=seed,
        N=N,
        size_method=method,
        n_failed_trials=failed_trials,
        n_failed_replicates=failed,
        full_data_statistic=stat,
    )


def standard_bootstrap(data, family, config: EngineConfig | None = None) -> AdequateResult:
    """Ordinary percentile bootstrap: resamples of the full size N with replacement."""
    config = (config or EngineConfig()).with_seed()
    N = data_size(data)
    cfg = dataclasses.replace(config, forced_size=N, resampling=WITH_REPLACEMENT)
    res = adequate_bootstrap(data, family, cfg)
    res.size_method = "standard"
    return res
