"""Simulation studies: contaminated normal and normal under sampling bias."""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adequacy import AdequacyError, LikelihoodRatioTest, lr_adequacy_test
from .engine import (
    WITH_REPLACEMENT,
    EngineConfig,
    EngineError,
    adequate_bootstrap,
    child_seed,
    resample,
    standard_bootstrap,
    substream,
    to_jsonable,
)
from .isotonic import ScheduleError
from .models import (
    FitError,
    NormalKnownMean,
    NormalKnownVariance,
    SamplingBias,
    biased_normal_sample,
)
from .statdist import chi2_quantile
from .theory import sampling_bias_theoretical_size

SCALES = {"desk": (100, 2000), "paper": (1000, 20000)}

DATASET_FAILURES = (EngineError, ScheduleError, FitError, AdequacyError, ArithmeticError)


def contamination_config(**overrides) -> EngineConfig:
    """Engine defaults for the contamination study.

    Pearson test with two tail classes of probability 0.001 and two central
    halves; equiprobable classes barely see a 2% contaminant far in the tail.
    """
    base = dict(class_layout="tails", classes_K=4, tail_prob=0.001)
    base.update(overrides)
    return EngineConfig(**base)


@dataclass(frozen=True)
class ContaminationScenario:
    proportion: float = 0.02
    hyper_sigma: float = 3.0
    hyper_tau: float = 4.0
    n_datasets: int = 100
    n_points: int = 2000
    config: EngineConfig = field(default_factory=contamination_config)
    contaminant_center: float = 3.0

    def __post_init__(self):
        if not 0 <= self.proportion <= 1:
            raise ValueError("proportion must lie in [0, 1]")
        if self.hyper_sigma <= 0 or self.hyper_tau < 0:
            raise ValueError("hyper_sigma must be positive and hyper_tau nonnegative")
        if self.n_datasets < 1 or self.n_points < 1:
            raise ValueError("need at least one dataset and one point")

    @classmethod
    def at_scale(cls, scale: str, **kw) -> "ContaminationScenario":
        n_datasets, n_points = SCALES[scale]
        return cls(n_datasets=n_datasets, n_points=n_points, **kw)


@dataclass(frozen=True)
class SamplingBiasScenario:
    J: int = 5
    tau: float = 0.5
    n_datasets: int = 100
    n_points: int = 2000
    config: EngineConfig = field(default_factory=EngineConfig)
    mode: str = WITH_REPLACEMENT

    def __post_init__(self):
        if self.J < 3:
            raise ValueError("J must be at least 3")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.n_datasets < 1 or self.n_points < 1:
            raise ValueError("need at least one dataset and one point")

    @classmethod
    def at_scale(cls, scale: str, **kw) -> "SamplingBiasScenario":
        n_datasets, n_points = SCALES[scale]
        return cls(n_datasets=n_datasets, n_points=n_points, **kw)

    @property
    def alt_family(self) -> SamplingBias:
        return SamplingBias.equiprobable(self.J)


@dataclass
class DatasetOutcome:
    index: int
    adequate_size: Optional[int] = None
    saturated: Optional[bool] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    covered: Optional[bool] = None
    std_lower: Optional[float] = None
    std_upper: Optional[float] = None
    std_covered: Optional[bool] = None
    theoretical_size: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class StudyReport:
    kind: str
    scenario: dict
    seed: int
    truth: float
    datasets: list

    def successful(self) -> list:
        return [d for d in self.datasets if d.ok]

    def summary(self) -> dict:
        ok = self.successful()
        n = len(ok)
        out = {"n_datasets": len(self.datasets), "n_failed": len(self.datasets) - n}
        if n == 0:
            return out
        cov = sum(d.covered for d in ok) / n
        sizes = np.array([d.adequate_size for d in ok], dtype=float)
        widths = np.array([d.width for d in ok])
        out.update(
            coverage=cov,
            coverage_se=math.sqrt(cov * (1 - cov) / n),
            covered_count=int(sum(d.covered for d in ok)),
            saturation_rate=sum(d.saturated for d in ok) / n,
            median_size=float(np.median(sizes)),
            mean_size=float(np.mean(sizes)),
            median_width=float(np.median(widths)),
            mean_width=float(np.mean(widths)),
        )
        if all(d.std_covered is not None for d in ok):
            out["standard_coverage"] = sum(d.std_covered for d in ok) / n
            out["standard_covered_count"] = int(sum(d.std_covered for d in ok))
            out["standard_mean_width"] = float(np.mean([d.std_upper - d.std_lower for d in ok]))
        return out

    def to_dict(self) -> dict:
        return to_jsonable(
            {
                "kind": self.kind,
                "scenario": self.scenario,
                "seed": self.seed,
                "truth": self.truth,
                "summary": self.summary(),
                "datasets": [dataclasses.asdict(d) for d in self.datasets],
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def datasets_tsv(self) -> str:
        cols = [f.name for f in dataclasses.fields(DatasetOutcome)]
        rows = ["\t".join(cols)]
        for d in self.datasets:
            rows.append("\t".join(_cell(getattr(d, c)) for c in cols))
        return "\n".join(rows) + "\n"

    def scatter_tsv(self) -> str:
        """(theoretical size, estimated size) pairs."""
        rows = ["theoretical\testimated"]
        for d in self.successful():
            if d.theoretical_size is not None:
                rows.append(f"{_cell(d.theoretical_size)}\t{d.adequate_size}")
        return "\n".join(rows) + "\n"


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    return str(v)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _resolved(config: EngineConfig) -> EngineConfig:
    return config.with_seed()


# ---------------------------------------------------------------------------
# Contamination
# ---------------------------------------------------------------------------


def contaminated_sample(scn: ContaminationScenario, sampler) -> np.ndarray:
    center = sampler.normal(scn.contaminant_center, scn.hyper_tau, 1)[0] if scn.hyper_tau > 0 else scn.contaminant_center
    x = sampler.normal(0.0, 1.0, scn.n_points)
    mask = sampler.uniform(scn.n_points) < scn.proportion
    if mask.any():
        x[mask] = sampler.normal(center, scn.hyper_sigma, int(mask.sum()))
    return x


def _contamination_dataset(args) -> DatasetOutcome:
    scn, seed, d = args
    ds_seed = child_seed(seed, d)
    x = contaminated_sample(scn, substream(ds_seed, 0))
    family = NormalKnownVariance(1.0)
    out = DatasetOutcome(d)
    try:
        cfg = dataclasses.replace(scn.config, seed=child_seed(ds_seed, 1), workers=1)
        res = adequate_bootstrap(x, family, cfg)
        std = standard_bootstrap(x, family, dataclasses.replace(cfg, seed=child_seed(ds_seed, 2)))
    except DATASET_FAILURES as exc:
        out.error = f"{type(exc).__name__}: {exc}"
        return out
    lo, hi = res.intervals["mean"]
    slo, shi = std.intervals["mean"]
    out.adequate_size, out.saturated = res.adequate_size, res.saturated
    out.lower, out.upper, out.covered = lo, hi, lo <= 0.0 <= hi
    out.std_lower, out.std_upper, out.std_covered = slo, shi, slo <= 0.0 <= shi
    return out


def run_contamination(scn: ContaminationScenario, workers: int = 1) -> StudyReport:
    """Adequate and standard bootstrap intervals for the mean of a contaminated normal.

    The main component is N(0, 1); each point is replaced with probability
    ``proportion`` by a draw from N(mu_c, hyper_sigma^2), mu_c ~ N(3, hyper_tau^2)
    drawn once per dataset.
    """
    scn = dataclasses.replace(scn, config=_resolved(scn.config))
    seed = scn.config.seed
    outs = _map(_contamination_dataset, [(scn, seed, d) for d in range(scn.n_datasets)], workers)
    return StudyReport("contamination", to_jsonable(scn), seed, 0.0, outs)


# ---------------------------------------------------------------------------
# Sampling bias
# ---------------------------------------------------------------------------


def sampling_bias_weights(scn: SamplingBiasScenario, sampler) -> np.ndarray:
    if scn.tau == 0:
        return np.ones(scn.J)
    return sampler.lognormal(0.0, scn.tau, scn.J)


def _sampling_bias_dataset(args) -> DatasetOutcome:
    scn, seed, d = args
    ds_seed = child_seed(seed, d)
    sampler = substream(ds_seed, 0)
    p = sampling_bias_weights(scn, sampler)
    alt = scn.alt_family
    x = biased_normal_sample(scn.n_points, 1.0, p, alt.boundaries, sampler)
    out = DatasetOutcome(d)
    out.theoretical_size = sampling_bias_theoretical_size(scn.J, np.log(p), scn.config.adequacy_alpha)
    try:
        cfg = dataclasses.replace(scn.config, seed=child_seed(ds_seed, 1), resampling=scn.mode, workers=1)
        test = LikelihoodRatioTest(alt, cfg.adequacy_alpha)
        res = adequate_bootstrap(x, NormalKnownMean(0.0), cfg, test=test)
    except DATASET_FAILURES as exc:
        out.error = f"{type(exc).__name__}: {exc}"
        return out
    lo, hi = res.intervals["sigma"]
    out.adequate_size, out.saturated = res.adequate_size, res.saturated
    out.lower, out.upper, out.covered = lo, hi, lo <= 1.0 <= hi
    return out


def run_sampling_bias(scn: SamplingBiasScenario, workers: int = 1) -> StudyReport:
    """Adequate bootstrap for sigma when N(0, 1) data pass a stepwise inclusion filter.

    Weights p_i ~ lognormal(0, tau) are drawn per dataset; the adequacy
    test is the likelihood ratio against the sampling-bias family.
    """
    scn = dataclasses.replace(scn, config=_resolved(scn.config))
    seed = scn.config.seed
    outs = _map(_sampling_bias_dataset, [(scn, seed, d) for d in range(scn.n_datasets)], workers)
    return StudyReport("sampling-bias", to_jsonable(scn), seed, 1.0, outs)


def llr_statistics(scn: SamplingBiasScenario, forced_size: int, n_reps: int = 200, dataset: int = 0) -> np.ndarray:
    """LR adequacy statistics of ``n_reps`` resamples of size ``forced_size`` from one dataset."""
    cfg = _resolved(scn.config)
    ds_seed = child_seed(cfg.seed, dataset)
    sampler = substream(ds_seed, 0)
    p = sampling_bias_weights(scn, sampler)
    alt = scn.alt_family
    x = biased_normal_sample(scn.n_points, 1.0, p, alt.boundaries, sampler)
    null = NormalKnownMean(0.0)
    stats = []
    for r in range(n_reps):
        y = resample(x, forced_size, substream(ds_seed, 3, r), scn.mode)
        try:
            stats.append(lr_adequacy_test(y, null, alt, cfg.adequacy_alpha).statistic)
        except DATASET_FAILURES:
            continue
    return np.sort(np.array(stats))


def emit_llr_qq(scn: SamplingBiasScenario, forced_size: int, n_reps: int = 200, dataset: int = 0) -> str:
    """QQ data: sorted LR statistics against chi-square(J-1) plotting positions.

    The final row marks the adequacy critical value on both axes.
    """
    stats = llr_statistics(scn, forced_size, n_reps, dataset)
    df = scn.J - 1
    R = len(stats)
    rows = ["empirical\ttheoretical"]
    for i, s in enumerate(stats):
        rows.append(f"{float(s)!r}\t{chi2_quantile((i + 0.5) / R, df)!r}")
    crit = chi2_quantile(1.0 - scn.config.adequacy_alpha, df)
    rows.append(f"# critical\t{crit!r}")
    return "\n".join(rows) + "\n"
