"""Monotone estimate of the rejection curve p(n) and the adaptive trial schedule."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialRecord:
    size: int
    rejected: bool

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("trial size must be at least 1")


@dataclass
class PowerCurve:
    """Right-continuous nondecreasing step function through ``knots``.

    ``sizes`` are strictly increasing; ``p_hat[i]`` holds from ``sizes[i]``
    up to the next knot.  Below the first knot the first level applies.
    """

    sizes: np.ndarray
    p_hat: np.ndarray
    trials: list = field(default_factory=list, repr=False)

    @property
    def knots(self) -> list[tuple[int, float]]:
        return [(int(s), float(p)) for s, p in zip(self.sizes, self.p_hat)]

    def __call__(self, size) -> float:
        i = int(np.searchsorted(self.sizes, size, side="right")) - 1
        return float(self.p_hat[max(i, 0)])

    def to_tsv(self) -> str:
        rows = ["size\tp_hat"]
        rows += [f"{int(s)}\t{float(p)!r}" for s, p in zip(self.sizes, self.p_hat)]
        return "\n".join(rows) + "\n"

    def trials_tsv(self) -> str:
        rows = ["size\trejected"]
        rows += [f"{t.size}\t{int(t.rejected)}" for t in self.trials]
        return "\n".join(rows) + "\n"


def _aggregate(trials: Sequence[TrialRecord]):
    # per-size (rejections, trials), as exact integers
    agg: dict[int, list[int]] = {}
    for t in trials:
        s = agg.setdefault(int(t.size), [0, 0])
        s[0] += bool(t.rejected)
        s[1] += 1
    sizes = sorted(agg)
    return sizes, [agg[s][0] for s in sizes], [agg[s][1] for s in sizes]


def isotonic_fit(trials: Sequence[TrialRecord]) -> PowerCurve:
    """Maximum-likelihood nondecreasing fit of rejection frequency on size.

    Pool-adjacent-violators on integer counts; block levels are exact
    ratios, so the result equals the max-min formula
    ``max_{y<=x} min_{z>=x} S[y,z] / T[y,z]`` bit for bit.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("isotonic_fit needs at least one trial")
    sizes, S, T = _aggregate(trials)
    # each block: [rejections, trials, number of sizes]
    blocks: list[list[int]] = []
    for s, t in zip(S, T):
        blocks.append([s, t, 1])
        while len(blocks) > 1 and blocks[-2][0] * blocks[-1][1] > blocks[-1][0] * blocks[-2][1]:
            s2, t2, w2 = blocks.pop()
            blocks[-1][0] += s2
            blocks[-1][1] += t2
            blocks[-1][2] += w2
    levels: list[float] = []
    for s, t, w in blocks:
        levels.extend([s / t] * w)
    return PowerCurve(np.array(sizes, dtype=np.int64), np.array(levels), trials)


def max_min_estimate(trials: Sequence[TrialRecord]) -> dict[int, float]:
    """Direct O(n^2) evaluation of the max-min formula at each trial size."""
    sizes, S, T = _aggregate(trials)
    cs = np.concatenate([[0], np.cumsum(S)])
    ct = np.concatenate([[0], np.cumsum(T)])
    out = {}
    m = len(sizes)
    for x in range(m):
        best = -math.inf
        for y in range(x + 1):
            worst = math.inf
            for z in range(x, m):
                worst = min(worst, int(cs[z + 1] - cs[y]) / int(ct[z + 1] - ct[y]))
            best = max(best, worst)
        out[sizes[x]] = best
    return out


def solve_level(curve: PowerCurve, alpha_target: float) -> Optional[int]:
    """Smallest knot size with ``p_hat >= alpha_target``; None if never reached."""
    if not 0 < alpha_target < 1:
        raise ValueError("alpha_target must lie in (0, 1)")
    idx = np.nonzero(curve.p_hat >= alpha_target)[0]
    if len(idx) == 0:
        return None
    return int(curve.sizes[idx[0]])


def default_stride(N: int) -> int:
    """About 200 grid points regardless of N."""
    return max(1, N // 200)


def size_grid(N: int, stride: int) -> np.ndarray:
    if not 1 <= stride <= N:
        raise ValueError(f"stride must lie in [1, {N}]")
    grid = list(range(stride, N + 1, stride))
    if grid[-1] != N:
        grid.append(N)
    return np.array(grid, dtype=np.int64)


def schedule_budget(N: int, stride: int) -> int:
    """Upper bound on the number of trials the schedule can run."""
    phase1 = len(size_grid(N, stride))
    return phase1 + sum(10 * k * (2 * math.ceil(100 / (k * stride)) + 1) for k in range(1, 11))


@dataclass
class ScheduleResult:
    curve: PowerCurve
    adequate_size: int
    saturated: bool
    n_trials: int
    n_failed: int


class ScheduleError(RuntimeError):
    pass


def adaptive_schedule(
    runner: Callable[[int, int], Optional[bool]],
    N: int,
    alpha_target: float = 0.5,
    stride: int | None = None,
    mapper: Callable[[Callable, Iterable], Iterable] | None = None,
) -> ScheduleResult:
    """Locate the size at which the adequacy test rejects with probability ``alpha_target``.

    ``runner(size, index)`` returns True (rejected), False, or None for a
    failed trial, which is dropped.  ``index`` numbers trials in schedule
    order so the runner can seed each one independently.  ``mapper`` may
    evaluate a batch concurrently but must preserve order.

    Phase 1 runs one trial per grid size; then for k = 1..10 it runs 10k
    trials at each grid size within 100/k of the current solution,
    refitting after each round.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if stride is None:
        stride = default_stride(N)
    grid = size_grid(N, stride)
    mapper = mapper or (lambda f, xs: map(f, xs))
    trials: list[TrialRecord] = []
    counter = [0, 0]  # trials issued, failures

    def run_batch(sizes: list[int]):
        start = counter[0]
        jobs = [(int(s), start + i) for i, s in enumerate(sizes)]
        counter[0] += len(jobs)
        outcomes = list(mapper(lambda j: runner(*j), jobs))
        for (s, idx), r in zip(jobs, outcomes):
            if r is None:
                counter[1] += 1
                log.debug("trial %d at size %d failed; dropped", idx, s)
            else:
                trials.append(TrialRecord(s, bool(r)))

    def solve():
        if not trials:
            raise ScheduleError("every adequacy trial failed; cannot estimate the rejection curve")
        curve = isotonic_fit(trials)
        size = solve_level(curve, alpha_target)
        return curve, size

    run_batch(list(grid))
    curve, size = solve()
    for k in range(1, 11):
        current = N if size is None else size
        radius = 100.0 / k
        near = [int(g) for g in grid if abs(int(g) - current) <= radius]
        if not near:
            near = [int(grid[np.argmin(np.abs(grid - current))])]
        run_batch([g for g in near for _ in range(10 * k)])
        curve, size = solve()
    if counter[1]:
        log.info("%d of %d adequacy trials failed and were dropped", counter[1], counter[0])
    saturated = size is None
    return ScheduleResult(curve, N if saturated else size, saturated, counter[0], counter[1])
