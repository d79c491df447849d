"""Reading and writing the plain-text input formats."""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .adequacy import GroupedData


class InputError(ValueError):
    """Input text could not be parsed."""


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def _float(tok: str) -> float:
    t = tok.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(t)


def parse_values(text: str) -> np.ndarray:
    """One real per line; a non-numeric first line is taken as a header."""
    out = []
    for i, (lineno, line) in enumerate(_lines(text)):
        try:
            v = _float(line.split(",")[0])
        except ValueError:
            if i == 0:
                continue
            raise InputError(f"line {lineno}: not a number: {line!r}") from None
        if not math.isfinite(v):
            raise InputError(f"line {lineno}: value must be finite")
        out.append(v)
    if not out:
        raise InputError("no values found")
    return np.array(out)


def parse_grouped_rows(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``lower,upper,count`` on contiguous classes; returns (boundaries, weights).

    Weights may be fractional (percentile tables); see :func:`parse_grouped`.
    """
    lowers, uppers, weights = [], [], []
    for i, (lineno, line) in enumerate(_lines(text)):
        parts = [p for p in line.replace("\t", ",").split(",")]
        if len(parts) != 3:
            raise InputError(f"line {lineno}: expected lower,upper,count")
        try:
            lo, hi, w = (_float(p) for p in parts)
        except ValueError:
            if i == 0:
                continue
            raise InputError(f"line {lineno}: bad number in {line!r}") from None
        lowers.append(lo)
        uppers.append(hi)
        weights.append(w)
    if not lowers:
        raise InputError("no classes found")
    for j in range(1, len(lowers)):
        if lowers[j] != uppers[j - 1]:
            raise InputError(f"class {j + 1} starts at {lowers[j]} but class {j} ends at {uppers[j - 1]}")
    w = np.array(weights)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError("counts must be finite and nonnegative")
    return np.array([lowers[0], *uppers]), w


def scale_to_counts(weights, sample_size: int) -> np.ndarray:
    """Integer counts summing to ``sample_size`` in proportion to ``weights`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    raw = w / w.sum() * sample_size
    counts = np.floor(raw).astype(np.int64)
    short = sample_size - int(counts.sum())
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def parse_grouped(text: str, sample_size: int | None = None) -> GroupedData:
    """Grouped counts.  Fractional weights need ``sample_size`` to become counts."""
    b, w = parse_grouped_rows(text)
    if sample_size is not None:
        if sample_size < 1:
            raise InputError("sample size must be positive")
        w = scale_to_counts(w, sample_size)
    elif np.any(w != np.round(w)):
        raise InputError("class weights are not integer counts; give the sample size explicitly")
    try:
        return GroupedData(b, w.astype(np.int64))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def format_grouped(data: GroupedData) -> str:
    rows = ["lower,upper,count"]
    b = data.boundaries
    for i, c in enumerate(data.counts):
        rows.append(f"{_fmt(b[i])},{_fmt(b[i + 1])},{int(c)}")
    return "\n".join(rows) + "\n"


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def returns_from_prices(prices, lag: int = 1) -> np.ndarray:
    """Gain ratios ``price[t] / price[t - lag]`` over non-overlapping windows."""
    p = np.asarray(prices, dtype=float)
    if lag < 1:
        raise InputError("lag must be at least 1")
    if np.any(p <= 0):
        raise InputError("prices must be positive")
    q = p[::lag]
    if len(q) < 2:
        raise InputError("need at least two prices per lag window")
    return q[1:] / q[:-1]


def truncate(x: np.ndarray, lower_limit: float | None) -> np.ndarray:
    if lower_limit is None:
        return x
    kept = x[x >= lower_limit]
    if len(kept) == 0:
        raise InputError(f"no values at or above the lower limit {lower_limit}")
    return kept


def atomic_write_files(out_dir, files: dict[str, str]) -> list[Path]:
    """Write every file via temp file and rename, after all content is ready."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            staged.append((tmp, out / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)
    return [d for _, d in staged]


def atomic_write(path, text: str) -> Path:
    p = Path(path)
    return atomic_write_files(p.parent if str(p.parent) else ".", {p.name: text})[0]
