"""Correlation and significance-test primitives used by the studies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

from ..ioutil import DataError


@dataclass(frozen=True)
class CorrelationReport:
    method: str  # "pearson" or "spearman"
    coefficient: float
    n: int
    p_value: float | None
    slope: float | None = None

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.coefficient <= 1.0 + 1e-12:
            raise DataError("correlation coefficient out of [-1, 1]")

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "coefficient": self.coefficient,
            "n": self.n,
            "p_value": self.p_value,
        }
        if self.slope is not None:
            out["slope"] = self.slope
        return out


@dataclass(frozen=True)
class CostReport:
    """Mean SCH change, in seconds, of swapping token A for token B."""

    token_a: str
    token_b: str
    mean_delta_seconds: float
    p_value: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise DataError("p-value out of [0, 1]")

    def to_dict(self) -> dict:
        return {
            "token_a": self.token_a,
            "token_b": self.token_b,
            "mean_delta_seconds": self.mean_delta_seconds,
            "p_value": self.p_value,
            "n": self.n,
        }


def _clean_xy(x, y, min_n: int):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("inputs must be equal-length vectors")
    if x.shape[0] < min_n:
        raise DataError(f"need at least {min_n} observations")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise DataError("correlation undefined for a constant vector")
    return x, y


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    """Product-moment coefficient plus the least-squares slope of y on x."""
    x, y = _clean_xy(x, y, 2)
    n = x.shape[0]
    fit = sps.linregress(x, y)
    p = float(fit.pvalue) if n >= 3 else None
    return CorrelationReport(
        method="pearson",
        coefficient=float(fit.rvalue),
        n=n,
        p_value=p,
        slope=float(fit.slope),
    )


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    """Pearson correlation of mid-ranks (ties get average ranks)."""
    x, y = _clean_xy(x, y, 2)
    n = x.shape[0]
    rho, p = sps.spearmanr(x, y)
    if not np.isfinite(rho):
        raise DataError("spearman correlation undefined for this input")
    return CorrelationReport(
        method="spearman",
        coefficient=float(rho),
        n=n,
        p_value=float(p) if n >= 3 else None,
    )


def binomial_sign_test(successes: int, n: int, p0: float = 0.5) -> float:
    """Exact two-tailed binomial test: the smaller tail mass doubled,
    capped at 1."""
    if n <= 0:
        raise DataError("binomial test needs n >= 1")
    if not 0 <= successes <= n:
        raise DataError("successes must lie in [0, n]")
    if not 0.0 < p0 < 1.0:
        raise DataError("p0 must be in (0, 1)")
    lower = float(sps.binom.cdf(successes, n, p0))
    upper = float(sps.binom.sf(successes - 1, n, p0))
    return min(1.0, 2.0 * min(lower, upper))


def flag_rule_false_positive_rate(
    n_parts: int = 10, flag_set: Iterable[int] = (0, 1, 9, 10), p: float = 0.5
) -> float:
    """Probability that a Binomial(n_parts, p) statistic lands in the
    flag set; the analytic false-positive rate of the flagging rule."""
    flags = sorted(set(int(k) for k in flag_set))
    if any(k < 0 or k > n_parts for k in flags):
        raise DataError("flag statistic outside [0, n_parts]")
    return float(sum(sps.binom.pmf(k, n_parts, p) for k in flags))


def bootstrap_mean_difference(
    deltas_ab: Sequence[float],
    deltas_ba: Sequence[float],
    resamples: int = 100000,
    seed: int = 0,
) -> float:
    """Two-tailed bootstrap p-value for mean(deltas_ab) - mean(deltas_ba)
    differing from 0, with add-one smoothing so p is never exactly 0."""
    a = np.asarray(deltas_ab, dtype=np.float64)
    b = np.asarray(deltas_ba, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise DataError("both delta samples must be nonempty")
    observed = a.mean() - b.mean()
    rng = np.random.default_rng(seed)
    crossings = 0
    # chunked so index matrices stay small at 100000 resamples
    chunk = max(1, int(2_000_000 / max(a.size, b.size)))
    done = 0
    while done < resamples:
        m = min(chunk, resamples - done)
        mean_a = a[rng.integers(0, a.size, size=(m, a.size))].mean(axis=1)
        mean_b = b[rng.integers(0, b.size, size=(m, b.size))].mean(axis=1)
        diff = mean_a - mean_b
        if observed >= 0:
            crossings += int(np.count_nonzero(diff <= 0.0))
        else:
            crossings += int(np.count_nonzero(diff >= 0.0))
        done += m
    return min(1.0, 2.0 * (crossings + 1) / (resamples + 1))


def wilcoxon_signed_rank(deltas: Sequence[float]) -> float:
    """Paired signed-rank test p-value; zeros dropped, average ranks,
    normal approximation."""
    d = np.asarray(deltas, dtype=np.float64)
    nonzero = d[d != 0.0]
    if d.size and nonzero.size == 0:
        raise DataError("all paired deltas are zero")
    if nonzero.size < 6:
        raise DataError("need at least 6 nonzero deltas")
    res = sps.wilcoxon(
        nonzero, zero_method="wilcox", correction=False, method="approx",
        alternative="two-sided",
    )
    return float(res.pvalue)
