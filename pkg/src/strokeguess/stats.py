"""Statistical procedures: effect sizes, score intervals, signed-rank tests,
Likert aggregation and guess-sequence analytics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class DegenerateSamplesError(ValueError):
    """Raised when a statistic is undefined for the given samples."""


# ---------------------------------------------------------------------------
# effect size
# ---------------------------------------------------------------------------


@dataclass
class CategoryAccuracy:
    """Per-category 0/1 outcomes with their population mean and variance."""

    category: str
    samples: list[int]
    mean: float = field(init=False)
    variance: float = field(init=False)

    def __post_init__(self):
        if not self.samples:
            raise DegenerateSamplesError("no samples")
        if any(s not in (0, 1) for s in self.samples):
            raise ValueError("samples must be 0/1 outcomes")
        arr = np.asarray(self.samples, dtype=np.float64)
        self.mean = float(arr.mean())
        self.variance = float(arr.var())


def cohens_d(m: CategoryAccuracy, h: CategoryAccuracy) -> float:
    """Standardized mean difference (mean_m - mean_h) / pooled std."""
    s = math.sqrt((m.variance + h.variance) / 2.0)
    if s == 0.0:
        raise DegenerateSamplesError("pooled standard deviation is zero; effect size undefined")
    return (m.mean - h.mean) / s


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clamped to [0, 1]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    if z < 0:
        raise ValueError("z must be non-negative")
    p_hat = successes / n
    denom = 1.0 + z * z / n
    center = (p_hat + z * z / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank
# ---------------------------------------------------------------------------


class WilcoxonResult(NamedTuple):
    w: float         # min(W+, W-)
    z: float         # normal approximation statistic (non-negative)
    p: float         # two-sided p-value
    n: int           # effective sample size after dropping zero differences
    exact: bool      # True when p comes from full sign enumeration


def _average_ranks(values: list[float]) -> list[float]:
    """Ranks of values (1-based), tied values sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j + 2) / 2.0  # mean of 1-based positions i+1 .. j+1
        for idx in order[i:j + 1]:
            ranks[idx] = avg
        i = j + 1
    return ranks


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _exact_p(ranks: list[float], w_obs: float) -> float:
    """P(min(W+, W-) <= w_obs) by enumerating all sign assignments."""
    n = len(ranks)
    total = sum(ranks)
    hits = 0
    for mask in range(1 << n):
        w_plus = 0.0
        for i in range(n):
            if mask >> i & 1:
                w_plus += ranks[i]
        # ranks are multiples of 0.5, so these float sums are exact
        if min(w_plus, total - w_plus) <= w_obs:
            hits += 1
    return hits / (1 << n)


def wilcoxon_signed_rank(pairs, method: str = "auto",
                         exact_threshold: int = 12) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and ties receive average ranks. Small
    samples (n <= exact_threshold, or method="exact") are scored by full
    2^n sign enumeration; otherwise a tie-corrected normal approximation
    with continuity correction is used. All differences zero degenerates
    to p = 1 by convention.
    """
    if method not in ("auto", "exact", "approx"):
        raise ValueError(f"unknown method {method!r}")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one pair")
    diffs = [float(x) - float(y) for x, y in pairs]
    nz = [d for d in diffs if d != 0.0]
    n = len(nz)
    if n == 0:
        return WilcoxonResult(w=0.0, z=0.0, p=1.0, n=0, exact=True)

    ranks = _average_ranks([abs(d) for d in nz])
    w_plus = sum(r for r, d in zip(ranks, nz) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, nz) if d < 0)
    w = min(w_plus, w_minus)

    mean = n * (n + 1) / 4.0
    tie_counts = Counter(abs(d) for d in nz).values()
    var = n * (n + 1) * (2 * n + 1) / 24.0 - sum(t ** 3 - t for t in tie_counts) / 48.0
    delta = max(0.0, mean - w - 0.5)  # continuity correction toward the mean
    z = delta / math.sqrt(var)
    p_approx = min(1.0, 2.0 * _normal_sf(z))

    use_exact = method == "exact" or (method == "auto" and n <= exact_threshold)
    if use_exact:
        return WilcoxonResult(w=w, z=z, p=_exact_p(ranks, w), n=n, exact=True)
    return WilcoxonResult(w=w, z=z, p=p_approx, n=n, exact=False)


# ---------------------------------------------------------------------------
# Likert ratings
# ---------------------------------------------------------------------------


RATING_RANGE = (-2, 2)


@dataclass
class RatingRecord:
    """Judge ratings for one sequence produced by one guesser type."""

    sequence_id: str
    guesser_type: str  # "human" or "model"
    ratings: list[int]

    def __post_init__(self):
        if self.guesser_type not in ("human", "model"):
            raise ValueError(f"unknown guesser type {self.guesser_type!r}")
        if not self.ratings:
            raise ValueError("need at least one rating")
        if any(not RATING_RANGE[0] <= r <= RATING_RANGE[1] for r in self.ratings):
            raise ValueError("ratings must lie in [-2, 2]")


def likert_mode(ratings) -> int:
    """Most frequent rating; ties go to the value closest to 0, then smaller."""
    ratings = list(ratings)
    if not ratings:
        raise ValueError("need at least one rating")
    counts = Counter(ratings)
    best_count = max(counts.values())
    tied = [v for v, c in counts.items() if c == best_count]
    return min(tied, key=lambda v: (abs(v), v))


# ---------------------------------------------------------------------------
# guess-sequence analytics
# ---------------------------------------------------------------------------


class GuessHistogram(NamedTuple):
    one: int
    two: int
    three: int
    four_plus: int


def guess_count_histogram(corpus) -> GuessHistogram:
    """Bucket sequences by how many distinct guess words they elicited."""
    buckets = [0, 0, 0, 0]
    for _, gseq in corpus.records:
        uniques = len({g for g in gseq.guesses if g})
        if uniques == 0:
            continue  # removed by preprocessing; ignore if still present
        buckets[min(uniques, 4) - 1] += 1
    return GuessHistogram(*buckets)


class FirstGuessStats(NamedTuple):
    median: float
    deviation: float  # median absolute deviation
    count: int


def first_guess_location(gseq) -> float:
    """Normalized index of the first non-empty guess, in (0, 1]."""
    for i, g in enumerate(gseq.guesses):
        if g:
            return (i + 1) / len(gseq.guesses)
    raise DegenerateSamplesError(f"sequence {gseq.sketch_id!r} has no guesses")


def first_guess_stats(corpus) -> dict[str, FirstGuessStats]:
    """Per-category median and MAD of normalized first-guess locations."""
    locations: dict[str, list[float]] = {}
    for sseq, gseq in corpus.records:
        locations.setdefault(sseq.category, []).append(first_guess_location(gseq))
    out = {}
    for category, locs in sorted(locations.items()):
        arr = np.asarray(locs)
        med = float(np.median(arr))
        mad = float(np.median(np.abs(arr - med)))
        out[category] = FirstGuessStats(median=med, deviation=mad, count=len(locs))
    return out


def analytics_report(corpus, fmt: str = "text") -> str:
    """Corpus analytics as a text table or machine-readable metric lines."""
    hist = guess_count_histogram(corpus)
    per_cat = first_guess_stats(corpus)
    if fmt == "machine":
        lines = []
        for label, value in zip(("1", "2", "3", "4+"), hist):
            lines.append(f"guess_histogram\t{label}\t{value}")
        for category, st in per_cat.items():
            lines.append(f"first_guess_median\t{category}\t{st.median:.6f}")
            lines.append(f"first_guess_mad\t{category}\t{st.deviation:.6f}")
        return "\n".join(lines) + "\n"
    lines = ["Unique guesses per sequence:",
             f"  1: {hist.one}   2: {hist.two}   3: {hist.three}   >=4: {hist.four_plus}",
             "",
             "First-guess location by category (median / MAD / n):"]
    for category, st in sorted(per_cat.items(), key=lambda kv: kv[1].median):
        lines.append(f"  {category:<16} {st.median:.3f} / {st.deviation:.3f} / {st.count}")
    return "\n".join(lines) + "\n"
