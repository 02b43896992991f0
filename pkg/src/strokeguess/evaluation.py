"""Sequence-level metrics: top-k correctness, transition localization windows
and the guess-origin rating report."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lexicon import NO_GUESS, EmbeddingTable, knn
from .stats import RatingRecord, likert_mode, wilcoxon_signed_rank

MODES = ("GUESS_PORTION", "FULL")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings: retrieval depths, window half-widths, scoring mode."""

    k_values: tuple[int, ...] = (1, 3, 5)
    deltas: tuple[int, ...] = (0, 1, 2)
    mode: str = "GUESS_PORTION"
    include_no_guess_token: bool = True  # let "#" compete in retrieval
    step_weighted: bool = False          # diagnostic: average over steps, not sequences

    def __post_init__(self):
        if any(k < 1 for k in self.k_values) or not self.k_values:
            raise ValueError("k values must be positive")
        if any(d < 0 for d in self.deltas):
            raise ValueError("deltas must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_window_widths(cls, widths, **kwargs) -> "EvalConfig":
        """Alternate parameterization: odd window widths 2*delta + 1."""
        deltas = []
        for w in widths:
            if w < 1 or w % 2 == 0:
                raise ValueError(f"window width {w} must be odd and positive")
            deltas.append((w - 1) // 2)
        return cls(deltas=tuple(deltas), **kwargs)


def correct_match(pred: np.ndarray, truth_word: str, k: int,
                  table: EmbeddingTable, exclude=()) -> bool:
    """True when the truth word appears among the k nearest embeddings."""
    if truth_word not in table:
        return False
    return truth_word in {w for w, _ in knn(table, pred, k, exclude=exclude)}


def _step_hits(preds, truths, table: EmbeddingTable, cfg: EvalConfig):
    """Per-step hit flags at every configured k for one sequence."""
    if len(preds) != len(truths.guesses):
        raise ValueError(f"got {len(preds)} predictions for {len(truths.guesses)} steps")
    exclude = () if cfg.include_no_guess_token else (NO_GUESS,)
    k_max = max(cfg.k_values)
    hits = {k: [] for k in cfg.k_values}
    scored = []
    for pred, truth in zip(preds, truths.guesses):
        if cfg.mode == "GUESS_PORTION" and not truth:
            continue
        target = truth if truth else NO_GUESS
        if target in table:
            ranked = [w for w, _ in knn(table, pred, min(k_max, len(table) - len(exclude)),
                                        exclude=exclude)]
            position = ranked.index(target) + 1 if target in ranked else None
        else:
            position = None  # out-of-vocabulary truth can never match
        scored.append(truth)
        for k in cfg.k_values:
            hits[k].append(position is not None and position <= k)
    return hits


def sequence_accuracy(preds, truths, table: EmbeddingTable,
                      cfg: EvalConfig = EvalConfig()) -> dict[int, float]:
    """Fraction of scored steps whose top-k neighbors contain the truth.

    GUESS_PORTION scores only steps with a non-empty ground-truth guess;
    FULL scores every step, treating the no-guess token as the target at
    empty steps.
    """
    hits = _step_hits(preds, truths, table, cfg)
    out = {}
    for k in cfg.k_values:
        flags = hits[k]
        out[k] = sum(flags) / len(flags) if flags else float("nan")
    return out


def mean_sequence_accuracy(pairs, table: EmbeddingTable,
                           cfg: EvalConfig = EvalConfig()) -> dict[int, float]:
    """Unweighted mean of per-sequence accuracies (optionally step-weighted)."""
    per_k_fractions = {k: [] for k in cfg.k_values}
    per_k_flags = {k: [] for k in cfg.k_values}
    for preds, truths in pairs:
        hits = _step_hits(preds, truths, table, cfg)
        for k in cfg.k_values:
            if hits[k]:
                per_k_fractions[k].append(sum(hits[k]) / len(hits[k]))
                per_k_flags[k].extend(hits[k])
    out = {}
    for k in cfg.k_values:
        pool = per_k_flags[k] if cfg.step_weighted else per_k_fractions[k]
        if not pool:
            raise ValueError("no scoreable steps in any sequence")
        out[k] = float(np.mean(pool))
    return out


def localization_accuracy(preds, truths, delta: int) -> float:
    """Fraction of transition predictions within +-delta of the truth."""
    preds = list(preds)
    truths = list(truths)
    if len(preds) != len(truths):
        raise ValueError("prediction/truth lists differ in length")
    if not preds:
        raise ValueError("no localization pairs")
    hits = sum(1 for p, g in zip(preds, truths) if abs(p - g) <= delta)
    return hits / len(preds)


class TuringReport(NamedTuple):
    modes_human: list[int]
    modes_model: list[int]
    histogram_human: dict[int, int]   # raw rating counts
    histogram_model: dict[int, int]
    w: float
    z: float
    p: float


def turing_report(records) -> TuringReport:
    """Aggregate origin-judgment ratings for paired human/model sequences.

    Each element of records is a (human RatingRecord, model RatingRecord)
    pair for one sequence. Per-sequence rating modes feed a two-sided
    Wilcoxon signed-rank test.
    """
    modes_h, modes_m = [], []
    hist_h, hist_m = Counter(), Counter()
    for human, model in records:
        if not isinstance(human, RatingRecord) or not isinstance(model, RatingRecord):
            raise TypeError("records must pair two RatingRecord values")
        if human.guesser_type != "human" or model.guesser_type != "model":
            raise ValueError("each pair must be (human record, model record)")
        modes_h.append(likert_mode(human.ratings))
        modes_m.append(likert_mode(model.ratings))
        hist_h.update(human.ratings)
        hist_m.update(model.ratings)
    result = wilcoxon_signed_rank(zip(modes_h, modes_m))
    full = {r: 0 for r in range(-2, 3)}
    return TuringReport(
        modes_human=modes_h,
        modes_model=modes_m,
        histogram_human={**full, **hist_h},
        histogram_model={**full, **hist_m},
        w=result.w, z=result.z, p=result.p,
    )


def metric_report_lines(metrics: dict, mode: str) -> list[str]:
    """Machine-readable metric lines: metric<TAB>mode<TAB>k_or_delta<TAB>value."""
    lines = []
    for name, per_key in metrics.items():
        for key, value in per_key.items():
            lines.append(f"{name}\t{mode}\t{key}\t{value:.6f}")
    return lines


def metric_report_table(metrics: dict, mode: str) -> str:
    """Small human-readable table of accuracy/localization results."""
    lines = [f"mode: {mode}"]
    for name, per_key in metrics.items():
        keys = "  ".join(f"{k}" for k in per_key)
        vals = "  ".join(f"{v:.4f}" for v in per_key.values())
        lines.append(f"{name:>14}  @ {keys}")
        lines.append(f"{'':>14}    {vals}")
    return "\n".join(lines) + "\n"
