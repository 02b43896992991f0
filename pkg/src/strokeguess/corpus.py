"""Paired stroke/guess corpus: parsing, cleanup, augmentation, splits and features."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

CORPUS_FIELDS = ("id", "category", "subject", "strokes", "guesses")


class CorpusError(ValueError):
    """Raised for malformed corpus files or records."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Stroke:
    """One pen stroke as an ordered (P, 2) array of [0, 1] canvas coordinates."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise CorpusError("stroke needs at least one (x, y) point")
        if not np.isfinite(pts).all():
            raise CorpusError("stroke coordinates must be finite")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise CorpusError("stroke coordinates must lie in [0, 1]")
        self.points = pts


@dataclass(eq=False)
class StrokeSequence:
    """Ordered strokes of one sketch; prefixes strokes[:t] are the visual inputs."""

    sketch_id: str
    category: str
    strokes: list[Stroke]

    def __post_init__(self):
        if not self.strokes:
            raise CorpusError("a sketch needs at least one stroke")
        if not self.category or self.category != self.category.lower():
            raise CorpusError("category must be non-empty lowercase")

    def __len__(self):
        return len(self.strokes)


@dataclass(eq=False)
class GuessSequence:
    """Per-stroke guess words for one sketch; "" means the subject had no guess."""

    sketch_id: str
    subject_id: str
    guesses: list[str]

    def __len__(self):
        return len(self.guesses)


@dataclass(eq=False)
class Corpus:
    """Paired (StrokeSequence, GuessSequence) records plus the category set."""

    records: list[tuple[StrokeSequence, GuessSequence]]
    categories: set[str] = field(default_factory=set)
    skipped: int = 0  # malformed lines dropped by a lenient parse

    def __post_init__(self):
        for sseq, gseq in self.records:
            if sseq.sketch_id != gseq.sketch_id:
                raise CorpusError(f"sketch id mismatch: {sseq.sketch_id!r} vs {gseq.sketch_id!r}")
            if len(sseq) != len(gseq):
                raise CorpusError(f"length mismatch for {sseq.sketch_id!r}: "
                                  f"{len(sseq)} strokes vs {len(gseq)} guesses")
        if not self.categories:
            self.categories = {sseq.category for sseq, _ in self.records}

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class FeatureConfig:
    """Raster-occupancy feature extractor settings."""

    grid_side: int = 16
    dilation_radius: int = 1
    direction_bins: int = 8

    def __post_init__(self):
        if self.grid_side < 1 or self.direction_bins < 1 or self.dilation_radius < 0:
            raise ValueError("invalid feature configuration")

    @property
    def feature_dim(self) -> int:
        return self.grid_side ** 2 + self.direction_bins


# ---------------------------------------------------------------------------
# corpus file format (one JSON object per line)
# ---------------------------------------------------------------------------


def _normalize_points(all_points: list[np.ndarray]) -> list[np.ndarray]:
    """Fit out-of-range coordinates into [0, 1]^2, preserving aspect ratio."""
    stacked = np.concatenate(all_points, axis=0)
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)
    if lo.min() >= 0.0 and hi.max() <= 1.0:
        return all_points
    span = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    scale = 1.0 / span if span > 0 else 1.0
    return [(pts - lo) * scale for pts in all_points]


def _record_from_obj(obj: dict) -> tuple[StrokeSequence, GuessSequence]:
    for key in CORPUS_FIELDS:
        if key not in obj:
            raise CorpusError(f"missing field {key!r}")
    raw_strokes = obj["strokes"]
    raw_guesses = obj["guesses"]
    if not isinstance(raw_strokes, list) or not raw_strokes:
        raise CorpusError("strokes must be a non-empty array")
    if not isinstance(raw_guesses, list):
        raise CorpusError("guesses must be an array")
    if len(raw_strokes) != len(raw_guesses):
        raise CorpusError("length mismatch between strokes and guesses")
    points = [np.asarray(s, dtype=np.float64).reshape(-1, 2) for s in raw_strokes]
    if any(p.shape[0] < 1 for p in points):
        raise CorpusError("stroke needs at least one (x, y) point")
    if not all(np.isfinite(p).all() for p in points):
        raise CorpusError("stroke coordinates must be finite")
    points = _normalize_points(points)
    sseq = StrokeSequence(
        sketch_id=str(obj["id"]),
        category=str(obj["category"]).strip().lower(),
        strokes=[Stroke(p) for p in points],
    )
    gseq = GuessSequence(
        sketch_id=str(obj["id"]),
        subject_id=str(obj["subject"]),
        guesses=[str(g) for g in raw_guesses],
    )
    return sseq, gseq


def parse_corpus(path, strict: bool = False) -> Corpus:
    """Read a corpus file (one JSON record per line).

    In strict mode any malformed line raises CorpusError; otherwise malformed
    lines are skipped and counted in Corpus.skipped.
    """
    records = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise CorpusError("record is not an object")
                records.append(_record_from_obj(obj))
            except (json.JSONDecodeError, CorpusError, TypeError) as exc:
                if strict:
                    raise CorpusError(f"{path}:{lineno}: {exc}") from exc
                skipped += 1
    return Corpus(records=records, skipped=skipped)


def record_to_json(sseq: StrokeSequence, gseq: GuessSequence) -> str:
    """Serialize one record to the single-line corpus format."""
    obj = {
        "id": sseq.sketch_id,
        "category": sseq.category,
        "subject": gseq.subject_id,
        "strokes": [[[float(x), float(y)] for x, y in st.points] for st in sseq.strokes],
        "guesses": list(gseq.guesses),
    }
    return json.dumps(obj, separators=(",", ":"))


def write_corpus(path, corpus: Corpus) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sseq, gseq in corpus.records:
            fh.write(record_to_json(sseq, gseq) + "\n")


# ---------------------------------------------------------------------------
# guess-word cleanup
# ---------------------------------------------------------------------------


def levenshtein(a: str, b: str) -> int:
    """Plain edit distance; the spell corrector only needs small words."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def spell_correct(word: str, dictionary, max_distance: int = 2) -> str:
    """Replace a word by its closest dictionary entry.

    Exact members pass through; otherwise the entry with minimal edit distance
    wins, ties broken lexicographically. Nothing within max_distance leaves
    the word unchanged.
    """
    if not dictionary:
        raise ValueError("empty spell dictionary")
    if word in dictionary:
        return word
    best_word = word
    best_dist = max_distance + 1
    for cand in dictionary:
        if abs(len(cand) - len(word)) > max_distance:
            continue
        d = levenshtein(word, cand)
        if d < best_dist or (d == best_dist and cand < best_word):
            best_dist = d
            best_word = cand
    return best_word if best_dist <= max_distance else word


def extract_nouns(phrase: str, pos_tags: dict[str, str]) -> str:
    """Keep the noun tokens of a phrase, in order.

    Tokens missing from the tag dictionary are kept as potential nouns so
    open-vocabulary guesses survive. If nothing qualifies the phrase is
    returned unchanged.
    """
    tokens = phrase.split()
    nouns = [t for t in tokens if pos_tags.get(t, "NOUN") == "NOUN"]
    return " ".join(nouns) if nouns else phrase


def preprocess_guess_sequence(gseq: GuessSequence, lexicon) -> GuessSequence | None:
    """Clean one guess sequence; None signals the sequence should be dropped.

    Steps: lowercase folding, per-token spell correction, noun extraction,
    then forward propagation of the most recent guess. A sequence with no
    guesses at all yields the removal verdict (None).
    """
    cleaned = []
    for raw in gseq.guesses:
        word = raw.strip().lower()
        if word:
            word = " ".join(spell_correct(t, lexicon.spell_words) for t in word.split())
            word = extract_nouns(word, lexicon.pos_tags)
        cleaned.append(word)
    if not any(cleaned):
        return None
    out = []
    last = ""
    for word in cleaned:
        if word:
            last = word
        out.append(last)
    return replace(gseq, guesses=out)


def preprocess_corpus(corpus: Corpus, lexicon) -> tuple[Corpus, int]:
    """Clean every record; returns the kept corpus and the removal count."""
    kept = []
    removed = 0
    for sseq, gseq in corpus.records:
        cleaned = preprocess_guess_sequence(gseq, lexicon)
        if cleaned is None:
            removed += 1
        else:
            kept.append((sseq, cleaned))
    return Corpus(records=kept), removed


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


def augment_guesses(gseq: GuessSequence, lexicon) -> list[GuessSequence]:
    """Enumerate guess-level variants (plural forms, registered synonyms).

    Each variant applies one substitution scheme uniformly across the
    sequence; the original sequence is always first.
    """
    variants = [gseq]
    seen = {tuple(gseq.guesses)}

    def add(guesses):
        key = tuple(guesses)
        if key not in seen:
            seen.add(key)
            variants.append(replace(gseq, guesses=list(guesses)))

    plural = [lexicon.plural.get(w, w) if w else "" for w in gseq.guesses]
    add(plural)
    distinct = sorted({w for w in gseq.guesses if w})
    for word in distinct:
        for syn in sorted(lexicon.synonyms_of(word) - {word}):
            add([syn if w == word else w for w in gseq.guesses])
    return variants


@dataclass(frozen=True)
class AugmentScheme:
    """Affine stroke transform: optional vertical flip plus per-axis scaling.

    Scale factors are fractional deltas (0.07 grows the sketch by 7%) applied
    about the canvas center.
    """

    flip_vertical: bool = False
    scale_x: float = 0.0
    scale_y: float = 0.0


def paper_augment_grid(scales=(-0.07, -0.03, 0.03, 0.07)) -> list[AugmentScheme]:
    """Default augmentation grid: vertical flip plus uniform scalings."""
    schemes = [AugmentScheme(flip_vertical=True)]
    schemes += [AugmentScheme(scale_x=s, scale_y=s) for s in scales]
    return schemes


def augment_strokes(sseq: StrokeSequence, scheme: AugmentScheme) -> StrokeSequence:
    """Apply the affine map to every point, clamping back into [0, 1]^2."""
    out = []
    for stroke in sseq.strokes:
        pts = stroke.points.copy()
        pts[:, 0] = 0.5 + (1.0 + scheme.scale_x) * (pts[:, 0] - 0.5)
        pts[:, 1] = 0.5 + (1.0 + scheme.scale_y) * (pts[:, 1] - 0.5)
        if scheme.flip_vertical:
            pts[:, 1] = 1.0 - pts[:, 1]
        out.append(Stroke(np.clip(pts, 0.0, 1.0)))
    return replace(sseq, strokes=out)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def split_corpus(corpus: Corpus, ratios=(0.60, 0.25, 0.15), seed: int = 0):
    """Deterministic train/val/test partition.

    Validation and test take floor(ratio * n) records each; train receives
    the rest, which absorbs the rounding remainder.
    """
    if not corpus.records:
        raise CorpusError("cannot split an empty corpus")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    n = len(corpus.records)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(ratios[1] * n)
    n_test = int(ratios[2] * n)
    n_train = n - n_val - n_test
    picks = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple(Corpus(records=[corpus.records[i] for i in sorted(part)]) for part in picks)


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def _dilate(grid: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a (2r+1)^2 square structuring element."""
    if radius <= 0:
        return grid
    side = grid.shape[0]
    padded = np.pad(grid, radius)
    out = np.zeros_like(grid)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            np.maximum(out, padded[dy:dy + side, dx:dx + side], out=out)
    return out


def _cell(v: float, side: int) -> int:
    return min(side - 1, int(v * side))


def _mark_segment(grid: np.ndarray, p: np.ndarray, q: np.ndarray, side: int) -> None:
    r0, c0 = _cell(p[1], side), _cell(p[0], side)
    r1, c1 = _cell(q[1], side), _cell(q[0], side)
    steps = max(abs(r1 - r0), abs(c1 - c0)) + 1
    for rr, cc in zip(np.linspace(r0, r1, steps), np.linspace(c0, c1, steps)):
        grid[int(round(rr)), int(round(cc))] = 1.0


def _direction_bin(dx: float, dy: float, bins: int) -> int:
    ang = np.arctan2(dy, dx) % (2.0 * np.pi)
    return int(ang / (2.0 * np.pi) * bins) % bins


def extract_features(prefix, cfg: FeatureConfig) -> np.ndarray:
    """Fixed-dimension features for a cumulative stroke prefix.

    Occupancy grid (grid_side^2, dilated) followed by a normalized histogram
    of segment directions. An empty prefix maps to the zero vector.
    """
    side = cfg.grid_side
    grid = np.zeros((side, side), dtype=np.float64)
    hist = np.zeros(cfg.direction_bins, dtype=np.float64)
    n_segments = 0
    for stroke in prefix:
        pts = stroke.points
        if pts.shape[0] == 1:
            grid[_cell(pts[0, 1], side), _cell(pts[0, 0], side)] = 1.0
            continue
        for a, b in zip(pts[:-1], pts[1:]):
            _mark_segment(grid, a, b, side)
            dx, dy = float(b[0] - a[0]), float(b[1] - a[1])
            if dx != 0.0 or dy != 0.0:
                hist[_direction_bin(dx, dy, cfg.direction_bins)] += 1.0
                n_segments += 1
    grid = _dilate(grid, cfg.dilation_radius)
    if n_segments:
        hist /= n_segments
    return np.concatenate([grid.ravel(), hist])


class RasterFeatureExtractor:
    """Default feature source: raster occupancy + direction histogram."""

    def __init__(self, cfg: FeatureConfig | None = None):
        self.cfg = cfg or FeatureConfig()

    @property
    def feature_dim(self) -> int:
        return self.cfg.feature_dim

    def prefix_features(self, strokes) -> np.ndarray:
        return extract_features(strokes, self.cfg)

    def sequence_features(self, sseq: StrokeSequence) -> np.ndarray:
        rows = [extract_features(sseq.strokes[:t], self.cfg)
                for t in range(1, len(sseq) + 1)]
        return np.stack(rows)


class FileFeatureExtractor:
    """Feature source backed by precomputed per-step vectors from file."""

    def __init__(self, table: dict[str, np.ndarray]):
        if not table:
            raise ValueError("empty feature table")
        dims = {v.shape[1] for v in table.values()}
        if len(dims) != 1:
            raise ValueError("inconsistent feature dimensions")
        self.table = table
        self.feature_dim = dims.pop()

    def sequence_features(self, sseq: StrokeSequence) -> np.ndarray:
        feats = self.table.get(sseq.sketch_id)
        if feats is None:
            raise KeyError(f"no features for sketch {sseq.sketch_id!r}")
        if feats.shape[0] != len(sseq):
            raise ValueError(f"feature rows ({feats.shape[0]}) != strokes ({len(sseq)}) "
                             f"for {sseq.sketch_id!r}")
        return feats


def load_feature_file(path) -> dict[str, np.ndarray]:
    """Read per-step feature blocks: header "<id> <N> <D>", N rows of D floats."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if len(head) != 3:
            raise ValueError(f"{path}: bad feature header {lines[i]!r}")
        sketch_id, n, d = head[0], int(head[1]), int(head[2])
        rows = []
        for j in range(n):
            values = np.fromstring(lines[i + 1 + j], dtype=np.float64, sep=" ")
            if values.shape[0] != d:
                raise ValueError(f"{path}: row {j} of {sketch_id!r} has {values.shape[0]} values, "
                                 f"expected {d}")
            rows.append(values)
        table[sketch_id] = np.stack(rows)
        i += 1 + n
    return table


def write_feature_file(path, table: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sketch_id, feats in table.items():
            fh.write(f"{sketch_id} {feats.shape[0]} {feats.shape[1]}\n")
            for row in feats:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write("\n")
