"""Seeded generation of the bundled fixtures: a small lexicon, a mini corpus,
a raw/golden preprocessing pair and a separable training corpus.

Run as `python -m strokeguess.datagen [out_dir]` to regenerate everything.
All outputs are deterministic."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .corpus import Corpus, GuessSequence, Stroke, StrokeSequence, write_corpus
from .lexicon import NO_GUESS
from .neural import orthogonal_init

MINI_CATEGORIES = ("boat", "car", "cat", "dog", "house", "rainbow", "revolver", "tree")
SEPARABLE_CATEGORIES = ("cat", "house", "tree", "boat")

# ---------------------------------------------------------------------------
# lexicon files
# ---------------------------------------------------------------------------

TAXONOMY = {
    "animal": "entity", "artifact": "entity", "plant": "entity",
    "phenomenon": "entity", "substance": "entity",
    "carnivore": "animal", "bird": "animal",
    "feline": "carnivore", "canine": "carnivore",
    "cat": "feline", "kitten": "cat",
    "dog": "canine", "puppy": "dog",
    "owl": "bird",
    "vehicle": "artifact", "weapon": "artifact", "container": "artifact",
    "building": "artifact",
    "car": "vehicle", "boat": "vehicle", "automobile": "vehicle",
    "firearm": "weapon", "revolver": "firearm", "sixgun": "firearm",
    "cup": "container", "pot": "container", "mug": "container",
    "house": "building", "home": "building",
    "tree": "plant", "flower": "plant",
    "rainbow": "phenomenon", "cloud": "phenomenon", "sun": "phenomenon",
    "gold": "substance",
}

SYNSETS = [
    ("cup", "mug"),
    ("car", "automobile"),
    ("house", "home"),
    ("revolver", "sixgun"),
]

NOUNS = sorted(set(TAXONOMY) | {"entity"} | {
    "end", "giraffe", "pant", "pants", "glasses", "sail", "wheel", "roof",
    "branch", "tail", "whisker", "window",
})

OTHER_WORDS = ("a", "an", "at", "big", "blue", "fast", "is", "it", "little",
               "maybe", "my", "of", "on", "red", "small", "some", "the", "very",
               "with")

PLURAL = {
    "boat": "boats", "car": "cars", "cat": "cats", "cup": "cups",
    "dog": "dogs", "house": "houses", "pant": "pants", "tree": "trees",
}

EMBEDDED_WORDS = sorted(set(MINI_CATEGORIES) | {
    "kitten", "puppy", "owl", "cup", "mug", "pot", "gold", "flower", "cloud",
    "sun", "firearm", "weapon", "vehicle", "animal", "bird", "pants", "pant",
    "automobile", "home", "sixgun", "end", "giraffe", "sail", "wheel",
})


def build_lexicon_dir(out_dir: Path, seed: int = 5) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)

    basis = orthogonal_init(16, 16, gain=1.0, seed=seed)
    rng = np.random.default_rng(seed + 1)
    vectors = {}
    for i, cat in enumerate(MINI_CATEGORIES):
        vectors[cat] = basis[i]
    vectors[NO_GUESS] = basis[len(MINI_CATEGORIES)]
    for word in EMBEDDED_WORDS:
        if word not in vectors:
            v = rng.standard_normal(16)
            vectors[word] = v / np.linalg.norm(v)
    words = sorted(w for w in vectors if w != NO_GUESS) + [NO_GUESS]
    with open(out_dir / "embeddings.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{len(words)} 16\n")
        for word in words:
            fh.write(word + " " + " ".join(repr(float(v)) for v in vectors[word]) + "\n")

    with open(out_dir / "taxonomy.tsv", "w", encoding="utf-8") as fh:
        for child in sorted(TAXONOMY):
            fh.write(f"{child}\t{TAXONOMY[child]}\n")

    with open(out_dir / "synsets.tsv", "w", encoding="utf-8") as fh:
        for group in SYNSETS:
            fh.write("\t".join(group) + "\n")

    with open(out_dir / "pos.tsv", "w", encoding="utf-8") as fh:
        for word in NOUNS:
            fh.write(f"{word}\tNOUN\n")
        for word in OTHER_WORDS:
            fh.write(f"{word}\tOTHER\n")

    with open(out_dir / "plural.tsv", "w", encoding="utf-8") as fh:
        for singular in sorted(PLURAL):
            fh.write(f"{singular}\t{PLURAL[singular]}\n")

    spell = sorted(set(NOUNS) | set(OTHER_WORDS) | set(PLURAL.values()))
    (out_dir / "spell.txt").write_text("\n".join(spell) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# stroke shapes
# ---------------------------------------------------------------------------


def _jitter(rng, scale=0.02):
    return float(rng.uniform(-scale, scale))


def _line(rng, x0, y0, x1, y1, points=4):
    xs = np.linspace(x0 + _jitter(rng), x1 + _jitter(rng), points)
    ys = np.linspace(y0 + _jitter(rng), y1 + _jitter(rng), points)
    pts = np.clip(np.stack([xs, ys], axis=1), 0.0, 1.0)
    return Stroke(pts)


def _generic_strokes(rng, count):
    """Sparse lead-in strokes shared by every category."""
    shapes = [
        lambda: _line(rng, 0.05, 0.05, 0.15, 0.15),
        lambda: _line(rng, 0.20, 0.08, 0.32, 0.08),
        lambda: _line(rng, 0.08, 0.20, 0.08, 0.32),
    ]
    return [shapes[i % len(shapes)]() for i in range(count)]


# category patterns occupy distinct canvas regions with distinct directions
_PATTERNS = {
    "cat": lambda rng, i: _line(rng, 0.55 + 0.08 * i, 0.55, 0.75 + 0.05 * i, 0.9),
    "house": lambda rng, i: _line(rng, 0.15 + 0.09 * i, 0.6, 0.15 + 0.09 * i, 0.95),
    "tree": lambda rng, i: _line(rng, 0.55, 0.1 + 0.08 * i, 0.95, 0.1 + 0.08 * i),
    "boat": lambda rng, i: _line(rng, 0.35 + 0.07 * i, 0.65, 0.6 + 0.07 * i, 0.35),
    "car": lambda rng, i: _line(rng, 0.1 + 0.05 * i, 0.85, 0.5 + 0.05 * i, 0.85),
    "dog": lambda rng, i: _line(rng, 0.1 + 0.06 * i, 0.45, 0.3 + 0.06 * i, 0.2),
    "rainbow": lambda rng, i: Stroke(np.clip(np.stack([
        np.linspace(0.2, 0.8, 7),
        0.25 + 0.06 * i - 0.15 * np.sin(np.linspace(0, np.pi, 7))], axis=1), 0, 1)),
    "revolver": lambda rng, i: _line(rng, 0.45, 0.45 + 0.07 * i, 0.85, 0.45 + 0.07 * i),
}


def _category_sketch(rng, category, sketch_id, lead_in, pattern_count):
    strokes = _generic_strokes(rng, lead_in)
    strokes += [_PATTERNS[category](rng, i) for i in range(pattern_count)]
    return StrokeSequence(sketch_id=sketch_id, category=category, strokes=strokes)


# ---------------------------------------------------------------------------
# mini corpus
# ---------------------------------------------------------------------------

_CONFUSIONS = {
    "boat": ["car", "sail"],
    "car": ["boat", "wheel"],
    "cat": ["dog", "owl"],
    "dog": ["cat", "puppy"],
    "house": ["home", "tree"],
    "rainbow": ["cloud", "sun"],
    "revolver": ["firearm", "sixgun"],
    "tree": ["flower", "house"],
}


def build_mini_corpus(path: Path, seed: int = 11, per_category: int = 5) -> Corpus:
    """40 already-normalized records across the 8 bundled categories."""
    rng = np.random.default_rng(seed)
    records = []
    counter = 0
    for category in MINI_CATEGORIES:
        for j in range(per_category):
            counter += 1
            sketch_id = f"mini-{counter:03d}"
            n = int(rng.integers(4, 9))
            lead_in = int(rng.integers(1, min(4, n)))
            sseq = _category_sketch(rng, category, sketch_id, lead_in, n - lead_in)
            start = int(rng.integers(1, n))  # first-guess step index (0-based)
            style = int(rng.integers(0, 4))
            guesses = [""] * n
            wrong = _CONFUSIONS[category][int(rng.integers(0, 2))]
            for t in range(start, n):
                if style == 0:
                    guesses[t] = category
                elif style == 1:
                    guesses[t] = wrong if t < min(start + 2, n - 1) else category
                elif style == 2:
                    guesses[t] = wrong
                else:
                    guesses[t] = wrong if t == start else category
            gseq = GuessSequence(sketch_id=sketch_id,
                                 subject_id=f"subj-{1 + counter % 7:02d}",
                                 guesses=guesses)
            records.append((sseq, gseq))
    corpus = Corpus(records=records)
    write_corpus(path, corpus)
    return corpus


# ---------------------------------------------------------------------------
# raw preprocessing fixture with its construction-time golden
# ---------------------------------------------------------------------------

REMOVED = None

# (category, raw guesses, expected normalized guesses or REMOVED);
# expectations were derived by hand from the cleanup rules, not by running them
_RAW_CASES = [
    ("cat", ["", "", "Cat", "", ""], ["", "", "cat", "cat", "cat"]),
    ("rainbow", ["", "Rainbow"], ["", "rainbow"]),
    ("tree", ["", "", "", ""], REMOVED),
    ("rainbow", ["", "pot of gold at the end of the rainbow", "rainbow"],
     ["", "pot gold end rainbow", "rainbow"]),
    ("dog", ["", "girafe", ""], ["", "giraffe", "giraffe"]),
    ("dog", ["", "DOG", "puppy"], ["", "dog", "puppy"]),
    ("house", ["hous", "house"], ["house", "house"]),
    ("car", ["", "very fast", "car"], ["", "very fast", "car"]),
    ("boat", ["", "Big Red Boat", "", "boat"], ["", "boat", "boat", "boat"]),
    ("rainbow", ["", "cloudz", "rainbow"], ["", "cloud", "rainbow"]),
    ("tree", [" Tree ", "", ""], ["tree", "tree", "tree"]),
    ("revolver", ["", "reVolver", ""], ["", "revolver", "revolver"]),
    ("house", ["howse", "", "house"], ["house", "house", "house"]),
    ("cat", ["", "a little cat", "cat", ""], ["", "cat", "cat", "cat"]),
    ("revolver", ["", "", "firearm", "sixgun"], ["", "", "firearm", "sixgun"]),
    ("car", ["", "automobile", "CAR", "car"], ["", "automobile", "car", "car"]),
    ("boat", ["", "", ""], REMOVED),
    ("cat", ["KITTEN", "", "cat", ""], ["kitten", "kitten", "cat", "cat"]),
    ("house", ["", "the big house", ""], ["", "house", "house"]),
    ("tree", ["", "treee", "tree"], ["", "tree", "tree"]),
    ("dog", ["", "pupy", ""], ["", "puppy", "puppy"]),
    ("rainbow", ["", "", "sun", "rainbow", ""], ["", "", "sun", "rainbow", "rainbow"]),
    ("boat", ["", "boat with a sail", "", "boat"], ["", "boat sail", "boat sail", "boat"]),
    ("cat", ["", "Cat ", " cat", "cat"], ["", "cat", "cat", "cat"]),
    ("car", ["", "", "", "", ""], REMOVED),
    ("house", ["", "hOmE", "house"], ["", "home", "house"]),
    ("tree", ["", "big tree", "", ""], ["", "tree", "tree", "tree"]),
    ("dog", ["", "doG", "dog", "dog"], ["", "dog", "dog", "dog"]),
    ("revolver", ["", "revolvr", "revolver"], ["", "revolver", "revolver"]),
    ("rainbow", ["", "my rainbow", ""], ["", "rainbow", "rainbow"]),
]


def build_raw_fixture(raw_path: Path, golden_path: Path, seed: int = 17) -> None:
    """30 messy sequences and the hand-derived golden normalization."""
    cases = _RAW_CASES
    assert len(cases) == 30
    rng = np.random.default_rng(seed)
    raw_records = []
    golden_records = []
    for i, (category, raw, expected) in enumerate(cases, start=1):
        sketch_id = f"raw-{i:03d}"
        n = len(raw)
        lead_in = max(1, min(2, n - 1))
        sseq = _category_sketch(rng, category, sketch_id, lead_in, n - lead_in)
        subject = f"subj-{1 + i % 5:02d}"
        raw_records.append((sseq, GuessSequence(sketch_id, subject, list(raw))))
        if expected is not REMOVED:
            golden_records.append((sseq, GuessSequence(sketch_id, subject, list(expected))))
    write_corpus(raw_path, Corpus(records=raw_records))
    write_corpus(golden_path, Corpus(records=golden_records))


# ---------------------------------------------------------------------------
# separable training corpus
# ---------------------------------------------------------------------------


def build_separable_corpus(path: Path, seed: int = 1, per_category: int = 5) -> Corpus:
    """20 cleanly learnable sequences for overfit checks.

    Every sketch has 6 strokes; the category pattern (and the first guess)
    starts at step 3 for cat/house and step 4 for tree/boat.
    """
    rng = np.random.default_rng(seed)
    records = []
    counter = 0
    for category in SEPARABLE_CATEGORIES:
        lead_in = 2 if category in ("cat", "house") else 3
        for j in range(per_category):
            counter += 1
            sketch_id = f"sep-{counter:03d}"
            sseq = _category_sketch(rng, category, sketch_id, lead_in, 6 - lead_in)
            guesses = [""] * lead_in + [category] * (6 - lead_in)
            records.append((sseq, GuessSequence(sketch_id, "synthetic", guesses)))
    corpus = Corpus(records=records)
    write_corpus(path, corpus)
    return corpus


# ---------------------------------------------------------------------------
# training manifests
# ---------------------------------------------------------------------------


def build_manifests(out_dir: Path, data_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    base = {
        "corpus": str(data_dir / "separable_corpus.jsonl"),
        "lexicon_dir": str(data_dir / "lexicon"),
        "val_corpus": str(data_dir / "separable_corpus.jsonl"),
        "checkpoint_out": "unified.ckpt",
        "log_out": "unified.runlog",
        "train": {
            "hidden_dim": 32,
            "epochs": 200,
            "seed": 1,
            "optimizer": {"learning_rate": 0.1, "weight_decay": 0.0},
        },
    }
    (out_dir / "unified.json").write_text(json.dumps(base, indent=2) + "\n",
                                          encoding="utf-8")
    two_phase = dict(base)
    two_phase["checkpoint_out"] = "two_phase.ckpt"
    two_phase["log_out"] = "two_phase.runlog"
    two_phase["train"] = {
        "hidden_dim": 32,
        "epochs": 200,
        "seed": 1,
        "optimizer": {"learning_rate": 0.1, "weight_decay": 0.0},
        "phase1_optimizer": {"learning_rate": 0.05, "momentum": 0.9,
                             "weight_decay": 0.0},
        "phase1_loss": "transition-weighted",
    }
    (out_dir / "two_phase.json").write_text(json.dumps(two_phase, indent=2) + "\n",
                                            encoding="utf-8")


def build_all(data_dir) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    build_lexicon_dir(data_dir / "lexicon")
    build_mini_corpus(data_dir / "mini_corpus.jsonl")
    build_raw_fixture(data_dir / "raw_fixture.jsonl", data_dir / "golden_normalized.jsonl")
    build_separable_corpus(data_dir / "separable_corpus.jsonl")
    build_manifests(data_dir / "manifests", data_dir)


if __name__ == "__main__":
    build_all(sys.argv[1] if len(sys.argv) > 1 else "data")
