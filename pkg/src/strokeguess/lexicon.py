"""Word embeddings, hypernym taxonomy, synonym sets and guess/truth matching."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NO_GUESS = "#"
CRITERIA = ("EM", "SUB", "SYN", "HY", "HY-PC", "WUP")
DEFAULT_PLACEHOLDER_SEED = 13

_TOKEN_SPLIT = re.compile(r"[\s\-]+")


class LexiconError(ValueError):
    """Raised for malformed lexicon files or invalid queries."""


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


class EmbeddingTable:
    """Immutable word -> vector table with a reserved no-guess token."""

    def __init__(self, words: list[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(words):
            raise LexiconError("embedding matrix shape does not match word list")
        if not np.isfinite(vectors).all():
            raise LexiconError("embeddings must be finite")
        if len(set(words)) != len(words):
            raise LexiconError("duplicate words in embedding table")
        if NO_GUESS not in words:
            raise LexiconError(f"reserved token {NO_GUESS!r} missing")
        self.words = list(words)
        self.vectors = vectors
        self.dim = vectors.shape[1]
        self.index = {w: i for i, w in enumerate(words)}
        self._norms = np.linalg.norm(vectors, axis=1)
        if (self._norms == 0).any():
            raise LexiconError("zero-norm embedding vector")

    def __len__(self):
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        try:
            return self.vectors[self.index[word]]
        except KeyError:
            raise LexiconError(f"word {word!r} not in embedding table") from None


def load_embeddings(path, placeholder_seed: int = DEFAULT_PLACEHOLDER_SEED) -> EmbeddingTable:
    """Read "<vocab> <dim>" header then one "word v1 .. v_dim" line per word.

    A missing no-guess token is synthesized as a seeded random unit vector.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise LexiconError(f"{path}: bad embedding header")
        vocab_size, dim = int(header[0]), int(header[1])
        if vocab_size < 1 or dim < 1:
            raise LexiconError(f"{path}: empty embedding file")
        words = []
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise LexiconError(f"{path}:{lineno}: expected {dim} values")
            words.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    if len(words) != vocab_size:
        raise LexiconError(f"{path}: header declares {vocab_size} words, found {len(words)}")
    if NO_GUESS not in words:
        rng = np.random.default_rng(placeholder_seed)
        vec = rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
        words.append(NO_GUESS)
        rows.append(vec.tolist())
    return EmbeddingTable(words, np.asarray(rows, dtype=np.float64))


def write_embeddings(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, row in zip(table.words, table.vectors):
            fh.write(word + " " + " ".join(repr(float(v)) for v in row) + "\n")


def knn(table: EmbeddingTable, query: np.ndarray, k: int, exclude=()) -> list[tuple[str, float]]:
    """The k words nearest in cosine distance, ties broken lexicographically."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (table.dim,):
        raise LexiconError(f"query dimension {query.shape} != table dimension {table.dim}")
    qnorm = np.linalg.norm(query)
    if qnorm == 0.0:
        raise LexiconError("zero-norm query vector")
    if exclude:
        candidates = [i for i, w in enumerate(table.words) if w not in exclude]
    else:
        candidates = list(range(len(table.words)))
    if k < 1 or k > len(candidates):
        raise LexiconError(f"k={k} out of range for {len(candidates)} candidate entries")
    dist = 1.0 - (table.vectors @ query) / (table._norms * qnorm)
    order = sorted(candidates, key=lambda i: (dist[i], table.words[i]))
    return [(table.words[i], float(dist[i])) for i in order[:k]]


# ---------------------------------------------------------------------------
# taxonomy
# ---------------------------------------------------------------------------


class Taxonomy:
    """Single-rooted hypernym tree plus synonym sets."""

    def __init__(self, parent: dict[str, str], root: str, synsets=()):
        self.parent = dict(parent)
        self.root = root
        self.nodes = {root} | set(self.parent) | set(self.parent.values())
        self.depth: dict[str, int] = {}
        for node in self.nodes:
            chain = self._chain(node)
            if chain[-1] != root:
                raise LexiconError(f"node {node!r} does not reach the root")
            self.depth[node] = len(chain)
        self.synonyms: dict[str, frozenset[str]] = {}
        for group in synsets:
            group = frozenset(group)
            missing = group - self.nodes
            if missing:
                raise LexiconError(f"synset words missing from taxonomy: {sorted(missing)}")
            for word in group:
                self.synonyms[word] = group

    def _chain(self, node: str) -> list[str]:
        """Path from node up to (and including) the root."""
        chain = [node]
        seen = {node}
        while chain[-1] in self.parent:
            nxt = self.parent[chain[-1]]
            if nxt in seen:
                raise LexiconError(f"cycle in taxonomy at {nxt!r}")
            chain.append(nxt)
            seen.add(nxt)
        return chain

    def __contains__(self, word: str) -> bool:
        return word in self.nodes

    def ancestors(self, word: str) -> list[str]:
        if word not in self.nodes:
            raise LexiconError(f"word {word!r} not in taxonomy")
        return self._chain(word)


def wup_similarity(tax: Taxonomy, a: str, b: str) -> float:
    """Taxonomy similarity 2 * depth(lcs) / (depth(a) + depth(b)), root depth 1."""
    chain_a = tax.ancestors(a)
    chain_b = tax.ancestors(b)
    common = set(chain_a) & set(chain_b)
    lcs_depth = max(tax.depth[n] for n in common)
    return 2.0 * lcs_depth / (tax.depth[a] + tax.depth[b])


def load_taxonomy(tax_path, synset_path=None) -> Taxonomy:
    """Read "child<TAB>parent" lines plus optional tab-separated synset lines."""
    parent = {}
    with open(tax_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(f"{tax_path}:{lineno}: expected child<TAB>parent")
            child, par = parts[0].strip(), parts[1].strip()
            if child in parent:
                raise LexiconError(f"{tax_path}:{lineno}: duplicate child {child!r}")
            parent[child] = par
    roots = set(parent.values()) - set(parent)
    if len(roots) != 1:
        raise LexiconError(f"{tax_path}: expected one root, found {sorted(roots)}")
    synsets = []
    if synset_path is not None:
        with open(synset_path, encoding="utf-8") as fh:
            for line in fh:
                words = [w for w in line.strip().split("\t") if w]
                if len(words) >= 2:
                    synsets.append(words)
    return Taxonomy(parent, roots.pop(), synsets)


# ---------------------------------------------------------------------------
# matching criteria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriteriaSet:
    """Enabled matching criteria, combined in logical-OR fashion."""

    enabled: frozenset[str]
    wup_threshold: float = 0.9

    def __post_init__(self):
        if not self.enabled:
            raise LexiconError("criteria set must be non-empty")
        unknown = self.enabled - set(CRITERIA)
        if unknown:
            raise LexiconError(f"unknown criteria: {sorted(unknown)}")
        if not 0.0 < self.wup_threshold <= 1.0:
            raise LexiconError("wup threshold must be in (0, 1]")

    @classmethod
    def parse(cls, spec: str, wup_threshold: float = 0.9) -> "CriteriaSet":
        names = frozenset(p.strip().upper() for p in spec.split("|") if p.strip())
        return cls(enabled=names, wup_threshold=wup_threshold)

    def __str__(self):
        return "|".join(c for c in CRITERIA if c in self.enabled)


DEFAULT_CRITERIA = CriteriaSet.parse("EM|SUB|SYN")


def _tokens(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text) if t]


def _taxonomy_candidates(word: str, tax: Taxonomy) -> list[str]:
    """Lookup forms for a possibly multi-word guess: whole string, else tokens."""
    if word in tax:
        return [word]
    return [t for t in _tokens(word) if t in tax]


def match(guess: str, truth: str, tax: Taxonomy,
          crit: CriteriaSet = DEFAULT_CRITERIA) -> tuple[bool, frozenset[str]]:
    """Decide whether an open-vocabulary guess counts as correct.

    Returns the OR verdict plus every enabled criterion that individually
    fired. Empty guesses never match; words absent from the taxonomy simply
    fail the taxonomy-based criteria.
    """
    if not guess:
        return False, frozenset()
    fired = set()

    if "EM" in crit.enabled and guess == truth:
        fired.add("EM")

    if "SUB" in crit.enabled:
        g_tok = Counter(_tokens(guess))
        t_tok = Counter(_tokens(truth))
        if g_tok and t_tok and ((g_tok - t_tok == Counter()) or (t_tok - g_tok == Counter())):
            fired.add("SUB")

    need_tax = crit.enabled & {"SYN", "HY", "HY-PC", "WUP"}
    if need_tax:
        g_cands = _taxonomy_candidates(guess, tax)
        t_cands = _taxonomy_candidates(truth, tax)
        for g in g_cands:
            for t in t_cands:
                if "SYN" in crit.enabled and tax.synonyms.get(g) is not None \
                        and tax.synonyms.get(g) == tax.synonyms.get(t):
                    fired.add("SYN")
                if "HY" in crit.enabled:
                    gp, tp = tax.parent.get(g), tax.parent.get(t)
                    if gp is not None and gp == tp:
                        fired.add("HY")
                if "HY-PC" in crit.enabled and (tax.parent.get(g) == t or tax.parent.get(t) == g):
                    fired.add("HY-PC")
                if "WUP" in crit.enabled and wup_similarity(tax, g, t) >= crit.wup_threshold:
                    fired.add("WUP")

    return bool(fired), frozenset(fired)


def accuracy_by_criteria(pairs, tax: Taxonomy, combos) -> list[float]:
    """Fraction of (guess, truth) pairs matching under each criteria combo."""
    if not pairs:
        raise LexiconError("no pairs to score")
    scores = []
    for combo in combos:
        hits = sum(1 for g, t in pairs if match(g, t, tax, combo)[0])
        scores.append(hits / len(pairs))
    return scores


# ---------------------------------------------------------------------------
# bundled lexicon
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Lexicon:
    """Everything word-related the pipeline needs, loaded once and shared."""

    embeddings: EmbeddingTable
    taxonomy: Taxonomy
    pos_tags: dict[str, str] = field(default_factory=dict)
    plural: dict[str, str] = field(default_factory=dict)
    spell_words: set[str] = field(default_factory=set)

    def synonyms_of(self, word: str) -> set[str]:
        return set(self.taxonomy.synonyms.get(word, frozenset()))


def _read_tsv_pairs(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            key, value = line.split("\t", 1)
            out[key.strip()] = value.strip()
    return out


def load_lexicon(directory) -> Lexicon:
    """Load the lexicon file bundle from a directory.

    Expects embeddings.txt, taxonomy.tsv, synsets.tsv, pos.tsv, plural.tsv
    and spell.txt (one word per line).
    """
    directory = Path(directory)
    embeddings = load_embeddings(directory / "embeddings.txt")
    taxonomy = load_taxonomy(directory / "taxonomy.tsv", directory / "synsets.tsv")
    pos_tags = _read_tsv_pairs(directory / "pos.tsv")
    plural = _read_tsv_pairs(directory / "plural.tsv")
    spell_words = set()
    spell_path = directory / "spell.txt"
    if spell_path.exists():
        spell_words = {w.strip() for w in spell_path.read_text(encoding="utf-8").split() if w.strip()}
    else:
        spell_words = set(pos_tags) | {w for w in embeddings.words if w != NO_GUESS}
    return Lexicon(embeddings=embeddings, taxonomy=taxonomy, pos_tags=pos_tags,
                   plural=plural, spell_words=spell_words)
