import numpy as np
import pytest

from strokeguess.lexicon import (DEFAULT_CRITERIA, CriteriaSet, EmbeddingTable,
                                 LexiconError, NO_GUESS, Taxonomy,
                                 accuracy_by_criteria, knn, load_embeddings,
                                 load_taxonomy, match, wup_similarity)


def brute_knn(table, q, k):
    """Exhaustive-scan oracle for nearest-neighbor retrieval."""
    out = []
    qn = np.linalg.norm(q)
    for word in table.words:
        v = table.vector(word)
        out.append((1.0 - float(v @ q) / (np.linalg.norm(v) * qn), word))
    out.sort()
    return [w for _, w in out[:k]]


def chain_taxonomy():
    # root -> a -> b -> c, depths 1, 2, 3, 4
    return Taxonomy({"a": "root", "b": "a", "c": "b"}, "root")


class TestEmbeddings:
    def test_load_small_file(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("3 2\na 1 0\nb 0 1\n# 0.5 0.5\n")
        table = load_embeddings(path)
        assert len(table) == 3 and table.dim == 2

    def test_row_width_error(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("2 2\na 1 0\nb 0 1 0.5\n")
        with pytest.raises(LexiconError):
            load_embeddings(path)

    def test_placeholder_synthesized(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("2 4\na 1 0 0 0\nb 0 1 0 0\n")
        table = load_embeddings(path)
        assert len(table) == 3
        assert NO_GUESS in table
        assert abs(np.linalg.norm(table.vector(NO_GUESS)) - 1.0) < 1e-9

    def test_placeholder_deterministic(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("1 3\na 1 0 0\n")
        t1 = load_embeddings(path)
        t2 = load_embeddings(path)
        assert np.array_equal(t1.vector(NO_GUESS), t2.vector(NO_GUESS))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("0 0\n")
        with pytest.raises(LexiconError):
            load_embeddings(path)

    def test_duplicate_words(self):
        with pytest.raises(LexiconError):
            EmbeddingTable(["a", "a", NO_GUESS], np.eye(3))


class TestKnn:
    def table(self):
        words = ["a", "b", "c", NO_GUESS]
        vecs = np.array([[1.0, 0.0], [0.0, 1.0],
                         [1 / np.sqrt(2), 1 / np.sqrt(2)], [-1.0, -1.0]])
        return EmbeddingTable(words, vecs)

    def test_self_neighbor(self):
        table = self.table()
        result = knn(table, table.vector("a"), 1)
        assert result[0][0] == "a" and abs(result[0][1]) < 1e-12

    def test_spec_example(self):
        table = self.table()
        got = [w for w, _ in knn(table, np.array([1.0, 0.1]), 2)]
        assert got == ["a", "c"]

    def test_tie_breaks_lexicographic(self):
        table = EmbeddingTable(["zeta", "alpha", NO_GUESS],
                               np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        assert knn(table, np.array([1.0, 0.0]), 1)[0][0] == "alpha"

    def test_zero_norm_query(self):
        with pytest.raises(LexiconError):
            knn(self.table(), np.zeros(2), 1)

    def test_k_too_large(self):
        with pytest.raises(LexiconError):
            knn(self.table(), np.array([1.0, 0.0]), 9)

    def test_exclude(self):
        table = self.table()
        got = [w for w, _ in knn(table, np.array([1.0, 0.0]), 3, exclude={NO_GUESS})]
        assert NO_GUESS not in got

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(9)
        words = [f"w{i:03d}" for i in range(200)] + [NO_GUESS]
        vecs = rng.standard_normal((201, 8))
        table = EmbeddingTable(words, vecs)
        for _ in range(25):
            q = rng.standard_normal(8)
            k = int(rng.integers(1, 12))
            assert [w for w, _ in knn(table, q, k)] == brute_knn(table, q, k)


class TestWup:
    def brute_wup(self, tax, a, b):
        # enumerate full ancestor paths, intersect, take the deepest
        path_a = tax.ancestors(a)
        path_b = set(tax.ancestors(b))
        common = [n for n in path_a if n in path_b]
        lcs = max(common, key=lambda n: tax.depth[n])
        return 2.0 * tax.depth[lcs] / (tax.depth[a] + tax.depth[b])

    def test_identity(self):
        tax = chain_taxonomy()
        for node in tax.nodes:
            assert wup_similarity(tax, node, node) == 1.0

    def test_chain_example(self):
        tax = chain_taxonomy()
        assert wup_similarity(tax, "b", "c") == pytest.approx(6 / 7)

    def test_sibling_example(self):
        tax = Taxonomy({"a": "root", "b1": "a", "b2": "a"}, "root")
        assert wup_similarity(tax, "b1", "b2") == pytest.approx(4 / 6)

    def test_unknown_word(self):
        with pytest.raises(LexiconError):
            wup_similarity(chain_taxonomy(), "a", "zzz")

    def test_random_trees_match_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n = int(rng.integers(5, 60))
            parent = {f"n{i}": f"n{int(rng.integers(0, i))}" for i in range(1, n)}
            tax = Taxonomy(parent, "n0")
            nodes = sorted(tax.nodes)
            for _ in range(40):
                a, b = rng.choice(nodes, size=2)
                got = wup_similarity(tax, a, b)
                assert got == self.brute_wup(tax, a, b)
                assert got == wup_similarity(tax, b, a)
                assert 0.0 < got <= 1.0

    def test_cycle_detection(self):
        with pytest.raises(LexiconError):
            Taxonomy({"a": "b", "b": "a", "c": "root"}, "root")

    def test_synset_words_must_exist(self):
        with pytest.raises(LexiconError):
            Taxonomy({"a": "root"}, "root", synsets=[("a", "ghost")])

    def test_load_requires_single_root(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("a\troot1\nb\troot2\n")
        with pytest.raises(LexiconError):
            load_taxonomy(path)


class TestMatch:
    def test_exact_match(self, lexicon):
        ok, fired = match("rainbow", "rainbow", lexicon.taxonomy,
                          CriteriaSet.parse("EM"))
        assert ok and fired == {"EM"}

    def test_subset_multiword(self, lexicon):
        ok, fired = match("pot gold end rainbow", "rainbow", lexicon.taxonomy,
                          CriteriaSet.parse("SUB"))
        assert ok and fired == {"SUB"}

    def test_hypernym_parent_child(self, lexicon):
        crit = CriteriaSet.parse("EM|SUB|SYN|HY|HY-PC")
        ok, fired = match("firearm", "revolver", lexicon.taxonomy, crit)
        assert ok and fired == {"HY-PC"}

    def test_synonym(self, lexicon):
        ok, fired = match("mug", "cup", lexicon.taxonomy, CriteriaSet.parse("SYN"))
        assert ok and "SYN" in fired

    def test_shared_parent(self, lexicon):
        ok, fired = match("car", "boat", lexicon.taxonomy, CriteriaSet.parse("HY"))
        assert ok and fired == {"HY"}

    def test_wup_threshold(self, lexicon):
        ok, fired = match("kitten", "cat", lexicon.taxonomy, CriteriaSet.parse("WUP"))
        assert ok and fired == {"WUP"}
        ok, _ = match("dog", "cat", lexicon.taxonomy, CriteriaSet.parse("WUP"))
        assert not ok

    def test_empty_guess_never_matches(self, lexicon):
        ok, fired = match("", "cat", lexicon.taxonomy, DEFAULT_CRITERIA)
        assert not ok and not fired

    def test_out_of_taxonomy_words_fail_quietly(self, lexicon):
        ok, fired = match("qwerty", "cat", lexicon.taxonomy,
                          CriteriaSet.parse("SYN|HY|HY-PC|WUP"))
        assert not ok and not fired

    def test_multiword_token_fallback(self, lexicon):
        # "little kitten" is not a taxonomy node; its token "kitten" is
        ok, fired = match("little kitten", "cat", lexicon.taxonomy,
                          CriteriaSet.parse("HY-PC"))
        assert ok and fired == {"HY-PC"}

    def test_em_implies_sub(self, lexicon):
        rng = np.random.default_rng(5)
        nodes = sorted(lexicon.taxonomy.nodes)
        for _ in range(50):
            w = nodes[int(rng.integers(len(nodes)))]
            ok, fired = match(w, w, lexicon.taxonomy, CriteriaSet.parse("EM|SUB"))
            assert ok and {"EM", "SUB"} <= fired

    def test_monotone_in_criteria(self, lexicon):
        rng = np.random.default_rng(6)
        nodes = sorted(lexicon.taxonomy.nodes)
        chain = [CriteriaSet.parse(s) for s in
                 ("EM", "EM|SUB", "EM|SUB|SYN", "EM|SUB|SYN|HY",
                  "EM|SUB|SYN|HY|HY-PC", "EM|SUB|SYN|HY|HY-PC|WUP")]
        for _ in range(200):
            g = nodes[int(rng.integers(len(nodes)))]
            t = nodes[int(rng.integers(len(nodes)))]
            previous = False
            for crit in chain:
                ok, _ = match(g, t, lexicon.taxonomy, crit)
                assert ok or not previous
                previous = ok

    def test_empty_criteria_rejected(self):
        with pytest.raises(LexiconError):
            CriteriaSet(enabled=frozenset())

    def test_unknown_criterion_rejected(self):
        with pytest.raises(LexiconError):
            CriteriaSet.parse("EM|NOPE")


class TestAccuracyByCriteria:
    CHAIN = ("EM", "EM|SUB", "EM|SUB|SYN", "EM|SUB|SYN|HY",
             "EM|SUB|SYN|HY|HY-PC", "EM|SUB|SYN|HY|HY-PC|WUP")

    def test_all_exact(self, lexicon):
        pairs = [("cat", "cat"), ("dog", "dog")]
        combos = [CriteriaSet.parse(s) for s in self.CHAIN]
        assert accuracy_by_criteria(pairs, lexicon.taxonomy, combos) == [1.0] * 6

    def test_sub_only_pairs(self, lexicon):
        pairs = [("cat", "cat"), ("dog", "dog"),
                 ("pot gold end rainbow", "rainbow"), ("big boat", "boat")]
        combos = [CriteriaSet.parse("EM"), CriteriaSet.parse("EM|SUB")]
        assert accuracy_by_criteria(pairs, lexicon.taxonomy, combos) == [0.5, 1.0]

    def test_monotone_on_random_pairs(self, lexicon):
        rng = np.random.default_rng(7)
        nodes = sorted(lexicon.taxonomy.nodes)
        pairs = [(nodes[int(rng.integers(len(nodes)))],
                  nodes[int(rng.integers(len(nodes)))]) for _ in range(300)]
        combos = [CriteriaSet.parse(s) for s in self.CHAIN]
        scores = accuracy_by_criteria(pairs, lexicon.taxonomy, combos)
        assert scores == sorted(scores)

    def test_empty_pairs(self, lexicon):
        with pytest.raises(LexiconError):
            accuracy_by_criteria([], lexicon.taxonomy, [DEFAULT_CRITERIA])
