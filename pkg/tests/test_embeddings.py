import numpy as np
import pytest

from kgcap.corpus import CaptionRecord, build_vocabulary
from kgcap.embeddings import (
    EmbeddingMatrix,
    MeanWordVectorProvider,
    VectorTable,
    build_matrix,
    build_matrix_from_provider,
    cosine_similarity,
    coverage_report,
    load_matrix,
    load_vector_table,
    save_matrix,
)
from kgcap.errors import ConfigError, FormatError, ZeroNormError


def vocab_of(tokens):
    rec = CaptionRecord(image_id="x", raw_caption="", clean_tokens=list(tokens))
    return build_vocabulary([rec])


def table_of(entries, dim):
    return VectorTable(dim=dim, entries={k: np.asarray(v, dtype=np.float64) for k, v in entries.items()})


class TestVectorTable:
    def test_two_line_file(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("flood 0.1 0.2 0.3\nroad 1 2 3\n", encoding="utf-8")
        table = load_vector_table(p)
        assert table.dim == 3 and len(table) == 2

    def test_concept_key_prefix_stripped(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("/c/en/flood 0.1 0.2 0.3\n", encoding="utf-8")
        table = load_vector_table(p)
        assert "flood" in table

    def test_header_line_accepted(self, tmp_path):
        p = tmp_path / "v.txt"
        rows = " ".join(["0.5"] * 300)
        p.write_text(f"2 300\nalpha {rows}\nbeta {rows}\n", encoding="utf-8")
        table = load_vector_table(p)
        assert table.dim == 300 and len(table) == 2

    def test_ragged_row_names_line(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("a 1 2 3\nb 1 2\n", encoding="utf-8")
        with pytest.raises(FormatError, match="line 2"):
            load_vector_table(p)


class TestBuildMatrix:
    def test_exact_hit_and_random_boundaries(self):
        vocab = vocab_of(["flood"])
        table = table_of({"flood": [1.0, 2.0]}, dim=2)
        emb = build_matrix(vocab, table, epsilon=0.05, seed=1)
        np.testing.assert_array_equal(emb.matrix[vocab.word_to_idx["flood"]], [1.0, 2.0])
        assert emb.provenance[vocab.word_to_idx["flood"] - 1] == "exact"
        for tok in ("startseq", "endseq"):
            row = emb.matrix[vocab.word_to_idx[tok]]
            assert (np.abs(row) < 0.05).all()
        np.testing.assert_array_equal(emb.matrix[0], 0.0)

    def test_longest_prefix_wins(self):
        vocab = vocab_of(["flooding"])
        table = table_of({"flood": [1.0], "flo": [2.0]}, dim=1)
        emb = build_matrix(vocab, table, seed=0)
        idx = vocab.word_to_idx["flooding"]
        assert emb.matrix[idx, 0] == 1.0
        assert emb.provenance[idx - 1] == "prefix:flood"

    def test_min_prefix_length_three(self):
        vocab = vocab_of(["ab", "abcd"])
        table = table_of({"ab": [5.0], "a": [7.0]}, dim=1)
        emb = build_matrix(vocab, table, seed=0)
        # "abcd": only prefix candidates of length >= 3 count, so no match.
        assert emb.provenance[vocab.word_to_idx["abcd"] - 1] == "random"
        assert emb.provenance[vocab.word_to_idx["ab"] - 1] == "exact"

    def test_seed_changes_only_random_rows(self):
        vocab = vocab_of(["flood", "zzz"])
        table = table_of({"flood": [1.0, 0.0]}, dim=2)
        a = build_matrix(vocab, table, seed=1)
        b = build_matrix(vocab, table, seed=2)
        i_flood = vocab.word_to_idx["flood"]
        i_zzz = vocab.word_to_idx["zzz"]
        np.testing.assert_array_equal(a.matrix[i_flood], b.matrix[i_flood])
        assert not np.array_equal(a.matrix[i_zzz], b.matrix[i_zzz])

    def test_deterministic(self):
        vocab = vocab_of(["flood", "zzz"])
        table = table_of({"flood": [1.0, 0.0]}, dim=2)
        a = build_matrix(vocab, table, seed=9)
        b = build_matrix(vocab, table, seed=9)
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_random_components_within_open_interval(self):
        vocab = vocab_of([f"tok{chr(97 + i)}" for i in range(20)])
        table = table_of({}, dim=8)
        emb = build_matrix(vocab, table, epsilon=0.01, seed=3)
        assert (np.abs(emb.matrix[1:]) < 0.01).all()

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ConfigError):
            build_matrix(vocab_of(["a"]), table_of({}, dim=1), epsilon=0.0)


class TestCoverage:
    def test_all_exact(self):
        vocab = vocab_of(["aa", "bb"])
        table = table_of({"aa": [1.0], "bb": [2.0]}, dim=1)
        report = coverage_report(build_matrix(vocab, table))
        # boundary tokens are always random
        assert report == {"exact": 2, "prefix": 0, "random": 2}

    def test_empty_table_all_random(self):
        vocab = vocab_of(["aa", "bb"])
        report = coverage_report(build_matrix(vocab, table_of({}, dim=4)))
        assert report == {"exact": 0, "prefix": 0, "random": 4}
        assert sum(report.values()) == 4

    def test_single_prefix_hit(self):
        vocab = vocab_of(["flooding"])
        table = table_of({"flood": [0.5]}, dim=1)
        report = coverage_report(build_matrix(vocab, table))
        assert report["prefix"] == 1


class TestCosine:
    def test_identity(self):
        assert cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_hand_value(self):
        assert cosine_similarity([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.7071, abs=1e-4)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=16)
        assert cosine_similarity(x, 3.7 * x) == pytest.approx(1.0, abs=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(ZeroNormError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_fixture_semantic_ordering(self):
        # constructed so building~debris are close and building~ocean far
        table = table_of(
            {"building": [1.0, 0.1], "debris": [0.9, 0.2], "ocean": [-0.8, 1.0]}, dim=2
        )
        sim_bd = cosine_similarity(table.entries["building"], table.entries["debris"])
        sim_bo = cosine_similarity(table.entries["building"], table.entries["ocean"])
        assert sim_bd > sim_bo


class TestProvider:
    def test_mean_of_word_vectors(self):
        table = table_of({"aa": [1.0, 0.0], "bb": [0.0, 1.0]}, dim=2)
        provider = MeanWordVectorProvider(table)
        np.testing.assert_allclose(provider.embed_text(["aa", "bb"]), [0.5, 0.5])

    def test_unknown_words_skipped(self):
        table = table_of({"aa": [1.0, 0.0]}, dim=2)
        provider = MeanWordVectorProvider(table)
        np.testing.assert_allclose(provider.embed_text(["aa", "zz"]), [1.0, 0.0])
        np.testing.assert_array_equal(provider.embed_text(["zz"]), [0.0, 0.0])

    def test_provider_backed_matrix(self):
        vocab = vocab_of(["aa", "zz"])
        table = table_of({"aa": [1.0, 0.0]}, dim=2)
        emb = build_matrix_from_provider(vocab, MeanWordVectorProvider(table), seed=0)
        assert emb.provenance[vocab.word_to_idx["aa"] - 1] == "exact"
        assert emb.provenance[vocab.word_to_idx["zz"] - 1] == "random"


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        vocab = vocab_of(["flood", "zzz"])
        table = table_of({"flood": [1.0, 0.5]}, dim=2)
        emb = build_matrix(vocab, table, epsilon=0.02, seed=5, frozen=False)
        path = tmp_path / "emb.vlcf"
        save_matrix(emb, vocab, path)
        back = load_matrix(path, vocab)
        assert isinstance(back, EmbeddingMatrix)
        np.testing.assert_allclose(back.matrix, emb.matrix, atol=1e-7)
        assert back.provenance == emb.provenance
        assert back.seed == 5 and back.epsilon == 0.02 and back.frozen is False
        np.testing.assert_array_equal(back.matrix[0], 0.0)
