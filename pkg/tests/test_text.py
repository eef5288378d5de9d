import json
import re
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alkd import text
from alkd.errors import ConfigError, DataError


def oracle_vocab(lines, target_size):
    """Independent frequency-count implementation of vocabulary induction."""
    counts = Counter()
    for line in lines:
        for word in re.findall(r"[^\W_]+(?:'[^\W_]+)*|[^\w\s]", line.lower()):
            counts[word] += 1
            for i in range(1, len(word)):
                counts["##" + word[i:]] += 1
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return list(text.RESERVED) + ranked[: target_size - 4]


class TestInduceVocab:
    def test_tiny_corpus_frequency_order(self):
        v = text.induce_vocab(["a a b"], 6)
        assert v.id_to_token == ["[PAD]", "[UNK]", "[CLS]", "[MASK]", "a", "b"]

    def test_rerun_is_identical(self):
        corpus = ["the cat sat", "the dog sat on the cat"]
        assert text.induce_vocab(corpus, 20).id_to_token == text.induce_vocab(corpus, 20).id_to_token

    def test_large_corpus_matches_counting_oracle(self):
        rng = np.random.default_rng(42)
        letters = "abcdefghijklmnopqrstuvwxyz"
        words = ["".join(rng.choice(list(letters), size=rng.integers(3, 9))) for _ in range(10_000)]
        # zipf-ish frequencies so the ranking is nontrivial
        lines = []
        for rank, w in enumerate(words):
            reps = max(1, 3000 // (rank + 1))
            lines.extend([w] * min(reps, 50))
        v = text.induce_vocab(lines, 1000)
        assert v.id_to_token == oracle_vocab(lines, 1000)
        assert v.size == 1000
        # most frequent words survive as whole tokens; the tail goes to pieces/[UNK]
        assert words[0] in v.token_to_id
        rare = text.tokenize(words[-1], v, sample_id="rare")
        assert rare.token_ids[0] == text.CLS_ID
        assert all(i == text.UNK_ID or i >= 4 for i in rare.token_ids[1:])

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError):
            text.induce_vocab([], 10)
        with pytest.raises(DataError):
            text.induce_vocab(["   "], 10)

    def test_target_size_must_exceed_reserved(self):
        with pytest.raises(ConfigError):
            text.induce_vocab(["a"], 4)

    def test_reserved_tokens_never_induced(self):
        v = text.induce_vocab(["[MASK] [MASK] mask"], 12)
        assert v.id_to_token.index("[MASK]") == text.MASK_ID
        assert v.id_to_token.count("[MASK]") == 1


class TestTokenize:
    def test_whole_word(self):
        v = text.Vocab(list(text.RESERVED) + ["hello"])
        s = text.tokenize("hello", v)
        assert s.token_ids == [text.CLS_ID, v.token_to_id["hello"]]

    def test_greedy_longest_match_continuation(self):
        v = text.Vocab(list(text.RESERVED) + ["hell", "##o"])
        s = text.tokenize("hello", v)
        assert s.token_ids == [text.CLS_ID, v.token_to_id["hell"], v.token_to_id["##o"]]

    def test_unknown_word_falls_back_to_unk(self):
        v = text.Vocab(list(text.RESERVED) + ["hello"])
        s = text.tokenize("§§§", v)
        assert s.token_ids == [text.CLS_ID, text.UNK_ID, text.UNK_ID, text.UNK_ID]

    def test_truncation_to_max_len(self):
        v = text.Vocab(list(text.RESERVED) + ["word"])
        s = text.tokenize(" ".join(["word"] * 50), v, max_len=8)
        assert len(s.token_ids) == 8 and s.token_ids[0] == text.CLS_ID

    def test_empty_text_rejected(self):
        v = text.Vocab(list(text.RESERVED))
        with pytest.raises(DataError):
            text.tokenize("   ", v)


class TestMaskTokens:
    def _sample(self, n=10):
        return text.TokenizedSample(id="s", token_ids=[text.CLS_ID] + list(range(4, 4 + n)), raw_text="")

    def test_rate_zero_is_identity(self):
        m = text.mask_tokens(self._sample(), 0.0, np.random.default_rng(0))
        assert m.input_ids == m.target_ids and m.mask_positions == []

    def test_rate_one_masks_everything_but_cls(self):
        m = text.mask_tokens(self._sample(8), 1.0, np.random.default_rng(0))
        assert m.mask_positions == list(range(1, 9))
        assert m.input_ids[0] == text.CLS_ID
        assert all(i == text.MASK_ID for i in m.input_ids[1:])

    def test_masked_fraction_converges(self):
        rng = np.random.default_rng(123)
        total = masked = 0
        for _ in range(500):
            m = text.mask_tokens(self._sample(200), 0.15, rng)
            total += 200
            masked += len(m.mask_positions)
        assert abs(masked / total - 0.15) < 0.01

    def test_deterministic_given_seed(self):
        a = text.mask_tokens(self._sample(50), 0.3, np.random.default_rng(7))
        b = text.mask_tokens(self._sample(50), 0.3, np.random.default_rng(7))
        assert a.input_ids == b.input_ids and a.mask_positions == b.mask_positions

    def test_bert_split_keeps_targets(self):
        m = text.mask_tokens(self._sample(500), 0.5, np.random.default_rng(1),
                             bert_split=True, vocab_size=600)
        assert m.target_ids == self._sample(500).token_ids
        kinds = Counter()
        for p in m.mask_positions:
            if m.input_ids[p] == text.MASK_ID:
                kinds["mask"] += 1
            elif m.input_ids[p] == m.target_ids[p]:
                kinds["keep"] += 1
            else:
                kinds["random"] += 1
        assert kinds["mask"] > kinds["random"] > 0 and kinds["keep"] > 0

    @given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_outside_mask_positions(self, seed, rate):
        sample = self._sample(32)
        m = text.mask_tokens(sample, rate, np.random.default_rng(seed))
        masked = set(m.mask_positions)
        assert 0 not in masked
        for p, (i, t) in enumerate(zip(m.input_ids, m.target_ids)):
            if p not in masked:
                assert i == t


class TestMakeBatch:
    def _masked(self, sid, n, mask_at=()):
        ids = [text.CLS_ID] + list(range(4, 3 + n))
        return text.MaskedSample(id=sid, input_ids=list(ids), target_ids=list(ids),
                                 mask_positions=list(mask_at))

    def test_pads_to_longest(self):
        b = text.make_batch([self._masked("a", 3), self._masked("b", 5)])
        assert b.shape == (2, 5)
        assert b.valid_mask[0].sum() == 3 and b.valid_mask[1].sum() == 5
        assert (b.input_ids[0, 3:] == text.PAD_ID).all()

    def test_single_sample_all_valid(self):
        b = text.make_batch([self._masked("a", 4)])
        assert b.valid_mask.all()

    def test_recount_256_random_samples(self):
        rng = np.random.default_rng(5)
        lens = rng.integers(2, 40, size=256)
        samples = [self._masked(f"s{i}", int(n)) for i, n in enumerate(lens)]
        b = text.make_batch(samples)
        assert (b.valid_mask.sum(axis=1) == lens).all()

    def test_oversize_sample_names_id(self):
        with pytest.raises(DataError, match="brick"):
            text.make_batch([self._masked("brick", 9)], pad_to=4)

    def test_mlm_mask_implies_valid(self):
        b = text.make_batch([self._masked("a", 6, mask_at=[2, 4]), self._masked("b", 3, mask_at=[1])])
        assert (b.valid_mask | ~b.mlm_mask).all()
        assert b.mlm_mask.sum() == 3

    def test_assembly_preserves_ids(self):
        samples = [self._masked("a", 7, [1]), self._masked("b", 2), self._masked("c", 5, [3])]
        b = text.make_batch(samples)
        for row, s in zip(b.input_ids, samples):
            assert list(row[: len(s.input_ids)]) == s.input_ids


class TestRecords:
    def test_roundtrip(self, tmp_path):
        recs = [
            text.Record(id="r1", text="hi there", label=1.5),
            text.Record(id="r2", text="bye", labels={"happiness": 1, "anger": 0}),
        ]
        p = tmp_path / "d.jsonl"
        text.write_records(recs, p)
        back = text.read_records(p)
        assert back == recs

    def test_bad_json_reports_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"id": "a", "text": "ok"}\nnot json\n')
        with pytest.raises(DataError, match=":2:"):
            text.read_records(p)

    def test_missing_field_rejected(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps({"id": "a"}) + "\n")
        with pytest.raises(DataError, match="text"):
            text.read_records(p)
