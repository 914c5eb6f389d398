"""BLEU, bucketed F1, parameter counts, and timing-harness tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmfseq import evalbench
from vmfseq.corpus import RESERVED_TOKENS, Vocabulary
from vmfseq.evalbench import (EvalReport, bench_step_time, bleu, count_params,
                              throughput_curve, unigram_counts_by_freq,
                              unigram_f1_by_freq)
from vmfseq.losses import LossConfig
from vmfseq.seq2seq import ModelConfig

BLEU_HAND = 0.66874030497642202  # (4/5 * 3/4 * 2/3 * 1/2) ** (1/4)


def vocab_with_freq(freq: dict[str, int]) -> Vocabulary:
    return Vocabulary(words=list(RESERVED_TOKENS) + list(freq), freq=dict(freq))


class TestBleu:
    def test_perfect_match(self):
        hyp = [["a", "b", "c", "d"]]
        assert bleu(hyp, hyp) == pytest.approx(1.0)

    def test_hand_computed_example(self):
        hyp = [["a", "b", "c", "d", "e"]]
        ref = [["a", "b", "c", "d", "f"]]
        assert bleu(hyp, ref) == pytest.approx(BLEU_HAND, abs=1e-12)

    def test_empty_hypothesis(self):
        assert bleu([[]], [["a", "b", "c", "d"]]) == 0.0

    def test_zero_precision_no_smoothing(self):
        assert bleu([["x", "y", "z", "w"]], [["a", "b", "c", "d"]]) == 0.0

    def test_brevity_penalty(self):
        # 4 identical tokens against a 8-token reference: precisions are
        # clipped but nonzero, and BP = exp(1 - 8/4)
        hyp = [["a", "b", "c", "d"]]
        ref = [["a", "b", "c", "d", "e", "f", "g", "h"]]
        score = bleu(hyp, ref)
        no_bp = (4 / 4 * 3 / 3 * 2 / 2 * 1 / 1)
        assert score == pytest.approx(np.exp(1 - 8 / 4) * no_bp, rel=1e-12)

    def test_permutation_invariance(self):
        hyps = [["a", "b", "c", "d"], ["x", "y", "z", "q", "r"]]
        refs = [["a", "b", "e", "d"], ["x", "y", "z", "q", "s"]]
        assert bleu(hyps, refs) == pytest.approx(bleu(hyps[::-1], refs[::-1]), rel=1e-15)

    def test_range(self):
        assert 0.0 <= bleu([["a", "b", "c", "d"]], [["a", "x", "c", "d"]]) <= 1.0

    def test_empty_reference_set_rejected(self):
        with pytest.raises(ValueError):
            bleu([["a"]], [[]])
        with pytest.raises(ValueError):
            bleu([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            bleu([["a"]], [["a"], ["b"]])


class TestUnigramF1:
    def test_hand_counts_single_bucket(self):
        v = vocab_with_freq({"a": 1, "b": 1, "c": 1, "d": 1})
        f1 = unigram_f1_by_freq([["a", "b", "c"]], [["a", "b", "d"]], v)
        assert set(f1) == {"1"}
        assert f1["1"] == pytest.approx(2 / 3)

    def test_identical_corpora_give_one(self):
        v = vocab_with_freq({"a": 1, "b": 7, "c": 1500})
        corpora = [["a", "b"], ["c", "c", "b"]]
        f1 = unigram_f1_by_freq(corpora, corpora, v)
        assert set(f1) == {"1", "5-9", "1000+"}
        for val in f1.values():
            assert val == pytest.approx(1.0)

    def test_bucket_scheme_matches_reference_rows(self):
        assert [b[0] for b in evalbench.BUCKETS] == ["1", "2", "3", "4", "5-9", "10-99", "100-999", "1000+"]
        v = vocab_with_freq({"w1": 1, "w2": 2, "w3": 3, "w4": 4, "w5": 7,
                             "w6": 50, "w7": 500, "w8": 5000})
        hyp = [list(v.freq)]
        f1 = unigram_f1_by_freq(hyp, hyp, v)
        assert set(f1) == {"1", "2", "3", "4", "5-9", "10-99", "100-999", "1000+"}

    def test_unseen_words_excluded(self):
        v = vocab_with_freq({"a": 2})
        f1 = unigram_f1_by_freq([["a", "never"]], [["a", "never"]], v)
        assert set(f1) == {"2"}

    def test_counts_sum_to_corpus_totals(self):
        v = vocab_with_freq({"a": 1, "b": 3, "c": 20, "d": 2000})
        hyps = [["a", "b", "b"], ["c", "d", "a"]]
        refs = [["a", "b", "c"], ["d", "d", "a"]]
        counts = unigram_counts_by_freq(hyps, refs, v)
        produced = sum(c[1] for c in counts.values())
        reference = sum(c[2] for c in counts.values())
        matched = sum(c[0] for c in counts.values())
        assert produced == sum(len(h) for h in hyps)
        assert reference == sum(len(r) for r in refs)
        # clipped matches computed by hand: a,b | c -> 2 ; d,a | d,d,a -> 2
        assert matched == 4

    def test_clipping(self):
        v = vocab_with_freq({"a": 1})
        counts = unigram_counts_by_freq([["a", "a", "a"]], [["a"]], v)
        assert counts["1"] == [1, 3, 1]


class TestCountParams:
    def base(self, **kw):
        args = dict(src_vocab_size=50_000, tgt_vocab_size=50_000, hidden_size=1024,
                    input_emb_size=512, output_vector_size=300)
        args.update(kw)
        return ModelConfig(**args)

    def test_softmax_output_layer(self):
        assert count_params(self.base(head="softmax"))["output_layer"] == 51_200_000

    def test_continuous_output_layer(self):
        assert count_params(self.base(head="continuous"))["output_layer"] == 307_200

    def test_untied_input_layer(self):
        assert count_params(self.base(head="continuous"))["input_layer"] == 25_600_000

    def test_tied_input_layer(self):
        assert count_params(self.base(head="continuous", tied=True))["input_layer"] == 153_600


class TestBench:
    def small(self, head, v=400):
        return ModelConfig(src_vocab_size=v, tgt_vocab_size=v, hidden_size=16,
                           input_emb_size=8, output_vector_size=8, head=head,
                           max_sentence_length=16)

    def test_self_consistency(self):
        cfg = self.small("softmax")
        times = bench_step_time([("a", cfg, "ce"), ("b", cfg, "ce")],
                                batch_size=8, trials=15, warmup=2, src_len=5, tgt_len=5)
        ratio = times["a"] / times["b"]
        assert 0.9 <= ratio <= 1.1

    def test_continuous_config_runs(self):
        cfg = self.small("continuous")
        times = bench_step_time([("c", cfg, LossConfig(variant="nllvmf_reg1_reg2", m=8))],
                                batch_size=8, trials=3, warmup=1, src_len=5, tgt_len=5)
        assert times["c"] > 0

    def test_throughput_curve_shape(self):
        cfg = self.small("continuous")
        rows = throughput_curve(cfg, LossConfig(variant="nllvmf_reg1_reg2", m=8),
                                batch_sizes=[2, 4], trials=2, src_len=4, tgt_len=4)
        assert [r[0] for r in rows] == [2, 4]
        assert all(r[1] > 0 for r in rows)
        assert all(r[2] == "model" for r in rows)


class TestEvalReport:
    def test_json_and_table(self):
        rep = EvalReport(bleu=0.5, f1_by_bucket={"1": 0.25}, timings={"x": 10.0},
                         param_counts={"input_layer": 4, "output_layer": 2})
        js = rep.to_json(config_hash="abc")
        assert '"bleu": 0.5' in js and '"config_hash": "abc"' in js
        table = rep.to_table()
        assert "BLEU" in table and "F1 freq 1" in table and "params input_layer" in table

    def test_throughput_csv(self, tmp_path):
        p = tmp_path / "t.csv"
        evalbench.write_throughput_csv([(2, 10.0, "m")], p)
        lines = p.read_text().splitlines()
        assert lines[0] == "batch_size,samples_per_sec,config"
        assert lines[1].startswith("2,10.0")
