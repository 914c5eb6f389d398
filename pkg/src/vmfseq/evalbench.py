"""BLEU, frequency-bucketed unigram F1, parameter counts, step timings.

BLEU is corpus-level BLEU-4: clipped modified n-gram precisions for
n = 1..4, geometric mean, brevity penalty exp(1 - r/c) when c < r, no
smoothing (any zero precision gives 0), single reference, case-sensitive.
Values are in [0, 1].

Unigram F1 is micro-averaged per training-frequency bucket
{1, 2, 3, 4, 5-9, 10-99, 100-999, 1000+}: per sentence pair and word type,
the matched count is min(produced, reference occurrences); precision is
matched/produced, recall matched/reference over the corpus.  Words that
never occur in the training corpus are excluded.

The step-time benchmark trains identical synthetic batches through model
configurations and reports median per-batch milliseconds (median, not
mean: robust to scheduler noise) plus a samples-per-second curve over
batch sizes.
"""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import seq2seq, tape
from .corpus import Batch, Vocabulary
from .embed import EmbeddingTable
from .losses import LossConfig
from .seq2seq import ModelConfig

__all__ = [
    "BUCKETS",
    "bleu",
    "unigram_f1_by_freq",
    "unigram_counts_by_freq",
    "count_params",
    "bench_step_time",
    "throughput_curve",
    "write_throughput_csv",
    "EvalReport",
]

# (label, low, high) over training-corpus frequency; partition of [1, inf)
BUCKETS = (
    ("1", 1, 1),
    ("2", 2, 2),
    ("3", 3, 3),
    ("4", 4, 4),
    ("5-9", 5, 9),
    ("10-99", 10, 99),
    ("100-999", 100, 999),
    ("1000+", 1000, None),
)


def _bucket_of(freq: int) -> str | None:
    if freq < 1:
        return None
    for label, lo, hi in BUCKETS:
        if freq >= lo and (hi is None or freq <= hi):
            return label
    return None


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references) -> float:
    """Corpus BLEU-4 in [0, 1]; see module docstring for the conventions."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference counts differ")
    if not references or all(len(r) == 0 for r in references):
        raise ValueError("empty reference set")
    matched = [0] * 4
    produced = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hc = _ngrams(hyp, n)
            rc = _ngrams(ref, n)
            produced[n - 1] += max(0, len(hyp) - n + 1)
            matched[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
    if any(p == 0 or m == 0 for p, m in zip(produced, matched)):
        return 0.0
    log_prec = sum(np.log(m / p) for m, p in zip(matched, produced)) / 4.0
    bp = 1.0 if hyp_len >= ref_len else float(np.exp(1.0 - ref_len / hyp_len))
    return float(bp * np.exp(log_prec))


def unigram_counts_by_freq(hypotheses, references, train_vocab: Vocabulary):
    """Per-bucket (matched, produced, reference) clipped unigram counts."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference counts differ")
    counts = {label: [0, 0, 0] for label, _, _ in BUCKETS}
    for hyp, ref in zip(hypotheses, references):
        hc = Counter(hyp)
        rc = Counter(ref)
        for word in set(hc) | set(rc):
            label = _bucket_of(train_vocab.freq.get(word, 0))
            if label is None:
                continue
            h, r = hc[word], rc[word]
            counts[label][0] += min(h, r)
            counts[label][1] += h
            counts[label][2] += r
    return counts


def unigram_f1_by_freq(hypotheses, references, train_vocab: Vocabulary) -> dict[str, float]:
    """Micro-averaged unigram F1 per training-frequency bucket.

    Buckets with neither produced nor reference occurrences are absent
    from the result.
    """
    counts = unigram_counts_by_freq(hypotheses, references, train_vocab)
    out: dict[str, float] = {}
    for label, (m, p, r) in counts.items():
        if p == 0 and r == 0:
            continue
        prec = m / p if p else 0.0
        rec = m / r if r else 0.0
        out[label] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return out


def count_params(cfg: ModelConfig) -> dict[str, int]:
    """Input/output layer parameter counts (weight matrices only, no
    biases): softmax output V*H vs continuous H*m; untied input
    V*input_emb vs tied m*input_emb."""
    if cfg.head == "softmax":
        output = cfg.tgt_vocab_size * cfg.hidden_size
    else:
        output = cfg.hidden_size * cfg.output_vector_size
    if cfg.tied:
        inp = cfg.output_vector_size * cfg.input_emb_size
    else:
        inp = cfg.tgt_vocab_size * cfg.input_emb_size
    return {"input_layer": inp, "output_layer": output}


def _synthetic_batch(cfg: ModelConfig, batch_size: int, src_len: int, tgt_len: int,
                     rng: np.random.Generator) -> Batch:
    src = rng.integers(4, cfg.src_vocab_size, size=(batch_size, src_len))
    tgt = rng.integers(4, cfg.tgt_vocab_size, size=(batch_size, tgt_len))
    tgt_in = np.concatenate([np.zeros((batch_size, 1), dtype=np.intp), tgt[:, :-1]], axis=1)
    return Batch(src=src.astype(np.intp), src_mask=np.ones((batch_size, src_len)),
                 tgt_in=tgt_in.astype(np.intp), tgt_out=tgt.astype(np.intp),
                 tgt_mask=np.ones((batch_size, tgt_len)))


def _random_unit_table(v: int, m: int, rng: np.random.Generator) -> EmbeddingTable:
    vecs = rng.standard_normal((v, m))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return EmbeddingTable([f"w{i}" for i in range(v)], vecs)


def bench_step_time(configs, batch_size: int = 64, trials: int = 5, warmup: int = 1,
                    src_len: int = 8, tgt_len: int = 8, seed: int = 0,
                    lr: float = 5e-4, return_trials: bool = False):
    """Median per-batch training time (ms) for each named configuration.

    configs: iterable of (name, ModelConfig, LossConfig-or-"ce").  Every
    configuration trains on identical-seed synthetic batches.  Trials are
    interleaved round-robin across configurations, and the order inside
    each round rotates, so both bursty machine noise and periodic
    throttling (which can phase-lock onto a fixed round order) hit every
    configuration alike; warmup rounds are excluded.

    With return_trials=True also returns {name: [ms per round]} so callers
    can compare configurations round-by-round (measurements in the same
    round share the machine-noise environment).
    """
    setups = []
    for name, cfg, loss_cfg in configs:
        rng = np.random.Generator(np.random.PCG64(seed))
        batch = _synthetic_batch(cfg, batch_size, src_len, tgt_len, rng)
        table = None
        if loss_cfg != "ce":
            table = _random_unit_table(cfg.tgt_vocab_size, cfg.output_vector_size, rng)
        model = seq2seq.init_model(cfg, seed=seed)
        opt = tape.Adam(model.params, lr=lr)
        setups.append((name, model, batch, loss_cfg, opt, table, []))
    # pin to a single BLAS thread: on small shared machines the
    # multi-thread synchronization barrier amplifies scheduler noise
    with threadpool_limits(limits=1):
        for i in range(warmup + trials):
            rotated = setups[i % len(setups):] + setups[:i % len(setups)]
            for name, model, batch, loss_cfg, opt, table, times in rotated:
                t0 = time.perf_counter()
                seq2seq.train_batch(model, batch, loss_cfg, opt, table=table, batch_index=i)
                elapsed = (time.perf_counter() - t0) * 1000.0
                if i >= warmup:
                    times.append(elapsed)
    results: dict[str, float] = {}
    raw: dict[str, list[float]] = {}
    for name, _, _, _, _, _, times in setups:
        med = float(np.median(times))
        if not np.isfinite(med):
            raise ArithmeticError(f"non-finite timing for config {name!r}")
        results[name] = med
        raw[name] = list(times)
    if return_trials:
        return results, raw
    return results


def throughput_curve(cfg: ModelConfig, loss_cfg, batch_sizes, trials: int = 3,
                     src_len: int = 8, tgt_len: int = 8, seed: int = 0,
                     name: str = "model") -> list[tuple[int, float, str]]:
    """Samples/second as a function of batch size, for the throughput plot.

    Returns rows (batch_size, samples_per_sec, config name).
    """
    rows = []
    for bs in batch_sizes:
        ms = bench_step_time([(name, cfg, loss_cfg)], batch_size=bs, trials=trials,
                             src_len=src_len, tgt_len=tgt_len, seed=seed)[name]
        rows.append((int(bs), float(bs / (ms / 1000.0)), name))
    return rows


@dataclass
class EvalReport:
    """Evaluation bundle: BLEU, bucketed F1, timings, parameter counts."""

    bleu: float
    f1_by_bucket: dict[str, float] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    param_counts: dict[str, int] = field(default_factory=dict)

    def to_json(self, **extra) -> str:
        payload = {
            "bleu": self.bleu,
            "f1_by_bucket": self.f1_by_bucket,
            "timings": self.timings,
            "param_counts": self.param_counts,
        }
        payload.update(extra)
        return json.dumps(payload, sort_keys=True)

    def to_table(self) -> str:
        lines = [f"{'metric':<24}{'value':>14}", "-" * 38]
        lines.append(f"{'BLEU':<24}{self.bleu:>14.4f}")
        for label, _, _ in BUCKETS:
            if label in self.f1_by_bucket:
                lines.append(f"{'F1 freq ' + label:<24}{self.f1_by_bucket[label]:>14.4f}")
        for k in sorted(self.param_counts):
            lines.append(f"{'params ' + k:<24}{self.param_counts[k]:>14d}")
        for k in sorted(self.timings):
            lines.append(f"{'ms/batch ' + k:<24}{self.timings[k]:>14.2f}")
        return "\n".join(lines)


def write_throughput_csv(rows, path) -> None:
    """CSV (batch_size, samples_per_sec, config) for the throughput plot."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("batch_size,samples_per_sec,config\n")
        for bs, sps, name in rows:
            fh.write(f"{bs},{sps:.6f},{name}\n")
