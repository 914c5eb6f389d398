"""Command-line entry points: train / translate / eval / bench.

Configuration is declarative: a line-based "key = value" file plus
``--set key=value`` flag overrides (flags win).  Unspecified keys fall back
to the reference defaults (hidden 1024, input embedding 512, output vector
300, learning rate 0.0005 for the continuous head and 0.0002 for the
softmax baseline, max sentence length 100).  The fully resolved
configuration is echoed to the output directory, and every artifact embeds
its SHA-256 hash: JSON artifacts inline, plain-text/CSV artifacts through a
``<name>.meta.json`` sidecar.

Training stops when the dev loss has not improved for `patience`
consecutive epochs (default 3) or at max_epochs.  Metrics are written as
JSON lines, one object per epoch, with no wall-clock fields, so a rerun
with identical config/seed/data is byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import typing
from dataclasses import dataclass

import numpy as np

from . import corpus, evalbench, seq2seq, tape
from .embed import (RESERVED_TOKENS, EmbeddingTable, build_unk_embedding,
                    load_embedding_table, reserved_vectors)
from .losses import VARIANTS, LossConfig
from .seq2seq import ModelConfig

__all__ = ["RunConfig", "parse_config", "run", "main"]


@dataclass
class RunConfig:
    # data
    train_src: str | None = None
    train_tgt: str | None = None
    dev_src: str | None = None
    dev_tgt: str | None = None
    test_src: str | None = None
    test_tgt: str | None = None
    embeddings: str | None = None
    dictionary: str | None = None
    checkpoint: str | None = None
    input_src: str | None = None
    output: str | None = None
    eval_hyp: str | None = None
    eval_ref: str | None = None
    out_dir: str = "runs/default"
    # model
    head: str = "continuous"
    hidden_size: int = 1024
    input_emb_size: int = 512
    output_vector_size: int = 300
    enc_layers: int = 1
    dec_layers: int = 2
    tied: bool = False
    max_sentence_length: int = 100
    # loss
    loss_variant: str = "nllvmf_reg1_reg2"
    lambda1: float = 0.02
    lambda2: float = 0.1
    gamma: float = 0.5
    # optimization
    lr: float | None = None
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 3
    vocab_cap: int = 50000
    clip_norm: float = 5.0
    seed: int = 0
    # bench
    bench_vocab_sizes: str = "5000,50000,200000"
    bench_batch_size: int = 64
    bench_trials: int = 5
    bench_src_len: int = 8
    bench_tgt_len: int = 8
    bench_batch_sizes: str = "16,32,64"

    def resolved_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        return 0.0005 if self.head == "continuous" else 0.0002

    def model_config(self, src_vocab_size: int, tgt_vocab_size: int) -> ModelConfig:
        return ModelConfig(
            src_vocab_size=src_vocab_size,
            tgt_vocab_size=tgt_vocab_size,
            hidden_size=self.hidden_size,
            input_emb_size=self.input_emb_size,
            output_vector_size=self.output_vector_size,
            enc_layers=self.enc_layers,
            dec_layers=self.dec_layers,
            tied=self.tied,
            head=self.head,
            max_sentence_length=self.max_sentence_length,
        )

    def loss_config(self):
        if self.head == "softmax":
            return "ce"
        return LossConfig(variant=self.loss_variant, m=self.output_vector_size,
                          lambda1=self.lambda1, lambda2=self.lambda2, gamma=self.gamma)


_FIELD_TYPES = typing.get_type_hints(RunConfig)


def _convert(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    if ftype in (str, typing.Optional[str], str | None):
        return raw or None
    if ftype in (float, typing.Optional[float], float | None):
        return float(raw) if raw else None
    if ftype is int:
        return int(raw)
    if ftype is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for {key!r}: {raw!r}")
    raise ValueError(f"unsupported config type for {key!r}")


def parse_config(path: str | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Resolve a RunConfig from a key=value file plus flag overrides.

    Unknown keys raise ValueError naming the key.  '#' starts a comment.
    """
    values: dict[str, object] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = (s.strip() for s in line.split("=", 1))
                if key not in _FIELD_TYPES:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _convert(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _convert(key, raw)
    cfg = RunConfig(**values)
    if cfg.head not in ("continuous", "softmax"):
        raise ValueError(f"head must be continuous|softmax, got {cfg.head!r}")
    if cfg.head == "continuous" and cfg.loss_variant not in VARIANTS:
        raise ValueError(f"unknown loss_variant {cfg.loss_variant!r}")
    return cfg


def config_hash(cfg: RunConfig) -> str:
    """Hash of the resolved configuration, minus the output location (the
    same experiment saved elsewhere keeps its identity)."""
    payload = dataclasses.asdict(cfg)
    payload.pop("out_dir")
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _echo_config(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    h = config_hash(cfg)
    payload = dict(dataclasses.asdict(cfg), config_hash=h)
    with open(os.path.join(cfg.out_dir, "config.resolved.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True) + "\n")
    return h


def _write_meta(path: str, h: str, cfg: RunConfig, **extra) -> None:
    meta = {"config_hash": h, "seed": cfg.seed}
    meta.update(extra)
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        value = getattr(cfg, key)
        if value is None:
            raise ValueError(f"config key {key!r} is required for this command")
        if key != "output" and not os.path.exists(value):
            raise FileNotFoundError(f"config key {key!r}: no such path {value!r}")


def build_aligned_table(cfg: RunConfig, tgt_vocab: corpus.Vocabulary) -> EmbeddingTable:
    """Embedding table whose row ids coincide with the target vocabulary.

    Words of the training vocabulary that lack a pre-trained embedding are
    dropped from the vocabulary upstream, so here every non-reserved word
    has a vector.  <unk> gets the mean embedding of words that are embedded
    but outside the training vocabulary.  Without an embeddings file
    (softmax baseline) the rows are seeded random unit vectors; they only
    serve as the id -> word map for decoding.
    """
    m = cfg.output_vector_size
    if cfg.embeddings is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        vecs = rng.standard_normal((len(tgt_vocab), m))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        return EmbeddingTable(tgt_vocab.words, vecs)
    full = load_embedding_table(cfg.embeddings)
    if full.dim != m:
        raise ValueError(f"embedding dim {full.dim} != output_vector_size {m}")
    unk_vec = build_unk_embedding(full, set(tgt_vocab.words))
    synth_rows = reserved_vectors(m)
    rows = np.empty((len(tgt_vocab), m))
    for i, w in enumerate(tgt_vocab.words):
        if w == "<unk>":
            rows[i] = unk_vec
        elif w in full:
            rows[i] = full.vector(w)
        elif w in synth_rows:
            rows[i] = synth_rows[w]
        else:
            raise ValueError(f"vocabulary word {w!r} has no embedding")
    return EmbeddingTable(tgt_vocab.words, rows)


def _restrict_to_embedded(vocab: corpus.Vocabulary, table: EmbeddingTable) -> corpus.Vocabulary:
    kept = [w for w in vocab.words[4:] if w in table]
    return corpus.Vocabulary(words=list(RESERVED_TOKENS) + kept,
                             freq={w: vocab.freq[w] for w in kept})


def _encode_pairs(pairs, src_vocab, tgt_vocab):
    return [(src_vocab.encode(s), tgt_vocab.encode(t)) for s, t in pairs]


def _evaluate_loss(model, batches, loss_cfg, table) -> float:
    total, weight = 0.0, 0
    with tape.no_grad():
        for batch in batches:
            outs = seq2seq.forward_teacher_forced(model, batch.src, batch.src_mask, batch.tgt_in)
            loss = seq2seq.sequence_loss(outs, batch.tgt_out, batch.tgt_mask, loss_cfg, table)
            n = int(np.sum(batch.tgt_mask.sum(axis=1) > 0))
            total += float(loss.data) * n
            weight += n
    return total / max(1, weight)


def _greedy_corpus(model, src_sentences, src_vocab, table, dictionary) -> list[list[str]]:
    hyps = []
    for tokens in src_sentences:
        ids = src_vocab.encode(tokens)
        words, attn = seq2seq.greedy_translate(model, ids, table)
        if words and words[-1] == "</s>":
            words = words[:-1]
            attn = attn[: len(words)]
        if dictionary is not None and tokens:
            words = corpus.replace_unks(words, tokens, attn[: len(words)], dictionary)
        hyps.append(words)
    return hyps


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "train_src", "train_tgt", "dev_src", "dev_tgt")
    if cfg.head == "continuous":
        _require(cfg, "embeddings")
    h = _echo_config(cfg)

    src_vocab = corpus.build_vocab(cfg.train_src, cap=cfg.vocab_cap)
    tgt_vocab = corpus.build_vocab(cfg.train_tgt, cap=cfg.vocab_cap)
    if cfg.embeddings is not None:
        full = load_embedding_table(cfg.embeddings)
        tgt_vocab = _restrict_to_embedded(tgt_vocab, full)
    table = build_aligned_table(cfg, tgt_vocab)

    train_pairs = _encode_pairs(corpus.read_parallel(cfg.train_src, cfg.train_tgt),
                                src_vocab, tgt_vocab)
    dev_pairs = _encode_pairs(corpus.read_parallel(cfg.dev_src, cfg.dev_tgt),
                              src_vocab, tgt_vocab)
    dev_refs = [t for _, t in corpus.read_parallel(cfg.dev_src, cfg.dev_tgt)]
    dev_src_tokens = [s for s, _ in corpus.read_parallel(cfg.dev_src, cfg.dev_tgt)]

    mcfg = cfg.model_config(len(src_vocab), len(tgt_vocab))
    loss_cfg = cfg.loss_config()
    model = seq2seq.init_model(mcfg, seed=cfg.seed, tied_table=table if cfg.tied else None)
    opt = tape.Adam(model.params, lr=cfg.resolved_lr(), clip_norm=cfg.clip_norm)
    dictionary = corpus.load_dictionary(cfg.dictionary) if cfg.dictionary else None

    metrics_path = os.path.join(cfg.out_dir, "metrics.jsonl")
    best_loss = float("inf")
    stale = 0
    with open(metrics_path, "w", encoding="utf-8") as metrics:
        for epoch in range(1, cfg.max_epochs + 1):
            batch_losses = []
            for i, batch in enumerate(corpus.make_batches(
                    train_pairs, cfg.batch_size, max_len=cfg.max_sentence_length,
                    seed=cfg.seed + epoch)):
                batch_losses.append(
                    seq2seq.train_batch(model, batch, loss_cfg, opt, table=table, batch_index=i))
            dev_batches = list(corpus.make_batches(
                dev_pairs, cfg.batch_size, max_len=cfg.max_sentence_length, seed=0))
            dev_loss = _evaluate_loss(model, dev_batches, loss_cfg, table)
            hyps = _greedy_corpus(model, dev_src_tokens, src_vocab, table, dictionary)
            dev_bleu = evalbench.bleu(hyps, dev_refs)
            record = {"config_hash": h, "dev_bleu": dev_bleu, "dev_loss": dev_loss,
                      "epoch": epoch, "seed": cfg.seed,
                      "train_loss": float(np.mean(batch_losses))}
            metrics.write(json.dumps(record, sort_keys=True) + "\n")
            if dev_loss < best_loss - 1e-12:
                best_loss = dev_loss
                stale = 0
                _save(model, cfg, h, src_vocab, tgt_vocab, table, "checkpoint.best")
            else:
                stale += 1
            if stale >= cfg.patience:
                break
    _save(model, cfg, h, src_vocab, tgt_vocab, table, "checkpoint.last")
    _write_meta(metrics_path, h, cfg)
    return 0


def _save(model, cfg, h, src_vocab, tgt_vocab, table, name) -> None:
    extra = {
        "config_hash": h,
        "seed": cfg.seed,
        "src_vocab": src_vocab.words,
        "tgt_vocab": tgt_vocab.words,
        "tgt_freq": tgt_vocab.freq,
        "loss_variant": cfg.loss_variant,
    }
    seq2seq.save_checkpoint(model, os.path.join(cfg.out_dir, name), extra=extra,
                            extra_arrays={"tgt_table": table.vectors})


def _load_run(path):
    model, extra, arrays = seq2seq.load_checkpoint(path)
    src_vocab = corpus.Vocabulary(words=list(extra["src_vocab"]))
    tgt_vocab = corpus.Vocabulary(words=list(extra["tgt_vocab"]),
                                  freq=dict(extra.get("tgt_freq", {})))
    table = EmbeddingTable(tgt_vocab.words, arrays["tgt_table"])
    return model, src_vocab, tgt_vocab, table, extra


def cmd_translate(cfg: RunConfig) -> int:
    _require(cfg, "checkpoint", "input_src")
    h = _echo_config(cfg)
    model, src_vocab, _, table, _ = _load_run(cfg.checkpoint)
    dictionary = corpus.load_dictionary(cfg.dictionary) if cfg.dictionary else None
    with open(cfg.input_src, "r", encoding="utf-8") as fh:
        sentences = [line.split() for line in fh.read().splitlines()]
    hyps = _greedy_corpus(model, sentences, src_vocab, table, dictionary)
    out_path = cfg.output or os.path.join(cfg.out_dir, "translations.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        for words in hyps:
            fh.write(" ".join(words) + "\n")
    _write_meta(out_path, h, cfg, checkpoint=cfg.checkpoint)
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "eval_hyp", "eval_ref", "train_tgt")
    h = _echo_config(cfg)
    with open(cfg.eval_hyp, "r", encoding="utf-8") as fh:
        hyps = [line.split() for line in fh.read().splitlines()]
    with open(cfg.eval_ref, "r", encoding="utf-8") as fh:
        refs = [line.split() for line in fh.read().splitlines()]
    train_vocab = corpus.build_vocab(cfg.train_tgt, cap=cfg.vocab_cap)
    report = evalbench.EvalReport(
        bleu=evalbench.bleu(hyps, refs),
        f1_by_bucket=evalbench.unigram_f1_by_freq(hyps, refs, train_vocab),
        param_counts=evalbench.count_params(cfg.model_config(
            src_vocab_size=len(train_vocab), tgt_vocab_size=len(train_vocab))),
    )
    json_path = os.path.join(cfg.out_dir, "eval_report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json(config_hash=h, seed=cfg.seed) + "\n")
    table_path = os.path.join(cfg.out_dir, "eval_report.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_table() + "\n")
    _write_meta(table_path, h, cfg)
    print(report.to_table())
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    h = _echo_config(cfg)
    vocab_sizes = [int(s) for s in cfg.bench_vocab_sizes.split(",") if s]
    configs = []
    for v in vocab_sizes:
        base = dict(src_vocab_size=max(v, 5), tgt_vocab_size=max(v, 5),
                    hidden_size=cfg.hidden_size, input_emb_size=cfg.input_emb_size,
                    output_vector_size=cfg.output_vector_size,
                    max_sentence_length=cfg.max_sentence_length)
        configs.append((f"softmax_v{v}", ModelConfig(head="softmax", **base), "ce"))
        configs.append((
            f"continuous_v{v}",
            ModelConfig(head="continuous", **base),
            LossConfig(variant=cfg.loss_variant if cfg.loss_variant != "max_margin" else "nllvmf_reg1_reg2",
                       m=cfg.output_vector_size, lambda1=cfg.lambda1, lambda2=cfg.lambda2),
        ))
    times = evalbench.bench_step_time(
        configs, batch_size=cfg.bench_batch_size, trials=cfg.bench_trials,
        src_len=cfg.bench_src_len, tgt_len=cfg.bench_tgt_len, seed=cfg.seed)
    steps_path = os.path.join(cfg.out_dir, "step_times.csv")
    with open(steps_path, "w", encoding="utf-8") as fh:
        fh.write("config,ms_per_batch\n")
        for name in sorted(times):
            fh.write(f"{name},{times[name]:.3f}\n")
    _write_meta(steps_path, h, cfg)

    batch_sizes = [int(s) for s in cfg.bench_batch_sizes.split(",") if s]
    v0 = vocab_sizes[len(vocab_sizes) // 2] if vocab_sizes else 50000
    rows = []
    for name, mc, lc in configs:
        if not name.endswith(f"_v{v0}"):
            continue
        rows.extend(evalbench.throughput_curve(
            mc, lc, batch_sizes, trials=max(1, cfg.bench_trials // 2),
            src_len=cfg.bench_src_len, tgt_len=cfg.bench_tgt_len, seed=cfg.seed, name=name))
    tput_path = os.path.join(cfg.out_dir, "throughput.csv")
    evalbench.write_throughput_csv(rows, tput_path)
    _write_meta(tput_path, h, cfg)
    for name in sorted(times):
        print(f"{name}: {times[name]:.1f} ms/batch")
    return 0


COMMANDS = {
    "train": cmd_train,
    "translate": cmd_translate,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def run(subcommand: str, cfg: RunConfig) -> int:
    """Execute one subcommand; returns the process exit status."""
    if subcommand not in COMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    return COMMANDS[subcommand](cfg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vmfseq", description=__doc__)
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable; wins over the file)")
    args = parser.parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            parser.error(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    try:
        cfg = parse_config(args.config, overrides)
        return run(args.subcommand, cfg)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"vmfseq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
