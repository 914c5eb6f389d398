#!/usr/bin/env python3
"""Race the continuous-output model against the softmax baseline on the
synthetic lexicon task: wall-clock seconds and epochs to each accuracy mark.

Example:
    python scripts/convergence_race.py --epochs 30
"""

import argparse
import time

import numpy as np

from vmfseq import corpus, seq2seq, synth, tape
from vmfseq.embed import RESERVED_TOKENS, EmbeddingTable
from vmfseq.losses import LossConfig


def train_curve(head, lr, variant, train_pairs, dev_pairs, vocab_sizes, table,
                m, hidden, input_emb, batch_size, epochs, seed=0, stop_at=0.9999):
    src_v, tgt_v = vocab_sizes
    cfg = seq2seq.ModelConfig(src_vocab_size=src_v, tgt_vocab_size=tgt_v,
                              hidden_size=hidden, input_emb_size=input_emb,
                              output_vector_size=m, head=head, max_sentence_length=20)
    model = seq2seq.init_model(cfg, seed=seed)
    loss_cfg = "ce" if head == "softmax" else LossConfig(variant=variant, m=m)
    opt = tape.Adam(model.params, lr=lr)
    t0 = time.perf_counter()
    curve = []
    for epoch in range(1, epochs + 1):
        for i, batch in enumerate(corpus.make_batches(train_pairs, batch_size, seed=seed + epoch)):
            seq2seq.train_batch(model, batch, loss_cfg, opt, table=table, batch_index=i)
        dev = list(corpus.make_batches(dev_pairs, batch_size, seed=0))
        acc = seq2seq.teacher_forced_accuracy(model, dev, table if head == "continuous" else None)
        curve.append((epoch, time.perf_counter() - t0, acc))
        print(f"  {head}: epoch {epoch:2d}  {curve[-1][1]:6.1f}s  dev acc {acc:.4f}")
        if acc >= stop_at:
            break
    return curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--vocab", type=int, default=100)
    ap.add_argument("--m", type=int, default=64)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--input-emb", type=int, default=32)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr-continuous", type=float, default=1e-2)
    ap.add_argument("--lr-softmax", type=float, default=5e-3)
    args = ap.parse_args()

    pairs, info = synth.lexicon_task(n_pairs=args.pairs, vocab_size=args.vocab, seed=11)
    n_train = int(0.9 * len(pairs))
    src_vocab = corpus.Vocabulary(words=list(RESERVED_TOKENS) + info["src_words"])
    tgt_vocab = corpus.Vocabulary(words=list(RESERVED_TOKENS) + info["tgt_words"])
    rng = np.random.Generator(np.random.PCG64(5))
    vecs = rng.standard_normal((len(tgt_vocab), args.m))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    table = EmbeddingTable(tgt_vocab.words, vecs)
    enc = [(src_vocab.encode(s), tgt_vocab.encode(t)) for s, t in pairs]
    train_pairs, dev_pairs = enc[:n_train], enc[n_train:]
    sizes = (len(src_vocab), len(tgt_vocab))

    print("continuous (NLLvMF_reg1+reg2):")
    cont = train_curve("continuous", args.lr_continuous, "nllvmf_reg1_reg2", train_pairs,
                       dev_pairs, sizes, table, args.m, args.hidden, args.input_emb,
                       args.batch, args.epochs)
    print("softmax baseline (CE):")
    ce = train_curve("softmax", args.lr_softmax, None, train_pairs, dev_pairs, sizes,
                     table, args.m, args.hidden, args.input_emb, args.batch, args.epochs)

    ce_final = max(a for _, _, a in ce)
    t_ce = next(t for _, t, a in ce if a >= ce_final)
    reach = [(e, t) for e, t, a in cont if a >= ce_final]
    if reach:
        e, t = reach[0]
        print(f"\nCE final dev acc {ce_final:.4f} reached by CE in {t_ce:.1f}s; "
              f"continuous reached it at epoch {e} in {t:.1f}s ({t_ce / t:.2f}x faster)")
    else:
        print(f"\ncontinuous never reached the CE final dev acc {ce_final:.4f}")


if __name__ == "__main__":
    main()
