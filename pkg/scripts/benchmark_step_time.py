#!/usr/bin/env python3
"""Per-batch training time: softmax head vs continuous head across vocab sizes.

Desk-scale version of the reference timing table / throughput figure.
Trials are interleaved across configurations, so bursty machine noise
cancels out of the comparison.

Example:
    python scripts/benchmark_step_time.py --vocab-sizes 5000,50000,200000 \
        --hidden 128 --batch 64 --trials 5 --out step_times.csv
"""

import argparse

from vmfseq.evalbench import bench_step_time, throughput_curve, write_throughput_csv
from vmfseq.losses import LossConfig
from vmfseq.seq2seq import ModelConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--vocab-sizes", default="5000,50000,200000")
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--input-emb", type=int, default=64)
    ap.add_argument("--m", type=int, default=300)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seq-len", type=int, default=8)
    ap.add_argument("--out", default=None, help="write step times CSV here")
    ap.add_argument("--throughput-out", default=None,
                    help="also sweep batch sizes 16,32,64 at the middle vocab size")
    args = ap.parse_args()

    vocab_sizes = [int(s) for s in args.vocab_sizes.split(",")]
    configs = []
    for v in vocab_sizes:
        base = dict(src_vocab_size=v, tgt_vocab_size=v, hidden_size=args.hidden,
                    input_emb_size=args.input_emb, output_vector_size=args.m)
        configs.append((f"softmax_v{v}", ModelConfig(head="softmax", **base), "ce"))
        configs.append((f"continuous_v{v}", ModelConfig(head="continuous", **base),
                        LossConfig(variant="nllvmf_reg1_reg2", m=args.m)))
    times = bench_step_time(configs, batch_size=args.batch, trials=args.trials,
                            src_len=args.seq_len, tgt_len=args.seq_len)
    for name in sorted(times):
        print(f"{name}: {times[name]:8.1f} ms/batch")
    for v in vocab_sizes:
        r = times[f"continuous_v{v}"] / times[f"softmax_v{v}"]
        print(f"continuous/softmax ratio at V={v}: {r:.3f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("config,ms_per_batch\n")
            for name in sorted(times):
                fh.write(f"{name},{times[name]:.3f}\n")
    if args.throughput_out:
        v0 = vocab_sizes[len(vocab_sizes) // 2]
        rows = []
        for name, cfg, lc in configs:
            if name.endswith(f"_v{v0}"):
                rows += throughput_curve(cfg, lc, [16, 32, 64], trials=max(1, args.trials // 2),
                                         src_len=args.seq_len, tgt_len=args.seq_len, name=name)
        write_throughput_csv(rows, args.throughput_out)


if __name__ == "__main__":
    main()
