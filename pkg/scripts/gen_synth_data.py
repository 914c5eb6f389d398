#!/usr/bin/env python3
"""Generate the bundled synthetic tasks (copy / lexicon) into a directory.

Example:
    python scripts/gen_synth_data.py copy data/copy --m 32
    python scripts/gen_synth_data.py lexicon data/lexicon --m 64 --pairs 2000
"""

import argparse

from vmfseq import synth


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("kind", choices=["copy", "lexicon"])
    ap.add_argument("out_dir")
    ap.add_argument("--m", type=int, default=32, help="embedding dimension")
    ap.add_argument("--pairs", type=int, default=None)
    ap.add_argument("--vocab", type=int, default=None)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    paths = synth.make_task_dir(args.kind, args.out_dir, m=args.m, seed=args.seed,
                                n_pairs=args.pairs, vocab_size=args.vocab)
    for key in sorted(paths):
        print(f"{key}: {paths[key]}")


if __name__ == "__main__":
    main()
