"""Sequence-to-sequence generation with continuous embedding outputs.

Subpackages:
    specfun   -- log-space Bessel kernels and the vMF normalizer
    losses    -- training losses over predicted output vectors
    embed     -- embedding tables, unk construction, nearest-neighbor decode
    tape      -- minimal reverse-mode autodiff used by the models
    seq2seq   -- BiLSTM encoder / attention decoder with softmax or
                 continuous output heads
    corpus    -- vocabulary, batching, dictionaries, unk replacement
    evalbench -- BLEU, frequency-bucketed F1, parameter counts, timings
    synth     -- deterministic synthetic tasks (copy, lexicon)
    cli       -- train / translate / eval / bench entry points
"""

__version__ = "0.1.0"
