"""BiLSTM encoder / attention decoder with pluggable output heads.

The architecture is the classic recurrent translation model: a one-layer
bidirectional LSTM encoder (half the hidden size per direction), a
two-layer LSTM decoder initialized from the final encoder state, Luong
"general" attention (bilinear score, no input feeding), and one of two
output heads on the attentional hidden state:

    softmax     logits = h W + b over the target vocabulary (O(V) per step)
    continuous  e_hat  = h W, an m-dimensional output vector (O(m) per step)

Training is teacher-forced.  The sequence loss is the mean over a
sentence's non-padding steps, then the mean over sentences, so the
regularizer weights are independent of batch size.  Decoding is greedy: the
continuous head maps e_hat to a word by nearest neighbor in the embedding
table and feeds the *mapped word* (not the raw vector) to the next step.

With tied embeddings the decoder input path is the frozen target embedding
table followed by a trainable bias-free linear adapter from the embedding
dimension to the input embedding size; the table itself is never updated.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import losses, tape
from .embed import BOS_ID, EOS_ID, PAD_ID, EmbeddingTable, nearest_word
from .losses import LossConfig

__all__ = [
    "ModelConfig",
    "StepOutput",
    "Seq2SeqModel",
    "init_model",
    "forward_teacher_forced",
    "sequence_loss",
    "train_batch",
    "greedy_translate",
    "teacher_forced_accuracy",
    "save_checkpoint",
    "load_checkpoint",
]

_CKPT_MAGIC = b"VMFSEQCKPT\x01\n"


@dataclass
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    hidden_size: int = 1024
    input_emb_size: int = 512
    output_vector_size: int = 300
    enc_layers: int = 1
    dec_layers: int = 2
    tied: bool = False
    head: str = "continuous"
    max_sentence_length: int = 100

    def __post_init__(self):
        for name in ("src_vocab_size", "tgt_vocab_size", "hidden_size",
                     "input_emb_size", "output_vector_size", "dec_layers",
                     "max_sentence_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.enc_layers != 1:
            raise ValueError("only a single (bidirectional) encoder layer is supported")
        if self.hidden_size % 2 != 0:
            raise ValueError("hidden_size must be even (split across encoder directions)")
        if self.head not in ("softmax", "continuous"):
            raise ValueError(f"head must be 'softmax' or 'continuous', got {self.head!r}")


@dataclass
class StepOutput:
    """One decoder step: attentional hidden state, attention weights over
    source positions, and the head output (logit or e_hat Tensor)."""

    hidden: np.ndarray
    attention: np.ndarray
    head_out: tape.Tensor


@dataclass
class _DecState:
    h: list[tape.Tensor]
    c: list[tape.Tensor]


def _param_spec(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    H, E, m = cfg.hidden_size, cfg.input_emb_size, cfg.output_vector_size
    Hh = H // 2
    spec: list[tuple[str, tuple[int, ...]]] = [("src_emb", (cfg.src_vocab_size, E))]
    if cfg.tied:
        spec.append(("dec_adapter", (m, E)))
    else:
        spec.append(("dec_emb", (cfg.tgt_vocab_size, E)))
    for d in ("fwd", "bwd"):
        spec += [(f"enc_{d}_Wx", (E, 4 * Hh)), (f"enc_{d}_Wh", (Hh, 4 * Hh)), (f"enc_{d}_b", (4 * Hh,))]
    for layer in range(cfg.dec_layers):
        in_dim = E if layer == 0 else H
        spec += [
            (f"dec_l{layer}_Wx", (in_dim, 4 * H)),
            (f"dec_l{layer}_Wh", (H, 4 * H)),
            (f"dec_l{layer}_b", (4 * H,)),
        ]
    spec += [("attn_Wa", (H, H)), ("attn_Wc", (2 * H, H))]
    if cfg.head == "softmax":
        spec += [("out_W", (H, cfg.tgt_vocab_size)), ("out_b", (cfg.tgt_vocab_size,))]
    else:
        spec += [("out_W", (H, m))]
    return spec


class Seq2SeqModel:
    """Parameter container plus the low-level encode/decode steps."""

    def __init__(self, cfg: ModelConfig, params: dict[str, tape.Tensor],
                 tied_table: np.ndarray | None = None):
        self.cfg = cfg
        self.params = params
        self.tied_table = tied_table
        if cfg.tied and tied_table is None:
            raise ValueError("tied model requires the fixed embedding table")

    # -- input paths -------------------------------------------------------
    def _embed_src(self, ids: np.ndarray) -> tape.Tensor:
        return tape.embedding_lookup(self.params["src_emb"], ids)

    def _embed_dec_input(self, ids: np.ndarray) -> tape.Tensor:
        if self.cfg.tied:
            fixed = tape.const(self.tied_table[np.asarray(ids, dtype=np.intp)])
            return tape.matmul(fixed, self.params["dec_adapter"])
        return tape.embedding_lookup(self.params["dec_emb"], ids)

    def _lstm_step(self, prefix: str, x: tape.Tensor, h: tape.Tensor, c: tape.Tensor,
                   width: int) -> tuple[tape.Tensor, tape.Tensor]:
        P = self.params
        gates = tape.add(
            tape.add(tape.matmul(x, P[f"{prefix}_Wx"]), tape.matmul(h, P[f"{prefix}_Wh"])),
            P[f"{prefix}_b"],
        )
        i = tape.sigmoid(tape.slice_cols(gates, 0, width))
        f = tape.sigmoid(tape.slice_cols(gates, width, 2 * width))
        g = tape.tanh(tape.slice_cols(gates, 2 * width, 3 * width))
        o = tape.sigmoid(tape.slice_cols(gates, 3 * width, 4 * width))
        c2 = tape.add(tape.mul(f, c), tape.mul(i, g))
        h2 = tape.mul(o, tape.tanh(c2))
        return h2, c2

    # -- encoder -----------------------------------------------------------
    def encode(self, src_ids: np.ndarray, src_mask: np.ndarray):
        """Run the bidirectional encoder.

        Returns (keys (B,S,H) Tensor, initial decoder state).  Final states
        are taken at each sentence's true last position by blending with
        the padding mask during the scan.
        """
        cfg = self.cfg
        src_ids = np.asarray(src_ids, dtype=np.intp)
        src_mask = np.asarray(src_mask, dtype=np.float64)
        B, S = src_ids.shape
        if S == 0 or np.any(src_mask.sum(axis=1) == 0):
            raise ValueError("empty source sequence")
        if S > cfg.max_sentence_length:
            raise ValueError(f"source length {S} exceeds max {cfg.max_sentence_length}")
        if np.any(src_ids < 0) or np.any(src_ids >= cfg.src_vocab_size):
            raise ValueError("source id out of range")
        Hh = cfg.hidden_size // 2

        xs = [self._embed_src(src_ids[:, s]) for s in range(S)]
        masks = [tape.const(src_mask[:, s : s + 1]) for s in range(S)]
        inv_masks = [tape.const(1.0 - src_mask[:, s : s + 1]) for s in range(S)]

        def scan(direction: str, order):
            h = tape.const(np.zeros((B, Hh)))
            c = tape.const(np.zeros((B, Hh)))
            states: dict[int, tape.Tensor] = {}
            for s in order:
                h2, c2 = self._lstm_step(f"enc_{direction}", xs[s], h, c, Hh)
                # hold the previous state on padded positions
                h = tape.add(tape.mul(h2, masks[s]), tape.mul(h, inv_masks[s]))
                c = tape.add(tape.mul(c2, masks[s]), tape.mul(c, inv_masks[s]))
                states[s] = h
            return states, h, c

        fwd_states, fwd_h, fwd_c = scan("fwd", range(S))
        bwd_states, bwd_h, bwd_c = scan("bwd", range(S - 1, -1, -1))

        keys = tape.stack_steps([tape.concat_cols([fwd_states[s], bwd_states[s]]) for s in range(S)])
        h0 = tape.concat_cols([fwd_h, bwd_h])
        c0 = tape.concat_cols([fwd_c, bwd_c])
        state = _DecState(h=[h0 for _ in range(cfg.dec_layers)],
                          c=[c0 for _ in range(cfg.dec_layers)])
        return keys, state

    # -- decoder -----------------------------------------------------------
    def decode_step(self, prev_ids: np.ndarray, state: _DecState, keys: tape.Tensor,
                    src_mask: np.ndarray):
        """One teacher-forced or free-running decoder step."""
        cfg = self.cfg
        H = cfg.hidden_size
        x = self._embed_dec_input(prev_ids)
        new_h, new_c = [], []
        inp = x
        for layer in range(cfg.dec_layers):
            h2, c2 = self._lstm_step(f"dec_l{layer}", inp, state.h[layer], state.c[layer], H)
            new_h.append(h2)
            new_c.append(c2)
            inp = h2
        top = new_h[-1]
        q = tape.matmul(top, self.params["attn_Wa"])
        alpha = tape.masked_softmax(tape.attn_scores(q, keys), src_mask)
        ctx = tape.attn_context(alpha, keys)
        h_tilde = tape.tanh(tape.matmul(tape.concat_cols([ctx, top]), self.params["attn_Wc"]))
        if cfg.head == "softmax":
            head_out = tape.add(tape.matmul(h_tilde, self.params["out_W"]), self.params["out_b"])
        else:
            head_out = tape.matmul(h_tilde, self.params["out_W"])
        step = StepOutput(hidden=h_tilde.data, attention=alpha.data, head_out=head_out)
        return step, _DecState(h=new_h, c=new_c)


def init_model(cfg: ModelConfig, seed: int, tied_table: EmbeddingTable | np.ndarray | None = None) -> Seq2SeqModel:
    """Fresh model with every parameter drawn U(-0.1, 0.1) from the seed.

    The draw order is fixed by the parameter spec, so the same seed gives
    bit-identical parameters.  A tied model freezes the provided table as
    the decoder input embedding and trains only the m -> input_emb adapter.
    """
    table_arr = None
    if tied_table is not None:
        table_arr = tied_table.vectors if isinstance(tied_table, EmbeddingTable) else np.asarray(tied_table)
    if cfg.tied:
        if table_arr is None:
            raise ValueError("tied=True requires tied_table")
        if table_arr.shape != (cfg.tgt_vocab_size, cfg.output_vector_size):
            raise ValueError(
                f"tied table shape {table_arr.shape} does not match "
                f"(tgt_vocab_size={cfg.tgt_vocab_size}, m={cfg.output_vector_size})"
            )
        table_arr = np.array(table_arr, dtype=np.float64)  # private frozen copy
        table_arr.setflags(write=False)
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {name: tape.param(rng.uniform(-0.1, 0.1, size=shape)) for name, shape in _param_spec(cfg)}
    return Seq2SeqModel(cfg, params, tied_table=table_arr if cfg.tied else None)


def forward_teacher_forced(model: Seq2SeqModel, src_ids: np.ndarray, src_mask: np.ndarray,
                           tgt_in: np.ndarray) -> list[StepOutput]:
    """Encode the source and decode consuming gold previous tokens.

    Returns one StepOutput per target position; an empty target gives [].
    """
    tgt_in = np.asarray(tgt_in, dtype=np.intp)
    B, T = tgt_in.shape
    if T == 0:
        return []
    if T > model.cfg.max_sentence_length + 1:
        raise ValueError(f"target length {T} exceeds max {model.cfg.max_sentence_length}")
    if np.any(tgt_in < 0) or np.any(tgt_in >= model.cfg.tgt_vocab_size):
        raise ValueError("target id out of range")
    keys, state = model.encode(src_ids, src_mask)
    outputs = []
    for t in range(T):
        step, state = model.decode_step(tgt_in[:, t], state, keys, src_mask)
        outputs.append(step)
    return outputs


def _sequence_weights(tgt_mask: np.ndarray) -> np.ndarray:
    """Per-token weights implementing mean-over-steps then mean-over-batch."""
    tgt_mask = np.asarray(tgt_mask, dtype=np.float64)
    tokens = tgt_mask.sum(axis=1)
    valid = tokens > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        return np.zeros_like(tgt_mask)
    safe = np.where(valid, tokens, 1.0)
    return tgt_mask / safe[:, None] / n_valid


def _ce_loss_node(logit_steps: list[tape.Tensor], tgt_out: np.ndarray, weights: np.ndarray) -> tape.Tensor:
    B = tgt_out.shape[0]
    rows = np.arange(B)
    total = 0.0
    lses = []
    for t, lt in enumerate(logit_steps):
        z = lt.data
        mx = z.max(axis=1, keepdims=True)
        lse = mx + np.log(np.sum(np.exp(z - mx), axis=1, keepdims=True))
        total += float(np.sum(weights[:, t] * (lse[:, 0] - z[rows, tgt_out[:, t]])))
        lses.append(lse)

    def bwd(g):
        s = float(g)
        for t, lt in enumerate(logit_steps):
            p = np.exp(lt.data - lses[t])
            gl = p * weights[:, t][:, None]
            gl[rows, tgt_out[:, t]] -= weights[:, t]
            tape._acc(lt, gl * s)

    return tape.custom_op(tuple(logit_steps), np.float64(total), bwd)


def _continuous_loss_node(ehat_steps: list[tape.Tensor], tgt_out: np.ndarray, weights: np.ndarray,
                          table: EmbeddingTable, cfg: LossConfig) -> tape.Tensor:
    total = 0.0
    grads = []
    for t, et in enumerate(ehat_steps):
        values, g = losses.batch_loss(et.data, tgt_out[:, t], table, cfg)
        total += float(np.sum(weights[:, t] * values))
        grads.append(g * weights[:, t][:, None])

    def bwd(g):
        s = float(g)
        for t, et in enumerate(ehat_steps):
            tape._acc(et, grads[t] * s)

    return tape.custom_op(tuple(ehat_steps), np.float64(total), bwd)


def sequence_loss(outputs: list[StepOutput], tgt_out: np.ndarray, tgt_mask: np.ndarray,
                  loss_cfg: LossConfig | str, table: EmbeddingTable | None = None) -> tape.Tensor:
    """Scalar training loss over a teacher-forced forward pass.

    loss_cfg is either the string "ce" (softmax head) or a LossConfig for
    the continuous head, which also needs the target embedding table.
    Padding positions carry zero weight.
    """
    weights = _sequence_weights(tgt_mask)
    heads = [o.head_out for o in outputs]
    if loss_cfg == "ce":
        return _ce_loss_node(heads, np.asarray(tgt_out, dtype=np.intp), weights)
    if not isinstance(loss_cfg, LossConfig):
        raise ValueError(f"loss_cfg must be 'ce' or LossConfig, got {loss_cfg!r}")
    if table is None:
        raise ValueError("continuous losses need the target embedding table")
    return _continuous_loss_node(heads, np.asarray(tgt_out, dtype=np.intp), weights, table, loss_cfg)


def train_batch(model: Seq2SeqModel, batch, loss_cfg: LossConfig | str, optimizer: tape.Adam,
                table: EmbeddingTable | None = None, batch_index: int | None = None) -> float:
    """One forward/backward/update step; returns the scalar loss.

    An all-padding batch returns 0.0 and leaves parameters untouched.  A
    non-finite loss is reported on stderr (with the batch index) and the
    update is skipped.
    """
    if float(np.sum(batch.tgt_mask)) == 0.0:
        return 0.0

    def skip(value: float) -> float:
        print(json.dumps({"event": "non_finite_loss", "batch_index": batch_index,
                          "loss": repr(value)}), file=sys.stderr)
        optimizer.zero_grad()
        return value

    optimizer.zero_grad()
    outputs = forward_teacher_forced(model, batch.src, batch.src_mask, batch.tgt_in)
    if any(not np.all(np.isfinite(o.head_out.data)) for o in outputs):
        return skip(float("nan"))
    loss = sequence_loss(outputs, batch.tgt_out, batch.tgt_mask, loss_cfg, table)
    value = float(loss.data)
    if not np.isfinite(value):
        return skip(value)
    tape.backward(loss)
    optimizer.step()
    optimizer.zero_grad()
    return value


def greedy_translate(model: Seq2SeqModel, src_ids, table: EmbeddingTable,
                     forbidden_ids=(BOS_ID, PAD_ID)):
    """Greedy decode of a single source sentence.

    Continuous head: predict e_hat, map via nearest neighbor over the
    table, feed the mapped word's embedding to the next step.  Softmax
    head: argmax of the step distribution.  Both heads bar <s> and <pad>
    from being emitted.  Stops at </s> or max_sentence_length.  Returns
    (words, attention matrix with one row per emitted word).
    """
    src_ids = np.asarray(list(src_ids), dtype=np.intp)
    S = src_ids.shape[0]
    if S == 0:
        return [table.words[EOS_ID]], np.zeros((1, 0))
    src = src_ids[None, :]
    mask = np.ones((1, S))
    words: list[str] = []
    attn_rows: list[np.ndarray] = []
    forbidden = list(forbidden_ids)
    with tape.no_grad():
        keys, state = model.encode(src, mask)
        prev = np.array([BOS_ID], dtype=np.intp)
        for _ in range(model.cfg.max_sentence_length):
            step, state = model.decode_step(prev, state, keys, mask)
            if model.cfg.head == "softmax":
                logits = step.head_out.data[0].copy()
                logits[forbidden] = -np.inf
                wid = int(np.argmax(logits))
            else:
                e_hat = step.head_out.data[0]
                if np.linalg.norm(e_hat) == 0.0:
                    raise ValueError("zero-norm prediction during decoding")
                wid = nearest_word(e_hat, table, exclude_ids=forbidden).word_id
            words.append(table.words[wid])
            attn_rows.append(step.attention[0])
            if wid == EOS_ID:
                break
            prev = np.array([wid], dtype=np.intp)
    return words, np.vstack(attn_rows)


def teacher_forced_accuracy(model: Seq2SeqModel, batches, table: EmbeddingTable | None = None) -> float:
    """Fraction of non-padding target tokens predicted exactly under
    teacher forcing (argmax logits, or nearest table row for e_hat)."""
    correct = 0
    total = 0
    with tape.no_grad():
        for batch in batches:
            outputs = forward_teacher_forced(model, batch.src, batch.src_mask, batch.tgt_in)
            for t, step in enumerate(outputs):
                if model.cfg.head == "softmax":
                    pred = np.argmax(step.head_out.data, axis=1)
                else:
                    pred = np.argmax(step.head_out.data @ table.vectors.T, axis=1)
                m = batch.tgt_mask[:, t] > 0
                correct += int(np.sum((pred == batch.tgt_out[:, t]) & m))
                total += int(np.sum(m))
    return correct / max(1, total)


def save_checkpoint(model: Seq2SeqModel, path, extra: dict | None = None,
                    extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    """Versioned checkpoint: magic, JSON header, little-endian float64
    tensors in row-major order.  Byte-deterministic for a fixed model."""
    arrays: list[tuple[str, np.ndarray]] = [(n, model.params[n].data) for n, _ in _param_spec(model.cfg)]
    if model.tied_table is not None:
        arrays.append(("__tied_table__", model.tied_table))
    for name in sorted(extra_arrays or {}):
        arrays.append((f"__extra__{name}", (extra_arrays or {})[name]))
    header = {
        "version": 1,
        "endianness": "little",
        "dtype": "float64",
        "model_config": asdict(model.cfg),
        "extra": extra or {},
        "manifest": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint.

    Returns (model, extra dict, extra arrays dict).
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a vmfseq checkpoint: {path}")
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
        cfg = ModelConfig(**header["model_config"])
        params: dict[str, tape.Tensor] = {}
        tied = None
        extra_arrays: dict[str, np.ndarray] = {}
        for entry in header["manifest"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(n * 8), dtype="<f8").reshape(shape).astype(np.float64)
            name = entry["name"]
            if name == "__tied_table__":
                tied = arr
            elif name.startswith("__extra__"):
                extra_arrays[name[len("__extra__"):]] = arr
            else:
                params[name] = tape.param(arr)
    model = Seq2SeqModel(cfg, params, tied_table=tied)
    return model, header.get("extra", {}), extra_arrays
