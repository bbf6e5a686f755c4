"""Encoder-decoder translator from Spanish text to LSE gloss sequences.

A single LSTM layer encodes the source sentence; its final (a, c) state seeds
the decoder LSTM, whose hidden activations feed a softmax head over the target
vocabulary. Input and output lengths are unrelated: the decoder starts from
SOS and runs until it emits EOS. Training is stochastic (one pair per update),
teacher forced, with per-token loss normalization, global-norm gradient
clipping, and RMSprop.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rnn
from .corpus import CorpusPair, ParallelCorpus, split_train_val
from .errors import TrainingDiverged
from .io_utils import atomic_write_bytes, atomic_write_text
from .tokenizer import EOS, PAD, SOS, Vocabulary, build_vocab, decode, encode_one_hot, tokenize

CHECKPOINT_VERSION = 1


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-4
    epochs: int = 100
    rmsprop_beta: float = 0.9
    val_fraction: float = 0.2
    seed: int = 0
    max_decode_len: int = 12
    n_hidden: int = 256
    clip_norm: float = 5.0
    forget_bias: float = 1.0
    init_scale: float | None = None
    tanh_output_gate: bool = False
    reverse_source: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.max_decode_len < 1 or self.n_hidden < 1:
            raise ValueError("max_decode_len and n_hidden must be positive")


@dataclass
class LossHistory:
    """Per-epoch mean cross-entropy per target token; val is empty without a split."""

    train: list[float] = field(default_factory=list)
    val: list[float] = field(default_factory=list)


@dataclass
class Seq2SeqModel:
    encoder: rnn.LstmParams
    decoder: rnn.LstmParams
    head: rnn.SoftmaxHead
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    n_hidden: int
    max_decode_len: int = 12
    tanh_output_gate: bool = False
    reverse_source: bool = False

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            **self.encoder.arrays("enc."),
            **self.decoder.arrays("dec."),
            **self.head.arrays("head."),
        }


def build_model(src_vocab: Vocabulary, tgt_vocab: Vocabulary, config: TrainingConfig,
                rng: np.random.Generator) -> Seq2SeqModel:
    encoder = rnn.init_lstm_params(len(src_vocab), config.n_hidden, rng,
                                   config.forget_bias, config.init_scale)
    decoder = rnn.init_lstm_params(len(tgt_vocab), config.n_hidden, rng,
                                   config.forget_bias, config.init_scale)
    head = rnn.init_head(config.n_hidden, len(tgt_vocab), rng, config.init_scale)
    return Seq2SeqModel(encoder, decoder, head, src_vocab, tgt_vocab, config.n_hidden,
                        config.max_decode_len, config.tanh_output_gate, config.reverse_source)


def encode_source(model: Seq2SeqModel, src_indices: list[int]) -> rnn.LstmState:
    """Run the encoder and return its final state (zero state for empty input)."""
    if model.reverse_source:
        src_indices = list(reversed(src_indices))
    inputs = encode_one_hot(src_indices, model.src_vocab)
    states, _ = rnn.lstm_forward(inputs, rnn.zero_state(model.n_hidden),
                                 model.encoder, model.tanh_output_gate)
    return states[-1]


def greedy_decode(model: Seq2SeqModel, state: rnn.LstmState,
                  max_len: int | None = None) -> list[int]:
    """Argmax decoding from SOS until EOS or the length cap; PAD/SOS are masked out."""
    if max_len is None:
        max_len = model.max_decode_len
    tgt = model.tgt_vocab
    banned = [tgt.index[PAD], tgt.index[SOS]]
    eos = tgt.index[EOS]
    out: list[int] = []
    prev = tgt.index[SOS]
    state = state.copy()
    for _ in range(max_len):
        x = np.zeros(len(tgt))
        x[prev] = 1.0
        state, _ = rnn.lstm_cell_forward(x, state, model.decoder, model.tanh_output_gate)
        logits = model.head.w @ state.a + model.head.b
        logits[banned] = -np.inf
        prev = int(np.argmax(logits))
        if prev == eos:
            break
        out.append(prev)
    return out


def translate(model: Seq2SeqModel, text: str) -> list[str]:
    """Translate one sentence into surface gloss tokens."""
    src_indices = model.src_vocab.encode(tokenize(text))
    indices = greedy_decode(model, encode_source(model, src_indices))
    return decode(indices, model.tgt_vocab)


def _teacher_inputs(model: Seq2SeqModel, pair: CorpusPair) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """(encoder one-hots, decoder one-hots, decoder targets) for one pair."""
    src = model.src_vocab.encode(tokenize(pair.source))
    if model.reverse_source:
        src = list(reversed(src))
    tgt = model.tgt_vocab.encode(list(pair.target))
    sos, eos = model.tgt_vocab.index[SOS], model.tgt_vocab.index[EOS]
    dec_in = [sos] + tgt
    targets = tgt + [eos]
    return (encode_one_hot(src, model.src_vocab),
            encode_one_hot(dec_in, model.tgt_vocab),
            targets)


def _pair_forward(model: Seq2SeqModel, enc_in: np.ndarray, dec_in: np.ndarray,
                  targets: list[int], with_grads: bool):
    """Teacher-forced loss for one pair, optionally with gradients of the summed loss."""
    flag = model.tanh_output_gate
    enc_states, enc_caches = rnn.lstm_forward(enc_in, rnn.zero_state(model.n_hidden),
                                              model.encoder, flag)
    final = enc_states[-1]
    dec_init = rnn.LstmState(final.a.copy(), final.c.copy())
    dec_states, dec_caches = rnn.lstm_forward(dec_in, dec_init, model.decoder, flag)

    loss = 0.0
    d_as: list[np.ndarray | None] = []
    head_grads = rnn.zeros_like_head(model.head) if with_grads else None
    for t, target in enumerate(targets):
        a = dec_states[t + 1].a
        pred = rnn.softmax_predict(a, model.head)
        loss += rnn.cross_entropy(pred, target)
        if with_grads:
            d_logits = rnn.cross_entropy_logit_grad(pred, target)
            head_grads.w += np.outer(d_logits, a)
            head_grads.b += d_logits
            d_as.append(model.head.w.T @ d_logits)
    if not with_grads:
        return None, loss

    dec_grads = rnn.zeros_like_lstm(model.decoder)
    d_a0, d_c0 = rnn.lstm_backward(d_as, dec_caches, model.decoder, dec_grads,
                                   tanh_output_gate=flag)
    enc_grads = rnn.zeros_like_lstm(model.encoder)
    rnn.lstm_backward([None] * len(enc_caches), enc_caches, model.encoder, enc_grads,
                      d_a_final=d_a0, d_c_final=d_c0, tanh_output_gate=flag)
    grads = {**enc_grads.arrays("enc."), **dec_grads.arrays("dec."), **head_grads.arrays("head.")}
    return grads, loss


def pair_loss(model: Seq2SeqModel, pair: CorpusPair) -> tuple[float, int]:
    """Teacher-forced cross-entropy of one pair (summed) and its target token count."""
    enc_in, dec_in, targets = _teacher_inputs(model, pair)
    _, loss = _pair_forward(model, enc_in, dec_in, targets, with_grads=False)
    return loss, len(targets)


def _corpus_loss(model: Seq2SeqModel, prepared) -> float:
    total, tokens = 0.0, 0
    for enc_in, dec_in, targets in prepared:
        _, loss = _pair_forward(model, enc_in, dec_in, targets, with_grads=False)
        total += loss
        tokens += len(targets)
    return total / tokens


def train(corpus: ParallelCorpus, config: TrainingConfig) -> tuple[Seq2SeqModel, LossHistory]:
    """Train a fresh model; deterministic and bit-reproducible for a fixed seed.

    Vocabularies come from the full corpus so validation pairs never hit UNK;
    each epoch visits the training pairs in a freshly shuffled order.
    """
    src_vocab = build_vocab(corpus, "source")
    tgt_vocab = build_vocab(corpus, "target")
    train_set, val_set = split_train_val(corpus, config.val_fraction, config.seed)
    if len(train_set) == 0:
        raise ValueError("training split is empty")

    rng = np.random.default_rng(config.seed)
    model = build_model(src_vocab, tgt_vocab, config, rng)
    params = model.parameters()
    opt = rnn.RmspropState.for_params(params)

    train_prepared = [_teacher_inputs(model, p) for p in train_set]
    val_prepared = [_teacher_inputs(model, p) for p in val_set]

    history = LossHistory()
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_prepared))
        total_loss, total_tokens = 0.0, 0
        for i in order:
            enc_in, dec_in, targets = train_prepared[i]
            grads, loss = _pair_forward(model, enc_in, dec_in, targets, with_grads=True)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1}, pair {int(i)}: {loss}")
            scale = 1.0 / len(targets)
            for g in grads.values():
                g *= scale
            rnn.clip_gradients(grads, config.clip_norm)
            rnn.rmsprop_step(params, grads, opt, config.learning_rate, config.rmsprop_beta)
            total_loss += loss
            total_tokens += len(targets)
        history.train.append(total_loss / total_tokens)
        if val_prepared:
            val_loss = _corpus_loss(model, val_prepared)
            if not math.isfinite(val_loss):
                raise TrainingDiverged(f"non-finite validation loss at epoch {epoch + 1}")
            history.val.append(val_loss)
    return model, history


@dataclass
class EvalMetrics:
    exact_match_rate: float
    token_accuracy: float
    n_pairs: int


def evaluate(model: Seq2SeqModel, corpus: ParallelCorpus) -> EvalMetrics:
    """Exact sequence matches and per-position token accuracy against gold glosses.

    Token accuracy is micro-averaged over gold positions; a prediction shorter
    than the gold sequence scores misses for the truncated positions.
    """
    if len(corpus) == 0:
        raise ValueError("cannot evaluate on an empty corpus")
    exact = 0
    matched, gold_total = 0, 0
    for pair in corpus:
        pred = translate(model, pair.source)
        gold = list(pair.target)
        if pred == gold:
            exact += 1
        matched += sum(1 for a, b in zip(pred, gold) if a == b)
        gold_total += len(gold)
    return EvalMetrics(exact / len(corpus), matched / gold_total, len(corpus))


def save_loss_csv(history: LossHistory, path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss"]
    for i, tr in enumerate(history.train):
        val = f"{history.val[i]:.10g}" if i < len(history.val) else ""
        lines.append(f"{i + 1},{tr:.10g},{val}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def save_model(model: Seq2SeqModel, path: str | Path) -> None:
    """Checkpoint: npz with all matrices plus a JSON metadata entry (versioned)."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "n_hidden": model.n_hidden,
        "max_decode_len": model.max_decode_len,
        "tanh_output_gate": model.tanh_output_gate,
        "reverse_source": model.reverse_source,
        "src_tokens": list(model.src_vocab.tokens),
        "tgt_tokens": list(model.tgt_vocab.tokens),
    }
    buf = io.BytesIO()
    np.savez(buf, meta=np.str_(json.dumps(meta)), **model.parameters())
    atomic_write_bytes(Path(path), buf.getvalue())


def load_model(path: str | Path) -> Seq2SeqModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model checkpoint not found: {path}")
    with np.load(path) as data:
        if "meta" not in data:
            raise ValueError(f"{path}: not a model checkpoint (missing metadata)")
        meta = json.loads(str(data["meta"]))
        version = meta.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
        arrays = {k: data[k] for k in data.files if k != "meta"}
    src_vocab = Vocabulary(tuple(meta["src_tokens"]),
                           {t: i for i, t in enumerate(meta["src_tokens"])})
    tgt_vocab = Vocabulary(tuple(meta["tgt_tokens"]),
                           {t: i for i, t in enumerate(meta["tgt_tokens"])})
    encoder = rnn.LstmParams(*(arrays[f"enc.{n}"] for n in
                               ("w_c", "w_u", "w_f", "w_o", "b_c", "b_u", "b_f", "b_o")))
    decoder = rnn.LstmParams(*(arrays[f"dec.{n}"] for n in
                               ("w_c", "w_u", "w_f", "w_o", "b_c", "b_u", "b_f", "b_o")))
    head = rnn.SoftmaxHead(arrays["head.w"], arrays["head.b"])
    return Seq2SeqModel(encoder, decoder, head, src_vocab, tgt_vocab,
                        int(meta["n_hidden"]), int(meta["max_decode_len"]),
                        bool(meta["tanh_output_gate"]), bool(meta["reverse_source"]))
