"""LSTM cell math, softmax head, cross-entropy, BPTT, and RMSprop updates.

All math runs in 64-bit floats; training at these sizes is matvec-bound and
needs no batching. One cell step computes

    c~  = tanh(W_c [a, x] + b_c)
    G_u = sigmoid(W_u [a, x] + b_u)
    G_f = sigmoid(W_f [a, x] + b_f)
    G_o = sigmoid(W_o [a, x] + b_o)
    c'  = G_u * c~ + G_f * c
    a'  = G_o * c'

where [a, x] is the concatenation of the previous hidden activation and the
step input, and * is the Hadamard product. The hidden activation deliberately
multiplies the raw cell state; the common variant a' = G_o * tanh(c') sits
behind the ``tanh_output_gate`` switch (off by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EPS_LOG = 1e-12
EPS_RMSPROP = 1e-8


@dataclass
class LstmState:
    a: np.ndarray  # hidden activation, (n_hidden,)
    c: np.ndarray  # cell state, (n_hidden,)

    def copy(self) -> "LstmState":
        return LstmState(self.a.copy(), self.c.copy())


def zero_state(n_hidden: int) -> LstmState:
    return LstmState(np.zeros(n_hidden), np.zeros(n_hidden))


@dataclass
class LstmParams:
    """Gate weight matrices, each (n_hidden, n_hidden + n_input), and bias vectors."""

    w_c: np.ndarray
    w_u: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    b_c: np.ndarray
    b_u: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray

    @property
    def n_hidden(self) -> int:
        return self.w_c.shape[0]

    @property
    def n_input(self) -> int:
        return self.w_c.shape[1] - self.w_c.shape[0]

    def arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Name -> array view, for the optimizer and checkpointing."""
        return {
            f"{prefix}w_c": self.w_c, f"{prefix}w_u": self.w_u,
            f"{prefix}w_f": self.w_f, f"{prefix}w_o": self.w_o,
            f"{prefix}b_c": self.b_c, f"{prefix}b_u": self.b_u,
            f"{prefix}b_f": self.b_f, f"{prefix}b_o": self.b_o,
        }


@dataclass
class SoftmaxHead:
    """Fully connected projection to vocabulary logits: w (n_vocab, n_hidden), b (n_vocab,)."""

    w: np.ndarray
    b: np.ndarray

    def arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}w": self.w, f"{prefix}b": self.b}


def _glorot(rng: np.random.Generator, shape: tuple[int, int], scale: float | None) -> np.ndarray:
    if scale is None:
        fan_out, fan_in = shape
        scale = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-scale, scale, size=shape)


def init_lstm_params(
    n_input: int,
    n_hidden: int,
    rng: np.random.Generator,
    forget_bias: float = 1.0,
    init_scale: float | None = None,
) -> LstmParams:
    """Uniform Glorot weights; zero biases except the forget gate bias."""
    shape = (n_hidden, n_hidden + n_input)
    return LstmParams(
        w_c=_glorot(rng, shape, init_scale),
        w_u=_glorot(rng, shape, init_scale),
        w_f=_glorot(rng, shape, init_scale),
        w_o=_glorot(rng, shape, init_scale),
        b_c=np.zeros(n_hidden),
        b_u=np.zeros(n_hidden),
        b_f=np.full(n_hidden, float(forget_bias)),
        b_o=np.zeros(n_hidden),
    )


def init_head(n_hidden: int, n_vocab: int, rng: np.random.Generator,
              init_scale: float | None = None) -> SoftmaxHead:
    return SoftmaxHead(w=_glorot(rng, (n_vocab, n_hidden), init_scale), b=np.zeros(n_vocab))


def zeros_like_lstm(params: LstmParams) -> LstmParams:
    return LstmParams(*(np.zeros_like(getattr(params, f.name)) for f in params.__dataclass_fields__.values()))


def zeros_like_head(head: SoftmaxHead) -> SoftmaxHead:
    return SoftmaxHead(np.zeros_like(head.w), np.zeros_like(head.b))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Two-branch form avoids overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class CellCache(NamedTuple):
    z: np.ndarray        # [a_prev, x]
    c_tilde: np.ndarray
    g_u: np.ndarray
    g_f: np.ndarray
    g_o: np.ndarray
    c_prev: np.ndarray
    c: np.ndarray        # new cell state


def lstm_cell_forward(
    x: np.ndarray, state: LstmState, params: LstmParams, tanh_output_gate: bool = False
) -> tuple[LstmState, CellCache]:
    """One recurrent step. x is the input vector for this timestep."""
    n_hidden = params.n_hidden
    if x.shape != (params.n_input,):
        raise ValueError(f"input has shape {x.shape}, expected ({params.n_input},)")
    if state.a.shape != (n_hidden,) or state.c.shape != (n_hidden,):
        raise ValueError("state dimensions do not match the parameters")
    z = np.concatenate([state.a, x])
    c_tilde = np.tanh(params.w_c @ z + params.b_c)
    g_u = _sigmoid(params.w_u @ z + params.b_u)
    g_f = _sigmoid(params.w_f @ z + params.b_f)
    g_o = _sigmoid(params.w_o @ z + params.b_o)
    c = g_u * c_tilde + g_f * state.c
    a = g_o * (np.tanh(c) if tanh_output_gate else c)
    return LstmState(a, c), CellCache(z, c_tilde, g_u, g_f, g_o, state.c, c)


def lstm_forward(
    inputs: np.ndarray, init: LstmState, params: LstmParams, tanh_output_gate: bool = False
) -> tuple[list[LstmState], list[CellCache]]:
    """Run the shared-weight cell over a (T, n_input) sequence.

    Returns T+1 states (the initial state first) and T caches; an empty
    sequence returns just the initial state.
    """
    states = [init]
    caches: list[CellCache] = []
    for t in range(inputs.shape[0]):
        state, cache = lstm_cell_forward(inputs[t], states[-1], params, tanh_output_gate)
        states.append(state)
        caches.append(cache)
    return states, caches


def lstm_cell_backward(
    d_a: np.ndarray,
    d_c: np.ndarray,
    cache: CellCache,
    params: LstmParams,
    grads: LstmParams,
    tanh_output_gate: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward through one cell step, accumulating into grads.

    d_a, d_c are the loss gradients w.r.t. this step's outputs; returns the
    gradients w.r.t. the previous state (a, c) and the step input x.
    """
    n_hidden = params.n_hidden
    if tanh_output_gate:
        tc = np.tanh(cache.c)
        d_g_o = d_a * tc
        d_c_total = d_a * cache.g_o * (1.0 - tc * tc) + d_c
    else:
        d_g_o = d_a * cache.c
        d_c_total = d_a * cache.g_o + d_c
    d_g_u = d_c_total * cache.c_tilde
    d_c_tilde = d_c_total * cache.g_u
    d_g_f = d_c_total * cache.c_prev
    d_c_prev = d_c_total * cache.g_f

    d_s_c = d_c_tilde * (1.0 - cache.c_tilde * cache.c_tilde)
    d_s_u = d_g_u * cache.g_u * (1.0 - cache.g_u)
    d_s_f = d_g_f * cache.g_f * (1.0 - cache.g_f)
    d_s_o = d_g_o * cache.g_o * (1.0 - cache.g_o)

    grads.w_c += np.outer(d_s_c, cache.z)
    grads.w_u += np.outer(d_s_u, cache.z)
    grads.w_f += np.outer(d_s_f, cache.z)
    grads.w_o += np.outer(d_s_o, cache.z)
    grads.b_c += d_s_c
    grads.b_u += d_s_u
    grads.b_f += d_s_f
    grads.b_o += d_s_o

    d_z = params.w_c.T @ d_s_c + params.w_u.T @ d_s_u + params.w_f.T @ d_s_f + params.w_o.T @ d_s_o
    return d_z[:n_hidden], d_c_prev, d_z[n_hidden:]


def lstm_backward(
    d_as: list[np.ndarray | None],
    caches: list[CellCache],
    params: LstmParams,
    grads: LstmParams,
    d_a_final: np.ndarray | None = None,
    d_c_final: np.ndarray | None = None,
    tanh_output_gate: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """BPTT over a forward chain.

    d_as[t] is the per-step loss gradient on the hidden activation (None for
    steps without an output); d_a_final/d_c_final inject gradient flowing into
    the final state from downstream consumers. Returns the gradient w.r.t. the
    initial (a, c).
    """
    n_hidden = params.n_hidden
    d_a = np.zeros(n_hidden) if d_a_final is None else d_a_final.copy()
    d_c = np.zeros(n_hidden) if d_c_final is None else d_c_final.copy()
    for t in reversed(range(len(caches))):
        if d_as[t] is not None:
            d_a = d_a + d_as[t]
        d_a, d_c, _ = lstm_cell_backward(d_a, d_c, caches[t], params, grads, tanh_output_gate)
    return d_a, d_c


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max subtraction)."""
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def softmax_predict(a: np.ndarray, head: SoftmaxHead) -> np.ndarray:
    if a.shape[0] != head.w.shape[1]:
        raise ValueError(f"hidden vector of length {a.shape[0]} does not match head {head.w.shape}")
    return softmax(head.w @ a + head.b)


def cross_entropy(pred: np.ndarray, target_index: int) -> float:
    """-log p[target], with a 1e-12 floor inside the log."""
    if not 0 <= target_index < pred.shape[0]:
        raise IndexError(f"target index {target_index} out of range for {pred.shape[0]} classes")
    return float(-np.log(pred[target_index] + EPS_LOG))


def cross_entropy_logit_grad(pred: np.ndarray, target_index: int) -> np.ndarray:
    """Gradient of cross_entropy w.r.t. the logits that produced pred.

    Exactly differentiates -log(p_t + eps): the usual (p - onehot) scaled by
    p_t / (p_t + eps), so finite-difference checks pass at tight tolerance.
    """
    scale = pred[target_index] / (pred[target_index] + EPS_LOG)
    d = scale * pred.copy()
    d[target_index] -= scale
    return d


def bptt(
    inputs: np.ndarray,
    targets: list[int],
    params: LstmParams,
    head: SoftmaxHead,
    init: LstmState | None = None,
    tanh_output_gate: bool = False,
) -> tuple[LstmParams, SoftmaxHead, float]:
    """Forward + backward over one sequence with a head at every step.

    inputs is (T, n_input); targets has one class index per step. Returns the
    loss summed over steps and the parameter gradients of that summed loss.
    """
    if inputs.shape[0] != len(targets):
        raise ValueError(f"{inputs.shape[0]} inputs vs {len(targets)} targets")
    if init is None:
        init = zero_state(params.n_hidden)
    grads = zeros_like_lstm(params)
    head_grads = zeros_like_head(head)
    states, caches = lstm_forward(inputs, init, params, tanh_output_gate)

    loss = 0.0
    d_as: list[np.ndarray | None] = []
    for t, target in enumerate(targets):
        a = states[t + 1].a
        pred = softmax_predict(a, head)
        loss += cross_entropy(pred, target)
        d_logits = cross_entropy_logit_grad(pred, target)
        head_grads.w += np.outer(d_logits, a)
        head_grads.b += d_logits
        d_as.append(head.w.T @ d_logits)
    lstm_backward(d_as, caches, params, grads, tanh_output_gate=tanh_output_gate)
    return grads, head_grads, loss


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class RmspropState:
    """Per-parameter running mean of squared gradients."""

    mean_square: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "RmspropState":
        return cls({name: np.zeros_like(p) for name, p in params.items()})


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: RmspropState,
    learning_rate: float,
    beta: float = 0.9,
) -> None:
    """In-place update: s <- beta s + (1-beta) g^2;  p <- p - lr g / (sqrt(s) + eps)."""
    for name, p in params.items():
        g = grads[name]
        s = state.mean_square[name]
        s *= beta
        s += (1.0 - beta) * g * g
        p -= learning_rate * g / (np.sqrt(s) + EPS_RMSPROP)
    state.step += 1
