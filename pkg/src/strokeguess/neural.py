"""Minimal numerical substrate: an LSTM with hand-derived backpropagation
through time, embedding-regression and classification losses, Adagrad with
clipping, orthogonal initialization, and checkpoint IO.

All math runs in 64-bit floats; sizes here are desk scale."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

EPS = 1e-8
CHECKPOINT_MAGIC = b"PGM1"

LOSS_KINDS = ("MSE", "COSINE", "HINGE_RANK", "CONVEX")


class NeuralError(ValueError):
    """Raised for shape mismatches, non-finite inputs and bad configuration."""


# ---------------------------------------------------------------------------
# initializers
# ---------------------------------------------------------------------------


def orthogonal_init(rows: int, cols: int, gain: float = 1.1,
                    seed=None, rng=None) -> np.ndarray:
    """Orthogonal (or row/column-orthonormal) matrix scaled by gain."""
    if rows < 1 or cols < 1:
        raise NeuralError("matrix dimensions must be positive")
    if rng is None:
        rng = np.random.default_rng(seed)
    tall = rows >= cols
    a = rng.standard_normal((rows, cols) if tall else (cols, rows))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity for determinism
    return gain * (q if tall else q.T)


# ---------------------------------------------------------------------------
# LSTM parameters
# ---------------------------------------------------------------------------

# gate order inside the stacked weight matrices
_GATES = ("input", "forget", "cell", "output")


@dataclass(eq=False)
class LstmParams:
    """Stacked-gate LSTM weights plus a linear output projection.

    wx: (input_dim, 4H), wh: (H, 4H), b: (4H,) with gate blocks ordered
    input/forget/cell/output; w_out: (H, output_dim).
    """

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        h = self.wh.shape[0]
        if self.wh.shape != (h, 4 * h) or self.wx.shape[1] != 4 * h \
                or self.b.shape != (4 * h,) or self.w_out.shape[0] != h \
                or self.b_out.shape != (self.w_out.shape[1],):
            raise NeuralError("inconsistent LSTM parameter shapes")
        for t in self.tensors().values():
            if not np.isfinite(t).all():
                raise NeuralError("non-finite LSTM parameters")

    @property
    def input_dim(self) -> int:
        return self.wx.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.wh.shape[0]

    @property
    def output_dim(self) -> int:
        return self.w_out.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"wx": self.wx, "wh": self.wh, "b": self.b,
                "w_out": self.w_out, "b_out": self.b_out}

    def copy(self) -> "LstmParams":
        return LstmParams(**{k: v.copy() for k, v in self.tensors().items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors().items()}


def init_lstm_params(input_dim: int, hidden_dim: int, output_dim: int,
                     seed: int = 0, gain: float = 1.1,
                     forget_bias: float = 1.0) -> LstmParams:
    """Orthogonal per-gate weight blocks, forget-gate bias set to 1."""
    rng = np.random.default_rng(seed)
    wx = np.concatenate([orthogonal_init(input_dim, hidden_dim, gain, rng=rng)
                         for _ in _GATES], axis=1)
    wh = np.concatenate([orthogonal_init(hidden_dim, hidden_dim, gain, rng=rng)
                         for _ in _GATES], axis=1)
    b = np.zeros(4 * hidden_dim)
    b[hidden_dim:2 * hidden_dim] = forget_bias
    w_out = orthogonal_init(hidden_dim, output_dim, gain, rng=rng)
    b_out = np.zeros(output_dim)
    return LstmParams(wx=wx, wh=wh, b=b, w_out=w_out, b_out=b_out)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


_sigmoid = sigmoid


@dataclass(eq=False)
class LstmTrace:
    """Per-step activations cached by the forward pass for BPTT."""

    xs: np.ndarray       # (T, D)
    hs: np.ndarray       # (T, H)
    cs: np.ndarray       # (T, H)
    gates: np.ndarray    # (T, 4H) post-nonlinearity: i, f, g, o
    tanh_c: np.ndarray   # (T, H)
    ys: np.ndarray       # (T, O)


def lstm_step(params: LstmParams, x: np.ndarray, h_prev: np.ndarray,
              c_prev: np.ndarray):
    """One recurrence step; returns (h, c, y) plus the gate activations."""
    hd = params.hidden_dim
    z = x @ params.wx + h_prev @ params.wh + params.b
    i = _sigmoid(z[:hd])
    f = _sigmoid(z[hd:2 * hd])
    g = np.tanh(z[2 * hd:3 * hd])
    o = _sigmoid(z[3 * hd:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    y = h @ params.w_out + params.b_out
    return h, c, y, np.concatenate([i, f, g, o]), tc


def lstm_forward(params: LstmParams, inputs, return_trace: bool = False):
    """Run the recurrence from zero initial state over a (T, D) input sequence.

    Returns (hidden_states, outputs), or the full LstmTrace when asked.
    """
    xs = np.asarray(inputs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != params.input_dim:
        raise NeuralError(f"inputs must be (T, {params.input_dim}), got {xs.shape}")
    if not np.isfinite(xs).all():
        raise NeuralError("non-finite inputs")
    t_len, hd = xs.shape[0], params.hidden_dim
    hs = np.zeros((t_len, hd))
    cs = np.zeros((t_len, hd))
    gates = np.zeros((t_len, 4 * hd))
    tanh_c = np.zeros((t_len, hd))
    ys = np.zeros((t_len, params.output_dim))
    h = np.zeros(hd)
    c = np.zeros(hd)
    for t in range(t_len):
        h, c, y, gate, tc = lstm_step(params, xs[t], h, c)
        hs[t], cs[t], gates[t], tanh_c[t], ys[t] = h, c, gate, tc, y
    if return_trace:
        return LstmTrace(xs=xs, hs=hs, cs=cs, gates=gates, tanh_c=tanh_c, ys=ys)
    return hs, ys


def lstm_backward(params: LstmParams, trace: LstmTrace, d_ys: np.ndarray):
    """Backpropagation through time for upstream gradients d_ys (T, O).

    Returns parameter gradients keyed like LstmParams.tensors().
    """
    t_len, hd = trace.hs.shape
    d_ys = np.asarray(d_ys, dtype=np.float64)
    if d_ys.shape != trace.ys.shape:
        raise NeuralError(f"d_ys must be {trace.ys.shape}, got {d_ys.shape}")
    grads = params.zeros_like()
    dh_next = np.zeros(hd)
    dc_next = np.zeros(hd)
    for t in range(t_len - 1, -1, -1):
        i = trace.gates[t, :hd]
        f = trace.gates[t, hd:2 * hd]
        g = trace.gates[t, 2 * hd:3 * hd]
        o = trace.gates[t, 3 * hd:]
        tc = trace.tanh_c[t]
        c_prev = trace.cs[t - 1] if t > 0 else np.zeros(hd)
        h_prev = trace.hs[t - 1] if t > 0 else np.zeros(hd)

        grads["w_out"] += np.outer(trace.hs[t], d_ys[t])
        grads["b_out"] += d_ys[t]
        dh = d_ys[t] @ params.w_out.T + dh_next

        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev

        dz = np.concatenate([di * i * (1.0 - i),
                             df * f * (1.0 - f),
                             dg * (1.0 - g * g),
                             do * o * (1.0 - o)])
        grads["wx"] += np.outer(trace.xs[t], dz)
        grads["wh"] += np.outer(h_prev, dz)
        grads["b"] += dz
        dh_next = dz @ params.wh.T
        dc_next = dc * f
    return grads


# ---------------------------------------------------------------------------
# regression losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossConfig:
    """Embedding-regression loss selection."""

    kind: str = "CONVEX"
    margin: float = 0.1
    lam: float = 1.0
    negative_sampling: str = "whole-dictionary"  # or "other-category"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise NeuralError(f"unknown loss kind {self.kind!r}")
        if self.margin <= 0:
            raise NeuralError("margin must be positive")
        if self.lam < 0:
            raise NeuralError("lambda must be non-negative")
        if self.negative_sampling not in ("whole-dictionary", "other-category"):
            raise NeuralError(f"unknown negative sampling {self.negative_sampling!r}")


def _mse(p, g):
    diff = p - g
    return float(diff @ diff), 2.0 * diff


def _cosine(p, g):
    np_, ng = np.linalg.norm(p), np.linalg.norm(g)
    if np_ == 0.0 or ng == 0.0:
        raise NeuralError("cosine loss undefined for zero-norm vectors")
    sim = float(p @ g) / (np_ * ng)
    grad = -(g - sim * (ng / np_) * p) / (np_ * ng)
    return 1.0 - sim, grad


def _hinge_rank(p, g, h, margin):
    if h is None:
        raise NeuralError("hinge-rank loss needs a negative vector")
    np_ = np.linalg.norm(p)
    ng = np.linalg.norm(g)
    nh = np.linalg.norm(h)
    if np_ == 0.0 or ng == 0.0 or nh == 0.0:
        raise NeuralError("hinge-rank loss undefined for zero-norm vectors")
    p_hat, g_hat, h_hat = p / np_, g / ng, h / nh
    if np.array_equal(g_hat, h_hat):
        raise NeuralError("negative must differ from the target")
    value = margin - float(p_hat @ g_hat) + float(p_hat @ h_hat)
    if value <= 0.0:
        return 0.0, np.zeros_like(p)
    # d(p_hat . v)/dp = (v - (p_hat . v) p_hat) / ||p||
    dpg = (g_hat - float(p_hat @ g_hat) * p_hat) / np_
    dph = (h_hat - float(p_hat @ h_hat) * p_hat) / np_
    return value, dph - dpg


def compute_loss(cfg: LossConfig, p, g, h=None):
    """Scalar loss and its exact gradient with respect to the prediction."""
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if h is not None:
        h = np.asarray(h, dtype=np.float64)
    if cfg.kind == "MSE":
        return _mse(p, g)
    if cfg.kind == "COSINE":
        return _cosine(p, g)
    if cfg.kind == "HINGE_RANK":
        return _hinge_rank(p, g, h, cfg.margin)
    closs, cgrad = _cosine(p, g)
    hloss, hgrad = _hinge_rank(p, g, h, cfg.margin)
    return closs + cfg.lam * hloss, cgrad + cfg.lam * hgrad


# ---------------------------------------------------------------------------
# classification losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassWeights:
    """Inverse-frequency class weights with mean class fraction 0.5."""

    w0: float
    w1: float

    @classmethod
    def from_fractions(cls, f0: float, f1: float) -> "ClassWeights":
        if f0 <= 0 or f1 <= 0 or abs(f0 + f1 - 1.0) > 1e-9:
            raise NeuralError("class fractions must be positive and sum to 1")
        return cls(w0=0.5 / f0, w1=0.5 / f1)

    @classmethod
    def from_counts(cls, n_zero: int, n_one: int) -> "ClassWeights":
        total = n_zero + n_one
        if n_zero < 1 or n_one < 1:
            raise NeuralError("both classes need at least one sample")
        return cls.from_fractions(n_zero / total, n_one / total)

    def weight(self, label: int) -> float:
        return self.w1 if label else self.w0


_PROB_CLAMP = 1e-12


def weighted_bce(prob: float, label: int, weights: ClassWeights):
    """Class-weighted binary cross-entropy with its gradient w.r.t. prob."""
    if label not in (0, 1):
        raise NeuralError("label must be 0 or 1")
    if not np.isfinite(prob) or prob < 0.0 or prob > 1.0:
        raise NeuralError(f"probability {prob!r} outside [0, 1]")
    p = min(max(float(prob), _PROB_CLAMP), 1.0 - _PROB_CLAMP)
    w = weights.weight(label)
    loss = -w * (label * np.log(p) + (1 - label) * np.log(1.0 - p))
    grad = -w * (label / p - (1 - label) / (1.0 - p))
    return float(loss), float(grad)


# ---------------------------------------------------------------------------
# transition-focused losses
# ---------------------------------------------------------------------------


def transition_weights(k: int, n: int, alpha: float) -> np.ndarray:
    """Per-step loss weights peaking at the transition step k+1 (1-based).

    Weights decay exponentially on both sides; they are meant to be added on
    top of the unweighted sequence loss during training.
    """
    if not 1 <= k + 1 <= n:
        raise NeuralError(f"transition step {k + 1} outside sequence of length {n}")
    if alpha <= 0:
        raise NeuralError("alpha must be positive")
    t = np.arange(1, n + 1, dtype=np.float64)
    pivot = float(k + 1)
    w = np.empty(n)
    left = t <= k
    right = t >= k + 2
    w[left] = np.exp(-alpha * (1.0 - t[left] / pivot))
    w[right] = np.exp(-alpha * (1.0 - pivot / t[right]))
    w[int(k)] = 1.0  # index k is step k+1
    return w


def ranking_loss(scores, labels, lam_s: float = 1.0, lam_r: float = 1.0):
    """Sequence loss encouraging monotone detection scores within phases.

    scores[t] is the detection score of the true label at step t. At
    non-transition steps the rank term penalizes drops below the running
    phase maximum; at the transition step it equals the previous phase's
    score (the binary complement). Returns (total, grad_scores, breakdown)
    where breakdown[t] = (classification term, rank term).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise NeuralError("scores and labels must be equal-length 1-D sequences")
    if ((scores < 0.0) | (scores > 1.0)).any():
        raise NeuralError("scores must lie in [0, 1]")
    if set(np.unique(labels)) - {0, 1}:
        raise NeuralError("labels must be binary")
    if np.any(np.diff(labels) < 0):
        raise NeuralError("malformed labels: a 1 followed by a 0")

    n = scores.size
    grad = np.zeros(n)
    breakdown = np.zeros((n, 2))
    total = 0.0
    phase_start = 0
    for t in range(n):
        p = min(max(float(scores[t]), _PROB_CLAMP), 1.0)
        l_c = -np.log(p)
        grad_c = -1.0 / p
        if t > 0 and labels[t] != labels[t - 1]:
            phase_start = t
            l_r = 1.0 - scores[t]  # previous-phase score at the transition
            grad_r = -1.0
            argmax = None
        elif t == phase_start:
            l_r, grad_r, argmax = 0.0, 0.0, None
        else:
            window = scores[phase_start:t]
            best = int(np.argmax(window)) + phase_start
            gap = float(scores[best] - scores[t])
            if gap > 0.0:
                l_r, grad_r, argmax = gap, -1.0, best
            else:
                l_r, grad_r, argmax = 0.0, 0.0, None  # subgradient 0 at the kink
        total += lam_s * l_c + lam_r * l_r
        grad[t] += lam_s * grad_c + lam_r * grad_r
        if argmax is not None:
            grad[argmax] += lam_r
        breakdown[t] = (l_c, l_r)
    return float(total), grad, breakdown


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerConfig:
    """Adagrad settings; momentum is an optional heavy-ball smoothing."""

    learning_rate: float = 0.01
    momentum: float = 0.0
    grad_clip_norm: float | None = 5.0
    weight_decay: float = 0.0005
    batch_size: int = 1
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise NeuralError("learning rate must be positive")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise NeuralError("gradient clip norm must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise NeuralError("momentum must lie in [0, 1)")


class Adagrad:
    """Adagrad with global-norm clipping, L2 decay and optional momentum."""

    def __init__(self, params: dict[str, np.ndarray], cfg: OptimizerConfig):
        self.params = params
        self.cfg = cfg
        self.accum = {k: np.zeros_like(v) for k, v in params.items()}
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        for key, g in grads.items():
            if not np.isfinite(g).all():
                raise NeuralError(f"non-finite gradient for {key!r}")
            if g.shape != self.params[key].shape:
                raise NeuralError(f"gradient shape mismatch for {key!r}")
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        scale = 1.0
        if cfg.grad_clip_norm is not None and norm > cfg.grad_clip_norm:
            scale = cfg.grad_clip_norm / norm
        for key, g in grads.items():
            g = g * scale
            if cfg.weight_decay:
                g = g + cfg.weight_decay * self.params[key]
            self.accum[key] += g * g
            delta = -cfg.learning_rate * g / (np.sqrt(self.accum[key]) + EPS)
            if cfg.momentum:
                self.velocity[key] = cfg.momentum * self.velocity[key] + delta
                delta = self.velocity[key]
            self.params[key] += delta


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


class CheckpointError(ValueError):
    """Raised for unreadable or corrupt checkpoint files."""


def save_checkpoint(path, config: dict, seed: int,
                    tensors: dict[str, np.ndarray]) -> None:
    """Write a checkpoint; the byte layout is stable across save/load cycles."""
    payload = {
        "config": config,
        "seed": seed,
        "shapes": {k: list(v.shape) for k, v in tensors.items()},
        "tensors": {k: np.asarray(v, dtype=np.float64).ravel().tolist()
                    for k, v in tensors.items()},
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + b"\n")
        fh.write(json.dumps(payload, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")


def load_checkpoint(path):
    """Read a checkpoint back into (config, seed, tensors)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        try:
            payload = json.loads(fh.read().decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt checkpoint") from exc
    try:
        tensors = {k: np.asarray(payload["tensors"][k], dtype=np.float64)
                   .reshape(payload["shapes"][k]) for k in payload["tensors"]}
        return payload["config"], payload["seed"], tensors
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint") from exc
