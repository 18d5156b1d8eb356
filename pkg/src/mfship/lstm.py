"""Stacked LSTM sequence corrector written directly in numpy.

Gate blocks are stacked in the order forget (f1), input (f2), candidate
(f3), output (f4)::

    f1 = sigmoid(W1 x + U1 h + b1)      f2 = sigmoid(W2 x + U2 h + b2)
    f3 = tanh(W3 x + U3 h + b3)         f4 = sigmoid(W4 x + U4 h + b4)
    c  = f1 * c_prev + f2 * f3          h  = f4 * tanh(c)

Sequences are laid out time-major, ``(T, batch, features)``; unbatched
``(T, features)`` input is accepted everywhere and returned unbatched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import FormatError, GradientError, StandardizationError, TrainingDiverged

CHECKPOINT_FORMAT = "mfship-lstm"
CHECKPOINT_VERSION = 1

INPUT_CHANNELS = ("heave", "roll", "pitch", "zeta", "dzdx", "dzdy")
TARGET_CHANNELS = ("heave", "roll", "pitch")


@dataclass
class LstmLayerParams:
    W: np.ndarray  # (4H, I)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        H4, _ = self.W.shape
        if H4 % 4 or self.U.shape != (H4, H4 // 4) or self.b.shape != (H4,):
            raise ValueError(f"inconsistent LSTM layer shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, n_in: int, hidden: int) -> "LstmLayerParams":
        return cls(np.zeros((4 * hidden, n_in)), np.zeros((4 * hidden, hidden)), np.zeros(4 * hidden))


@dataclass
class CellState:
    h: list
    c: list

    @classmethod
    def zeros(cls, net: "LstmNetwork", batch: int) -> "CellState":
        return cls([np.zeros((batch, l.hidden)) for l in net.layers],
                   [np.zeros((batch, l.hidden)) for l in net.layers])


@dataclass
class LstmNetwork:
    layers: list
    dense_W: np.ndarray  # (O, H_last)
    dense_b: np.ndarray  # (O,)

    def __post_init__(self):
        self.dense_W = np.asarray(self.dense_W, dtype=float)
        self.dense_b = np.asarray(self.dense_b, dtype=float)
        for prev, layer in zip(self.layers, self.layers[1:]):
            if layer.n_inputs != prev.hidden:
                raise ValueError("layer input width must equal the previous layer's hidden width")
        if self.dense_W.shape != (len(self.dense_b), self.layers[-1].hidden):
            raise ValueError("dense head shape mismatch")

    @property
    def n_inputs(self) -> int:
        return self.layers[0].n_inputs

    @property
    def n_outputs(self) -> int:
        return len(self.dense_b)

    @property
    def hidden_sizes(self) -> list[int]:
        return [l.hidden for l in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (shared with gradients)."""
        out = []
        for l in self.layers:
            out += [l.W, l.U, l.b]
        return out + [self.dense_W, self.dense_b]

    def copy(self) -> "LstmNetwork":
        return LstmNetwork([LstmLayerParams(l.W.copy(), l.U.copy(), l.b.copy()) for l in self.layers],
                           self.dense_W.copy(), self.dense_b.copy())

    @classmethod
    def zeros(cls, n_in=6, hidden=(150, 150, 150), n_out=3) -> "LstmNetwork":
        layers, width = [], n_in
        for h in hidden:
            layers.append(LstmLayerParams.zeros(width, h))
            width = h
        return cls(layers, np.zeros((n_out, width)), np.zeros(n_out))

    @classmethod
    def initialize(cls, n_in=6, hidden=(150, 150, 150), n_out=3, seed=0, forget_bias=1.0) -> "LstmNetwork":
        """Uniform +/- 1/sqrt(H) weights, zero biases except the forget gate."""
        rng = np.random.default_rng(seed)
        layers, width = [], n_in
        for h in hidden:
            lim = 1.0 / math.sqrt(h)
            b = np.zeros(4 * h)
            b[:h] = forget_bias
            layers.append(LstmLayerParams(rng.uniform(-lim, lim, (4 * h, width)),
                                          rng.uniform(-lim, lim, (4 * h, h)), b))
            width = h
        lim = 1.0 / math.sqrt(width)
        return cls(layers, rng.uniform(-lim, lim, (n_out, width)), np.zeros(n_out))


def _gates(z: np.ndarray, H: int):
    f1 = expit(z[..., :H])
    f2 = expit(z[..., H:2 * H])
    f3 = np.tanh(z[..., 2 * H:3 * H])
    f4 = expit(z[..., 3 * H:])
    return f1, f2, f3, f4


def cell_forward(p: LstmLayerParams, x, h_prev, c_prev):
    """One LSTM step; vectors or ``(batch, n)`` arrays."""
    x, h_prev, c_prev = (np.asarray(v, dtype=float) for v in (x, h_prev, c_prev))
    H = p.hidden
    if x.shape[-1] != p.n_inputs or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ValueError(f"dimension mismatch: x{x.shape} h{h_prev.shape} c{c_prev.shape} "
                         f"for layer with {p.n_inputs} inputs and {H} hidden units")
    z = x @ p.W.T + h_prev @ p.U.T + p.b
    f1, f2, f3, f4 = _gates(z, H)
    c = f1 * c_prev + f2 * f3
    h = f4 * np.tanh(c)
    return h, c


def _as_batched(x: np.ndarray, width: int, what="input"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[:, None, :]
        squeeze = True
    elif x.ndim == 3:
        squeeze = False
    else:
        raise ValueError(f"{what} must be (T, n) or (T, batch, n)")
    if x.shape[-1] != width:
        raise ValueError(f"{what} width {x.shape[-1]} does not match network width {width}")
    return x, squeeze


def _layer_forward(p: LstmLayerParams, X: np.ndarray, h0: np.ndarray, c0: np.ndarray, keep: bool):
    T, B, _ = X.shape
    H = p.hidden
    Zx = (X.reshape(T * B, -1) @ p.W.T + p.b).reshape(T, B, 4 * H)
    Hs = np.empty((T, B, H))
    Cs = np.empty((T, B, H)) if keep else None
    G = np.empty((T, B, 4 * H)) if keep else None
    UT = p.U.T
    h, c = h0, c0
    for t in range(T):
        z = Zx[t] + h @ UT
        f1, f2, f3, f4 = _gates(z, H)
        c = f1 * c + f2 * f3
        h = f4 * np.tanh(c)
        Hs[t] = h
        if keep:
            Cs[t] = c
            G[t, :, :H] = f1
            G[t, :, H:2 * H] = f2
            G[t, :, 2 * H:3 * H] = f3
            G[t, :, 3 * H:] = f4
    return Hs, h, c, (Cs, G)


def _forward(net: LstmNetwork, X: np.ndarray, state: CellState | None, keep: bool):
    T, B, _ = X.shape
    state = state or CellState.zeros(net, B)
    inputs, caches, hs, cs = [X], [], [], []
    a = X
    for i, layer in enumerate(net.layers):
        a, h, c, cache = _layer_forward(layer, a, state.h[i], state.c[i], keep)
        inputs.append(a)
        caches.append(cache)
        hs.append(h)
        cs.append(c)
    Y = a @ net.dense_W.T + net.dense_b
    return Y, CellState(hs, cs), inputs, caches


def network_forward(net: LstmNetwork, x, state: CellState | None = None, return_state: bool = False):
    """Run the stacked network over a standardized sequence from zero state."""
    X, squeeze = _as_batched(x, net.n_inputs)
    Y, final, _, _ = _forward(net, X, state, keep=False)
    Y = Y[:, 0, :] if squeeze else Y
    return (Y, final) if return_state else Y


def mse(target, output) -> float:
    target = np.asarray(target, dtype=float)
    output = np.asarray(output, dtype=float)
    if target.shape != output.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {output.shape}")
    return float(np.mean((target - output) ** 2))


def _layer_backward(p: LstmLayerParams, X, Hs, cache, h0, c0, dHs):
    Cs, G = cache
    T, B, H = Hs.shape
    dZ = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    U = p.U
    for t in range(T - 1, -1, -1):
        g = G[t]
        f1, f2, f3, f4 = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        c_prev = Cs[t - 1] if t > 0 else c0
        tc = np.tanh(Cs[t])
        dh = dHs[t] + dh_next
        dc = dc_next + dh * f4 * (1.0 - tc * tc)
        dz = dZ[t]
        dz[:, :H] = dc * c_prev * f1 * (1.0 - f1)
        dz[:, H:2 * H] = dc * f3 * f2 * (1.0 - f2)
        dz[:, 2 * H:3 * H] = dc * f2 * (1.0 - f3 * f3)
        dz[:, 3 * H:] = dh * tc * f4 * (1.0 - f4)
        dh_next = dz @ U
        dc_next = dc * f1
    Hprev = np.concatenate([h0[None], Hs[:-1]], axis=0)
    dZf = dZ.reshape(T * B, 4 * H)
    dW = dZf.T @ X.reshape(T * B, -1)
    dU = dZf.T @ Hprev.reshape(T * B, H)
    db = dZf.sum(axis=0)
    dX = (dZf @ p.W).reshape(T, B, -1)
    return dW, dU, db, dX


def bptt_gradients(net: LstmNetwork, x, y, state: CellState | None = None):
    """Loss and exact gradients of the MSE through the whole sequence.

    Returns ``(loss, grads, final_state)``; ``grads`` follows
    :meth:`LstmNetwork.parameters` order.
    """
    X, squeeze = _as_batched(x, net.n_inputs)
    Yt, _ = _as_batched(y, net.n_outputs, "target")
    T, B, _ = X.shape
    state = state or CellState.zeros(net, B)
    Y, final, inputs, caches = _forward(net, X, state, keep=True)
    if Yt.shape != Y.shape:
        raise ValueError(f"target shape {Yt.shape} does not match output {Y.shape}")
    diff = Y - Yt
    loss = float(np.mean(diff**2))
    dY = 2.0 * diff / diff.size
    top = inputs[-1]
    dWd = dY.reshape(T * B, -1).T @ top.reshape(T * B, -1)
    dbd = dY.reshape(T * B, -1).sum(axis=0)
    dH = dY @ net.dense_W
    grads_rev = [dbd, dWd]
    for i in range(len(net.layers) - 1, -1, -1):
        dW, dU, db, dH = _layer_backward(net.layers[i], inputs[i], inputs[i + 1], caches[i],
                                         state.h[i], state.c[i], dH)
        if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(dU)) and np.all(np.isfinite(dH))):
            bad = np.where(~np.all(np.isfinite(dH), axis=(1, 2)))[0]
            step = int(bad[-1]) if len(bad) else -1
            raise GradientError(f"non-finite gradient in layer {i} at step {step}")
        grads_rev += [db, dU, dW]
    return loss, grads_rev[::-1], final


# ---------------------------------------------------------------------------
# Standardization


@dataclass
class Standardizer:
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    def __post_init__(self):
        for name in ("in_mean", "in_std", "out_mean", "out_std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise StandardizationError("standard deviations must be positive")

    def apply_inputs(self, x):
        return (np.asarray(x) - self.in_mean) / self.in_std

    def invert_inputs(self, z):
        return np.asarray(z) * self.in_std + self.in_mean

    def apply_targets(self, y):
        return (np.asarray(y) - self.out_mean) / self.out_std

    def invert_targets(self, z):
        return np.asarray(z) * self.out_std + self.out_mean

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("in_mean", "in_std", "out_mean", "out_std")}

    @classmethod
    def from_json(cls, d: dict) -> "Standardizer":
        return cls(d["in_mean"], d["in_std"], d["out_mean"], d["out_std"])


def _channel_stats(arrays: Sequence[np.ndarray], names=None):
    data = np.concatenate([np.asarray(a, dtype=float) for a in arrays], axis=0)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    bad = np.where(~(std > 0))[0]
    if len(bad):
        label = ", ".join(names[i] if names else str(i) for i in bad)
        raise StandardizationError(f"zero-variance channel(s): {label}")
    return mean, std


def fit_standardizer(inputs: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> Standardizer:
    """Per-channel mean and population std over all training samples."""
    im, isd = _channel_stats(inputs, INPUT_CHANNELS if np.shape(inputs[0])[-1] == 6 else None)
    om, osd = _channel_stats(targets, TARGET_CHANNELS if np.shape(targets[0])[-1] == 3 else None)
    return Standardizer(im, isd, om, osd)


def record_pair(lofi, ref=None):
    """Post-ramp input matrix (and target matrix) from motion records."""
    lo = lofi.post_ramp()
    x = lo.matrix(INPUT_CHANNELS)
    if ref is None:
        return x
    hi = ref.post_ramp()
    if len(hi) != len(lo):
        raise ValueError("low- and reference-fidelity records differ in length")
    return x, hi.matrix(TARGET_CHANNELS)


def fit_standardizer_records(pairs) -> Standardizer:
    xs, ys = zip(*(record_pair(lo, hi) for lo, hi in pairs))
    return fit_standardizer(xs, ys)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    seq_len: int = 18000
    resolution_factor: int = 9
    learning_rate: float = 1e-3
    lr_decay: float = 1.0  # per-epoch multiplier on the learning rate
    batch_size: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    shuffle: bool = True
    hidden: tuple = (150, 150, 150)
    divergence_loss: float = 1e6

    def __post_init__(self):
        for name in ("epochs", "seq_len", "resolution_factor", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.seq_len % self.resolution_factor:
            raise ValueError("seq_len must be divisible by resolution_factor")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def chunk_len(self) -> int:
        return self.seq_len // self.resolution_factor

    def to_json(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class Adam:
    def __init__(self, params: list[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        if self.lr == 0:
            return
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_gradients(grads: list[np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm and norm > max_norm:
        s = max_norm / norm
        for g in grads:
            g *= s
    return norm


@dataclass
class TrainResult:
    net: LstmNetwork
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    initial_train_loss: float = float("nan")
    initial_val_loss: float = float("nan")


def _stack(seqs: Sequence[np.ndarray], seq_len: int) -> np.ndarray:
    out = []
    for s in seqs:
        s = np.asarray(s, dtype=float)
        if len(s) < seq_len:
            raise ValueError(f"sequence of length {len(s)} shorter than seq_len {seq_len}")
        out.append(s[:seq_len])
    return np.stack(out, axis=1)  # (T, N, F)


def evaluate_loss(net: LstmNetwork, X: np.ndarray, Y: np.ndarray) -> float:
    return mse(Y, network_forward(net, X))


def train(net: LstmNetwork, train_x, train_y, val_x=None, val_y=None,
          cfg: TrainConfig = TrainConfig(), log=None) -> TrainResult:
    """Adam on truncated-BPTT chunks of ``seq_len / resolution_factor`` steps.

    Cell state is carried across the chunks of a sequence but gradients are
    not.  The per-epoch training loss is the mean chunk loss.
    """
    net = net.copy()
    X = _stack(train_x, cfg.seq_len)
    Y = _stack(train_y, cfg.seq_len)
    if X.shape[-1] != net.n_inputs or Y.shape[-1] != net.n_outputs:
        raise ValueError("dataset widths do not match the network")
    have_val = val_x is not None and len(val_x) > 0
    if have_val:
        VX, VY = _stack(val_x, cfg.seq_len), _stack(val_y, cfg.seq_len)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    n = X.shape[1]
    L = cfg.chunk_len
    res = TrainResult(net)
    res.initial_train_loss = evaluate_loss(net, X, Y)
    res.initial_val_loss = evaluate_loss(net, VX, VY) if have_val else float("nan")
    for epoch in range(cfg.epochs):
        opt.lr = cfg.learning_rate * cfg.lr_decay ** epoch
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            state = None
            for c0 in range(0, cfg.seq_len, L):
                loss, grads, state = bptt_gradients(net, X[c0:c0 + L, idx], Y[c0:c0 + L, idx], state)
                losses.append(loss * len(idx))
                clip_gradients(grads, cfg.clip_norm)
                opt.step(grads)
        tl = float(np.sum(losses) / (n * cfg.resolution_factor))
        res.train_loss.append(tl)
        vl = evaluate_loss(net, VX, VY) if have_val else float("nan")
        res.val_loss.append(vl)
        if log:
            log(epoch + 1, tl, vl)
        if not (tl <= cfg.divergence_loss) or (have_val and not (vl <= cfg.divergence_loss)):
            raise TrainingDiverged(f"loss diverged at epoch {epoch + 1}: train {tl:.3g}, val {vl:.3g}", res)
    return res


# ---------------------------------------------------------------------------
# Correction and checkpoints


def correct(net: LstmNetwork, standardizer: Standardizer, record):
    """LSTM-corrected heave/roll/pitch over the post-ramp window of ``record``.

    Time stamps and wave channels are carried over unchanged.
    """
    from .sim import CORRECTED, MotionRecord

    lo = record.post_ramp()
    x = lo.matrix(INPUT_CHANNELS)
    if x.shape[1] != net.n_inputs or net.n_outputs != len(TARGET_CHANNELS):
        raise ValueError("record channels do not match the network")
    y = standardizer.invert_targets(network_forward(net, standardizer.apply_inputs(x)))
    meta = dict(lo.meta)
    meta.update({"fidelity": CORRECTED, "source_fidelity": record.fidelity,
                 "source_seed": record.meta.get("seed"), "ramp_samples": 0})
    return MotionRecord(lo.t, y[:, 0], y[:, 1], y[:, 2], lo.zeta, lo.dzdx, lo.dzdy, meta=meta)


def _arr(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in np.ravel(a, order="C")]}


def _unarr(d: dict, shape=None) -> np.ndarray:
    try:
        a = np.array(d["data"], dtype=float).reshape(d["shape"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad parameter array: {exc}") from None
    if shape is not None and a.shape != tuple(shape):
        raise FormatError(f"parameter shape {a.shape} does not match declared {tuple(shape)}")
    return a


def save_checkpoint(path, net: LstmNetwork, standardizer: Standardizer | None = None,
                    train_config: TrainConfig | None = None, meta: dict | None = None):
    """Versioned JSON checkpoint; floats are written round-trip exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_size": net.n_inputs,
        "hidden_sizes": net.hidden_sizes,
        "output_size": net.n_outputs,
        "layers": [{"W": _arr(l.W), "U": _arr(l.U), "b": _arr(l.b)} for l in net.layers],
        "dense": {"W": _arr(net.dense_W), "b": _arr(net.dense_b)},
        "standardizer": standardizer.to_json() if standardizer else None,
        "train_config": train_config.to_json() if train_config else None,
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns ``(net, standardizer, train_config_dict, meta)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not an LSTM checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    hidden = doc["hidden_sizes"]
    width = doc["input_size"]
    layers = []
    if len(doc["layers"]) != len(hidden):
        raise FormatError(f"{path}: layer count does not match hidden_sizes")
    for h, l in zip(hidden, doc["layers"]):
        layers.append(LstmLayerParams(_unarr(l["W"], (4 * h, width)), _unarr(l["U"], (4 * h, h)),
                                      _unarr(l["b"], (4 * h,))))
        width = h
    out = doc["output_size"]
    net = LstmNetwork(layers, _unarr(doc["dense"]["W"], (out, width)), _unarr(doc["dense"]["b"], (out,)))
    std = Standardizer.from_json(doc["standardizer"]) if doc.get("standardizer") else None
    return net, std, doc.get("train_config"), doc.get("meta", {})
