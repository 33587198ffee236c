"""Minimal neural kernel for the continuous-time beam predictor.

Hand-rolled numpy layers with explicit backward passes: 1-D convolution,
LSTM cell, fixed-step Euler ODE block, softmax classification head with
cross-entropy, Adam, and a central-finite-difference gradient checker.  No
autodiff graph: every `*_forward` returns a cache that its `*_backward`
consumes, and parameter gradients come back as dicts keyed like
:func:`flatten_params`.

All arrays are float64.  Every function accepts arbitrary leading batch axes
(vectors, or stacks of vectors); parameter gradients are summed over them.
Forward passes are deterministic, so training is reproducible given the seed,
the initial parameters, and the data order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

CHECKPOINT_MAGIC = b"BMDL"
CHECKPOINT_VERSION = 1

LOSS_FLOOR = 1e-12


class CheckpointFormatError(ValueError):
    """Raised when a model checkpoint fails to parse or match."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


# --- parameter containers ---------------------------------------------------

@dataclass
class Conv1dParams:
    weight: np.ndarray  # (c_out, c_in, kernel)
    bias: np.ndarray  # (c_out,)


@dataclass
class DenseParams:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class LstmCellParams:
    """Input/forget/output gate and candidate-update weights.

    Each gate g has an input-to-hidden matrix w_g (hidden, input), a
    hidden-to-hidden matrix u_g (hidden, hidden) and a bias b_g (hidden,).
    """

    wi: np.ndarray
    ui: np.ndarray
    bi: np.ndarray
    wf: np.ndarray
    uf: np.ndarray
    bf: np.ndarray
    wo: np.ndarray
    uo: np.ndarray
    bo: np.ndarray
    wg: np.ndarray
    ug: np.ndarray
    bg: np.ndarray

    @property
    def input_size(self) -> int:
        return self.wi.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.wi.shape[0]


@dataclass
class OdeDerivativeNet:
    """One-hidden-layer perceptron for ds/dt: tanh hidden, linear output.

    Input and output dimensions are both the LSTM hidden size; the net sees
    only the state (time enters through integration length).
    """

    w1: np.ndarray  # (ode_hidden, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, ode_hidden)
    b2: np.ndarray


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_conv1d(rng: np.random.Generator, c_out: int, c_in: int, kernel: int) -> Conv1dParams:
    if kernel % 2 != 1:
        raise ValueError("kernel size must be odd for same-padding")
    return Conv1dParams(
        weight=_uniform(rng, c_in * kernel, (c_out, c_in, kernel)),
        bias=np.zeros(c_out),
    )


def init_lstm(rng: np.random.Generator, input_size: int, hidden_size: int) -> LstmCellParams:
    def w():
        return _uniform(rng, input_size, (hidden_size, input_size))

    def u():
        return _uniform(rng, hidden_size, (hidden_size, hidden_size))

    p = LstmCellParams(
        wi=w(), ui=u(), bi=np.zeros(hidden_size),
        wf=w(), uf=u(), bf=np.ones(hidden_size),  # open forget gate at start
        wo=w(), uo=u(), bo=np.zeros(hidden_size),
        wg=w(), ug=u(), bg=np.zeros(hidden_size),
    )
    return p


def init_ode(rng: np.random.Generator, hidden: int, ode_hidden: int) -> OdeDerivativeNet:
    return OdeDerivativeNet(
        w1=_uniform(rng, hidden, (ode_hidden, hidden)),
        b1=np.zeros(ode_hidden),
        w2=_uniform(rng, ode_hidden, (hidden, ode_hidden)),
        b2=np.zeros(hidden),
    )


def init_dense_zero(out_size: int, in_size: int) -> DenseParams:
    # zero head makes the untrained classifier exactly uniform
    return DenseParams(weight=np.zeros((out_size, in_size)), bias=np.zeros(out_size))


def flatten_params(prefix: str, params) -> dict[str, np.ndarray]:
    """Name->array view of a parameter dataclass (arrays are shared)."""
    return {f"{prefix}.{f.name}": getattr(params, f.name) for f in fields(params)}


# --- conv1d ------------------------------------------------------------------

def _conv_windows(x: np.ndarray, kernel: int) -> np.ndarray:
    pad = kernel // 2
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    xp = np.pad(x, widths)
    return np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=-1)


def conv1d_forward(p: Conv1dParams, x: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation over the last axis.

    x: (..., c_in, width) -> (..., c_out, width).
    """
    if x.shape[-2] != p.weight.shape[1]:
        raise ValueError(
            f"input channels {x.shape[-2]} != weight channels {p.weight.shape[1]}"
        )
    if x.shape[-1] < p.weight.shape[2]:
        raise ValueError("input width smaller than kernel")
    win = _conv_windows(x, p.weight.shape[2])
    return np.einsum("...iwk,oik->...ow", win, p.weight) + p.bias[:, None]


def conv1d_backward(
    p: Conv1dParams, x: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Input and parameter gradients for :func:`conv1d_forward`."""
    c_out, c_in, kernel = p.weight.shape
    width = x.shape[-1]
    win = _conv_windows(x, kernel)
    flat_g = grad_out.reshape(-1, c_out, width)
    flat_win = win.reshape(-1, c_in, width, kernel)
    gw = np.einsum("bow,biwk->oik", flat_g, flat_win)
    gb = flat_g.sum(axis=(0, 2))
    gwin = _conv_windows(grad_out, kernel)
    gx = np.einsum("...owk,oik->...iw", gwin, p.weight[:, :, ::-1])
    return gx, {"weight": gw, "bias": gb}


# --- dense -------------------------------------------------------------------

def dense_forward(p: DenseParams, x: np.ndarray) -> np.ndarray:
    return x @ p.weight.T + p.bias


def dense_backward(
    p: DenseParams, x: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    flat_x = x.reshape(-1, x.shape[-1])
    flat_g = grad_out.reshape(-1, grad_out.shape[-1])
    gw = flat_g.T @ flat_x
    gb = flat_g.sum(axis=0)
    gx = grad_out @ p.weight
    return gx, {"weight": gw, "bias": gb}


# --- lstm cell ---------------------------------------------------------------

def lstm_cell_forward(p: LstmCellParams, x, h, c):
    """One LSTM step; returns (h2, c2, cache)."""
    if x.shape[-1] != p.input_size or h.shape[-1] != p.hidden_size:
        raise ValueError(
            f"lstm shapes: x {x.shape[-1]} vs {p.input_size}, h {h.shape[-1]} vs {p.hidden_size}"
        )
    i = sigmoid(x @ p.wi.T + h @ p.ui.T + p.bi)
    f = sigmoid(x @ p.wf.T + h @ p.uf.T + p.bf)
    o = sigmoid(x @ p.wo.T + h @ p.uo.T + p.bo)
    g = np.tanh(x @ p.wg.T + h @ p.ug.T + p.bg)
    c2 = f * c + i * g
    tc2 = np.tanh(c2)
    h2 = o * tc2
    return h2, c2, (x, h, c, i, f, o, g, tc2)


def lstm_cell_step(p: LstmCellParams, x, h, c):
    """Forward-only convenience wrapper: (h', c')."""
    h2, c2, _ = lstm_cell_forward(p, x, h, c)
    return h2, c2


def lstm_cell_backward(p: LstmCellParams, cache, grad_h2, grad_c2):
    """Backward for one step: returns (gx, gh, gc, grads dict)."""
    x, h, c, i, f, o, g, tc2 = cache
    go = grad_h2 * tc2
    gc2 = grad_c2 + grad_h2 * o * (1.0 - tc2 * tc2)
    gf = gc2 * c
    gc = gc2 * f
    gi = gc2 * g
    gg = gc2 * i
    # pre-activation grads
    zi = gi * i * (1.0 - i)
    zf = gf * f * (1.0 - f)
    zo = go * o * (1.0 - o)
    zg = gg * (1.0 - g * g)

    def mats(z):
        fz = z.reshape(-1, z.shape[-1])
        fx = x.reshape(-1, x.shape[-1])
        fh = h.reshape(-1, h.shape[-1])
        return fz.T @ fx, fz.T @ fh, fz.sum(axis=0)

    gwi, gui, gbi = mats(zi)
    gwf, guf, gbf = mats(zf)
    gwo, guo, gbo = mats(zo)
    gwg, gug, gbg = mats(zg)
    gx = zi @ p.wi + zf @ p.wf + zo @ p.wo + zg @ p.wg
    gh = zi @ p.ui + zf @ p.uf + zo @ p.uo + zg @ p.ug
    grads = {
        "wi": gwi, "ui": gui, "bi": gbi,
        "wf": gwf, "uf": guf, "bf": gbf,
        "wo": gwo, "uo": guo, "bo": gbo,
        "wg": gwg, "ug": gug, "bg": gbg,
    }
    return gx, gh, gc, grads


# --- ODE block ---------------------------------------------------------------

def ode_derivative(net: OdeDerivativeNet, s: np.ndarray) -> np.ndarray:
    return np.tanh(s @ net.w1.T + net.b1) @ net.w2.T + net.b2


def ode_evolve_forward(net: OdeDerivativeNet, s0: np.ndarray, elapsed, steps: int):
    """Explicit Euler integration of the learned derivative; returns (s, cache).

    elapsed may be a scalar or an array broadcastable against s0's batch axes
    (one integration length per batch row).  Zero elapsed is exact identity.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    elapsed_arr = np.asarray(elapsed, dtype=float)
    if np.any(elapsed_arr < 0):
        raise ValueError("elapsed must be nonnegative")
    dt = (elapsed_arr / steps)[..., None] if elapsed_arr.ndim else elapsed_arr / steps
    s = np.array(s0, dtype=float)
    cache = []
    for _ in range(steps):
        a = np.tanh(s @ net.w1.T + net.b1)
        f = a @ net.w2.T + net.b2
        cache.append((s, a))
        s = s + dt * f
    return s, (cache, dt)


def ode_evolve(net: OdeDerivativeNet, s0: np.ndarray, elapsed, steps: int) -> np.ndarray:
    s, _ = ode_evolve_forward(net, s0, elapsed, steps)
    return s


def ode_evolve_backward(net: OdeDerivativeNet, cache, grad_s):
    """Backward through all Euler steps: returns (grad_s0, grads dict)."""
    steps_cache, dt = cache
    gw1 = np.zeros_like(net.w1)
    gb1 = np.zeros_like(net.b1)
    gw2 = np.zeros_like(net.w2)
    gb2 = np.zeros_like(net.b2)
    gs = np.array(grad_s)
    batch_sum = tuple(range(gs.ndim - 1))
    for s, a in reversed(steps_cache):
        gf = gs * dt
        flat_gf = gf.reshape(-1, gf.shape[-1])
        flat_a = a.reshape(-1, a.shape[-1])
        gw2 += flat_gf.T @ flat_a
        gb2 += gf.sum(axis=batch_sum)
        ga = gf @ net.w2
        gz = ga * (1.0 - a * a)
        flat_gz = gz.reshape(-1, gz.shape[-1])
        flat_s = s.reshape(-1, s.shape[-1])
        gw1 += flat_gz.T @ flat_s
        gb1 += gz.sum(axis=batch_sum)
        gs = gs + gz @ net.w1
    return gs, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


# --- classification head -------------------------------------------------------

def fc_softmax_forward(p: DenseParams, s: np.ndarray):
    """Linear head plus stable softmax; returns (probs, cache)."""
    logits = dense_forward(p, s)
    logits = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=-1, keepdims=True)
    return probs, (s, probs)


def fc_softmax(p: DenseParams, s: np.ndarray) -> np.ndarray:
    probs, _ = fc_softmax_forward(p, s)
    return probs


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log-likelihood of a 1-based class label, floored at 1e-12."""
    if not 1 <= label <= len(probs):
        raise ValueError(f"label {label} outside [1, {len(probs)}]")
    return float(-np.log(max(float(probs[label - 1]), LOSS_FLOOR)))


def cross_entropy_mean(probs: np.ndarray, labels0: np.ndarray) -> float:
    """Mean cross-entropy over leading axes; labels are 0-based here."""
    picked = np.take_along_axis(probs, labels0[..., None], axis=-1)[..., 0]
    return float(np.mean(-np.log(np.maximum(picked, LOSS_FLOOR))))


def fc_softmax_xent_backward(p: DenseParams, cache, labels0: np.ndarray, grad_scale: float):
    """Fused backward of softmax head + mean cross-entropy.

    grad_scale multiplies each sample's (probs - onehot) contribution; pass
    1/num_samples for a mean-reduced loss.
    """
    s, probs = cache
    glogits = probs.copy()
    flat = glogits.reshape(-1, glogits.shape[-1])
    flat[np.arange(flat.shape[0]), labels0.reshape(-1)] -= 1.0
    glogits *= grad_scale
    return dense_backward(p, s, glogits)


# --- Adam ----------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray], lr: float) -> AdamState:
    return AdamState(
        lr=lr,
        step=0,
        m={k: np.zeros_like(a) for k, a in params.items()},
        v={k: np.zeros_like(a) for k, a in params.items()},
    )


def adam_step(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update; arrays in `params` are updated in place."""
    if set(params) != set(grads):
        raise ValueError("params and grads must share keys")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape mismatch for {k}")
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[k] -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    return params


# --- gradient checking -----------------------------------------------------------

def grad_check(
    f: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error of analytic grads vs central finite differences.

    f(params) must return (loss, grads) with grads keyed like params.
    Relative error divides by max(|analytic|, |numeric|, 1e-8) per coordinate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    _, analytic = f(params)
    worst = 0.0
    for key, arr in params.items():
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            keep = arr[idx]
            arr[idx] = keep + eps
            hi, _ = f(params)
            arr[idx] = keep - eps
            lo, _ = f(params)
            arr[idx] = keep
            numeric = (hi - lo) / (2.0 * eps)
            a = float(analytic[key][idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
            it.iternext()
    return worst


# --- checkpoints -------------------------------------------------------------------

def save_checkpoint(destination, header: dict, params: dict[str, np.ndarray]) -> None:
    """Versioned binary model file ("BMDL").

    header must carry the architecture: variant ("scan"/"track"), ode_enabled,
    and the integer widths input_width, conv_channels, conv_layers, kernel,
    hidden, ode_hidden, out_dim.  Tensors are written in sorted name order as
    (name, rank, dims, little-endian f64 payload).
    """
    close = False
    if isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__"):
        fh = open(destination, "wb")
        close = True
    else:
        fh = destination
    try:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<BB", 0 if header["variant"] == "scan" else 1,
                             1 if header["ode_enabled"] else 0))
        fh.write(
            struct.pack(
                "<7I",
                header["input_width"],
                header["conv_channels"],
                header["conv_layers"],
                header["kernel"],
                header["hidden"],
                header["ode_hidden"],
                header["out_dim"],
            )
        )
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    finally:
        if close:
            fh.close()


def load_checkpoint(source) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a "BMDL" file; returns (header, params)."""
    close = False
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        fh = open(source, "rb")
        close = True
    else:
        fh = source
    try:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError("missing header: expected magic 'BMDL'")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(
                f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )
        variant_tag, ode_flag = struct.unpack("<BB", _read_exact(fh, 2))
        widths = struct.unpack("<7I", _read_exact(fh, 28))
        header = {
            "variant": "scan" if variant_tag == 0 else "track",
            "ode_enabled": bool(ode_flag),
            "input_width": widths[0],
            "conv_channels": widths[1],
            "conv_layers": widths[2],
            "kernel": widths[3],
            "hidden": widths[4],
            "ode_hidden": widths[5],
            "out_dim": widths[6],
        }
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, nlen).decode()
            (rank,) = struct.unpack("<B", _read_exact(fh, 1))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
            n = int(np.prod(dims)) if rank else 1
            payload = _read_exact(fh, 8 * n)
            params[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
        return header, params
    finally:
        if close:
            fh.close()


def check_architecture(found: dict, expected: dict) -> None:
    """Raise a descriptive error when a checkpoint's architecture differs."""
    diffs = [
        f"{k}: checkpoint has {found.get(k)!r}, expected {expected[k]!r}"
        for k in expected
        if found.get(k) != expected[k]
    ]
    if diffs:
        raise CheckpointFormatError("architecture mismatch: " + "; ".join(diffs))


def _read_exact(fh, n: int) -> bytes:
    blob = fh.read(n)
    if len(blob) < n:
        raise CheckpointFormatError("truncated checkpoint")
    return blob
