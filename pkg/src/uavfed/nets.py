"""Dense network engine, stochastic policy heads, RMSProp, checkpoints.

The same flat-parameter dense net backs the federated classifiers, the
actor, and the critic. Hot paths (single-input forward/backward, local SGD)
run through the kernel backend; batched evaluation uses numpy matmuls.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np

from . import backend
from .errors import NonFiniteGradientError, ShapeMismatchError, UavFedError

LOGSTD_MIN = -5.0
LOGSTD_MAX = 2.0

GAUSS_ENTROPY_CONST = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass
class ModelParams:
    """Flat vector of learnable weights plus its layer-size descriptor."""

    values: np.ndarray
    sizes: tuple

    def copy(self) -> "ModelParams":
        return ModelParams(self.values.copy(), self.sizes)


class DenseNet:
    """Fully-connected net: tanh hidden layers, linear output.

    Holds only the architecture; parameter vectors are passed in, so one
    net object can serve many parameter copies (workers, snapshots).
    """

    def __init__(self, sizes):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise ShapeMismatchError(f"bad layer sizes {sizes}")
        self.sizes_arr = np.asarray(self.sizes, dtype=np.int64)
        self.n_params = backend.param_count(self.sizes)
        self.n_acts = backend.act_count(self.sizes)
        self.in_dim = self.sizes[0]
        self.out_dim = self.sizes[-1]

    def init_params(self, rng: np.random.Generator) -> ModelParams:
        """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
        values = np.empty(self.n_params)
        off = 0
        for l in range(len(self.sizes) - 1):
            nin, nout = self.sizes[l], self.sizes[l + 1]
            bound = math.sqrt(6.0 / (nin + nout))
            values[off : off + nout * nin] = rng.uniform(-bound, bound, nout * nin)
            values[off + nout * nin : off + nout * (nin + 1)] = 0.0
            off += nout * (nin + 1)
        return ModelParams(values, self.sizes)

    def _check(self, params: ModelParams):
        if tuple(params.sizes) != self.sizes or len(params.values) != self.n_params:
            raise ShapeMismatchError("parameter vector does not match net shape")

    def forward_acts(self, params: ModelParams, x: np.ndarray) -> np.ndarray:
        """All layer activations for one input; output = acts[-out_dim:]."""
        self._check(params)
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.in_dim,):
            raise ShapeMismatchError(f"input length {x.shape} != {self.in_dim}")
        acts = np.empty(self.n_acts)
        backend.dense_forward(params.values, self.sizes_arr, x, acts)
        return acts

    def forward(self, params: ModelParams, x: np.ndarray) -> np.ndarray:
        return self.forward_acts(params, x)[-self.out_dim :].copy()

    def backward(self, params: ModelParams, x: np.ndarray, acts: np.ndarray,
                 dout: np.ndarray, grad: np.ndarray | None = None,
                 scale: float = 1.0) -> np.ndarray:
        """Accumulate scale * d(loss)/d(params) into grad given dout = d(loss)/d(output)."""
        self._check(params)
        if len(dout) != self.out_dim:
            raise ShapeMismatchError("output-gradient length mismatch")
        if grad is None:
            grad = np.zeros(self.n_params)
        x = np.ascontiguousarray(x, dtype=np.float64)
        dout = np.ascontiguousarray(dout, dtype=np.float64)
        backend.dense_backward(params.values, self.sizes_arr, x, acts, dout, grad, scale)
        return grad

    def batch_forward(self, params: ModelParams, X: np.ndarray) -> np.ndarray:
        """Vectorized forward over rows of X (numpy matmuls)."""
        self._check(params)
        out = np.asarray(X, dtype=np.float64)
        off = 0
        n_layers = len(self.sizes) - 1
        for l in range(n_layers):
            nin, nout = self.sizes[l], self.sizes[l + 1]
            w = params.values[off : off + nout * nin].reshape(nout, nin)
            b = params.values[off + nout * nin : off + nout * (nin + 1)]
            out = out @ w.T + b
            if l < n_layers - 1:
                out = np.tanh(out)
            off += nout * (nin + 1)
        return out


# ---------------------------------------------------------------------------
# Policy heads


class HeadLayout:
    """Slices of the actor output vector.

    Order: per-device selection logits (K), per-device subchannel logits
    (K*M), position mean (2), position log-std (2), power mean (1), power
    log-std (1).
    """

    def __init__(self, num_devices: int, num_subchannels: int):
        self.num_devices = num_devices
        self.num_subchannels = num_subchannels
        k, m = num_devices, num_subchannels
        self.sel = slice(0, k)
        self.sub = slice(k, k + k * m)
        self.pos_mean = slice(k + k * m, k + k * m + 2)
        self.pos_logstd = slice(k + k * m + 2, k + k * m + 4)
        self.pow_mean = k + k * m + 4
        self.pow_logstd = k + k * m + 5
        self.out_dim = k + k * m + 6

    def sub_logits(self, out: np.ndarray) -> np.ndarray:
        return out[self.sub].reshape(self.num_devices, self.num_subchannels)


@dataclass
class HeadSample:
    """One sampled joint action plus the quantities training needs."""

    sel_bits: np.ndarray      # (K,) int8; only in-cell devices may be 1
    sub_idx: np.ndarray       # (K,) int64; -1 where unselected
    z_pos: np.ndarray         # (2,) pre-squash position sample
    z_pow: float              # pre-squash power sample
    position: tuple           # squashed (x, y), meters
    power: float              # squashed watts
    log_prob: float
    entropy: float


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _log_sigmoid(v):
    # -softplus(-v), stable for both signs
    return np.where(v >= 0, -np.log1p(np.exp(-v)), v - np.log1p(np.exp(v)))


def _softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def _clamped_logstd(raw):
    return np.clip(raw, LOGSTD_MIN, LOGSTD_MAX)


def _gauss_logpdf(z, mean, logstd):
    std = np.exp(logstd)
    return -0.5 * math.log(2.0 * math.pi) - logstd - 0.5 * ((z - mean) / std) ** 2


def _squash_correction(z, scale):
    # log |d(scale*sigmoid(z))/dz| = log(scale) - softplus(z) - softplus(-z)
    return math.log(scale) + float(_log_sigmoid(z) + _log_sigmoid(-z))


def sample_action(out: np.ndarray, layout: HeadLayout, in_cell: np.ndarray,
                  area: tuple, p_max: float, rng: np.random.Generator,
                  deterministic: bool = False) -> HeadSample:
    """Sample a joint action from the head outputs.

    `in_cell` lists the device indices this agent may select. Feasibility is
    enforced by construction: at most M devices stay selected (greedy repair
    keeps the highest-probability ones and hands them distinct subchannels),
    at least one device is selected when the cell is nonempty, and the
    squashed position/power always fall inside the service area / power cap.
    The returned log_prob and entropy describe the executed action.
    """
    k, m = layout.num_devices, layout.num_subchannels
    sel_bits = np.zeros(k, dtype=np.int8)
    sub_idx = np.full(k, -1, dtype=np.int64)
    sel_logits = out[layout.sel]
    probs = _sigmoid(sel_logits)

    if len(in_cell):
        if deterministic:
            picked = probs[in_cell] > 0.5
        else:
            picked = rng.random(len(in_cell)) < probs[in_cell]
        sel_bits[in_cell[picked]] = 1
        chosen = np.flatnonzero(sel_bits)
        if len(chosen) == 0:
            best = in_cell[int(np.argmax(probs[in_cell]))]
            sel_bits[best] = 1
            chosen = np.array([best])
        repaired = len(chosen) > m
        if repaired:
            order = chosen[np.argsort(-probs[chosen], kind="stable")][:m]
            sel_bits[:] = 0
            sel_bits[order] = 1
            used = np.zeros(m, dtype=bool)
            for dev in order:
                q = _softmax(layout.sub_logits(out)[dev])
                q = np.where(used, -1.0, q)
                pick = int(np.argmax(q))
                sub_idx[dev] = pick
                used[pick] = True
            chosen = np.sort(order)
        else:
            for dev in chosen:
                q = _softmax(layout.sub_logits(out)[dev])
                if deterministic:
                    sub_idx[dev] = int(np.argmax(q))
                else:
                    sub_idx[dev] = int(rng.choice(m, p=q))

    pos_mean = out[layout.pos_mean]
    pos_logstd = _clamped_logstd(out[layout.pos_logstd])
    pow_mean = out[layout.pow_mean]
    pow_logstd = float(_clamped_logstd(out[layout.pow_logstd]))
    if deterministic:
        z_pos = pos_mean.copy()
        z_pow = float(pow_mean)
    else:
        z_pos = pos_mean + np.exp(pos_logstd) * rng.standard_normal(2)
        z_pow = float(pow_mean + math.exp(pow_logstd) * rng.standard_normal())
    position = (float(area[0] * _sigmoid(z_pos[0])), float(area[1] * _sigmoid(z_pos[1])))
    power = float(p_max * _sigmoid(z_pow))

    sample = HeadSample(sel_bits, sub_idx, z_pos, z_pow, position, power, 0.0, 0.0)
    sample.log_prob, sample.entropy = head_log_prob(out, layout, sample, in_cell, area, p_max)
    return sample


def head_log_prob(out: np.ndarray, layout: HeadLayout, sample: HeadSample,
                  in_cell: np.ndarray, area: tuple, p_max: float):
    """Log-probability and entropy of a fixed executed action under `out`.

    Differentiable in `out`; used both at sampling time and by the
    finite-difference gradient checks.
    """
    logp = 0.0
    entropy = 0.0
    sel_logits = out[layout.sel]
    for dev in in_cell:
        l = sel_logits[dev]
        lp1 = float(_log_sigmoid(l))
        lp0 = float(_log_sigmoid(-l))
        logp += lp1 if sample.sel_bits[dev] else lp0
        p = float(_sigmoid(l))
        entropy += -(p * lp1 + (1.0 - p) * lp0)
    for dev in np.flatnonzero(sample.sel_bits):
        logits = layout.sub_logits(out)[dev]
        q = _softmax(logits)
        logp += float(np.log(q[sample.sub_idx[dev]]))
        entropy += float(-(q * np.log(q)).sum())
    pos_mean = out[layout.pos_mean]
    pos_logstd = _clamped_logstd(out[layout.pos_logstd])
    for i in range(2):
        logp += float(_gauss_logpdf(sample.z_pos[i], pos_mean[i], pos_logstd[i]))
        logp -= _squash_correction(sample.z_pos[i], area[i])
        entropy += GAUSS_ENTROPY_CONST + float(pos_logstd[i])
    pow_logstd = float(_clamped_logstd(out[layout.pow_logstd]))
    logp += float(_gauss_logpdf(sample.z_pow, out[layout.pow_mean], pow_logstd))
    logp -= _squash_correction(sample.z_pow, p_max)
    entropy += GAUSS_ENTROPY_CONST + pow_logstd
    return float(logp), float(entropy)


def head_grads(out: np.ndarray, layout: HeadLayout, sample: HeadSample,
               in_cell: np.ndarray):
    """d(log_prob)/d(out) and d(entropy)/d(out) for a fixed executed action."""
    dlogp = np.zeros_like(out)
    dent = np.zeros_like(out)
    sel_logits = out[layout.sel]
    for dev in in_cell:
        l = sel_logits[dev]
        p = float(_sigmoid(l))
        dlogp[dev] = float(sample.sel_bits[dev]) - p
        lp1 = float(_log_sigmoid(l))
        lp0 = float(_log_sigmoid(-l))
        dent[dev] = p * (1.0 - p) * (lp0 - lp1)
    k = layout.num_devices
    m = layout.num_subchannels
    for dev in np.flatnonzero(sample.sel_bits):
        logits = layout.sub_logits(out)[dev]
        q = _softmax(logits)
        base = k + dev * m
        grad_row = -q.copy()
        grad_row[sample.sub_idx[dev]] += 1.0
        dlogp[base : base + m] = grad_row
        h = float(-(q * np.log(q)).sum())
        dent[base : base + m] = -q * (np.log(q) + h)
    pos_mean = out[layout.pos_mean]
    raw_logstd = out[layout.pos_logstd]
    pos_logstd = _clamped_logstd(raw_logstd)
    std2 = np.exp(2.0 * pos_logstd)
    zm = sample.z_pos - pos_mean
    dlogp[layout.pos_mean] = zm / std2
    in_range = (raw_logstd > LOGSTD_MIN) & (raw_logstd < LOGSTD_MAX)
    dlogp[layout.pos_logstd] = np.where(in_range, zm * zm / std2 - 1.0, 0.0)
    dent[layout.pos_logstd] = np.where(in_range, 1.0, 0.0)
    raw_pow = out[layout.pow_logstd]
    pow_logstd = float(_clamped_logstd(raw_pow))
    zp = sample.z_pow - out[layout.pow_mean]
    dlogp[layout.pow_mean] = zp / math.exp(2.0 * pow_logstd)
    if LOGSTD_MIN < raw_pow < LOGSTD_MAX:
        dlogp[layout.pow_logstd] = zp * zp / math.exp(2.0 * pow_logstd) - 1.0
        dent[layout.pow_logstd] = 1.0
    return dlogp, dent


# ---------------------------------------------------------------------------
# Non-centered RMSProp


@dataclass
class RmsPropState:
    """Running squared-gradient accumulator and step-size constants."""

    g: np.ndarray
    alpha: float = 0.99
    beta: float = 1e-4
    eps: float = 1e-5

    @classmethod
    def zeros(cls, n: int, alpha: float, beta: float, eps: float) -> "RmsPropState":
        return cls(np.zeros(n), alpha, beta, eps)


def rmsprop_update(state: RmsPropState, params: np.ndarray, delta: np.ndarray):
    """In-place update: g <- a*g + (1-a)*delta^2, p <- p - beta*delta/sqrt(g+eps)."""
    if delta.shape != params.shape or state.g.shape != params.shape:
        raise ShapeMismatchError("gradient/state shape mismatch")
    if not np.isfinite(delta).all():
        raise NonFiniteGradientError("non-finite accumulated gradient")
    state.g *= state.alpha
    state.g += (1.0 - state.alpha) * delta * delta
    params -= state.beta * delta / np.sqrt(state.g + state.eps)
    if not np.isfinite(params).all():
        raise NonFiniteGradientError("parameters left the finite range")


# ---------------------------------------------------------------------------
# Checkpoints

CKPT_MAGIC = b"UFNC"
CKPT_VERSION = 1


def save_checkpoint(path, params: ModelParams):
    """Binary layout: magic, u32 version, u32 layer count, u64 layer sizes,
    then the raw little-endian float64 parameter vector."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(params.sizes)))
        fh.write(np.asarray(params.sizes, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(params.values, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CKPT_MAGIC:
            raise UavFedError(f"{path}: not a checkpoint file")
        header = fh.read(8)
        if len(header) != 8:
            raise UavFedError(f"{path}: truncated checkpoint header")
        version, n_sizes = struct.unpack("<II", header)
        if version != CKPT_VERSION:
            raise UavFedError(f"{path}: unsupported checkpoint version {version}")
        raw_sizes = fh.read(8 * n_sizes)
        if len(raw_sizes) != 8 * n_sizes or n_sizes < 2:
            raise UavFedError(f"{path}: corrupt shape descriptor")
        sizes = tuple(int(v) for v in np.frombuffer(raw_sizes, dtype="<u8"))
        count = backend.param_count(sizes)
        values = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
        if len(values) != count:
            raise UavFedError(f"{path}: truncated checkpoint")
    return ModelParams(values, sizes)


def checkpoint_to_text(path) -> str:
    """Human-readable dump of a checkpoint: shape line then one value per line."""
    params = load_checkpoint(path)
    lines = ["sizes " + " ".join(str(s) for s in params.sizes)]
    lines.extend(repr(float(v)) for v in params.values)
    return "\n".join(lines) + "\n"
