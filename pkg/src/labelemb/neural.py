"""Hand-written forward/backward kernels: GRU, dense layers, gradient checks.

Tensors are plain float64 numpy arrays held in ``dict[str, ndarray]``
parameter maps.  Forward functions return ``(output, tape)``; the tape keeps
the activations the matching backward call needs.

GRU step (gates ordered z, r, c in the stacked weight matrices)::

    hd = h_prev * mask                      # recurrent dropout, fixed per utterance
    z  = sigmoid(x Wz + hd Uz + bz)
    r  = sigmoid(x Wr + hd Ur + br)
    c  = tanh(x Wc + (r * hd) Uc + bc)
    h  = z * h_prev + (1 - z) * c
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

CHECKPOINT_VERSION = 1


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def sigmoid(x):
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_gru(rng, d_in, hidden, prefix):
    return {
        f"{prefix}.W": glorot_uniform(rng, d_in, hidden, (d_in, 3 * hidden)),
        f"{prefix}.U": glorot_uniform(rng, hidden, hidden, (hidden, 3 * hidden)),
        f"{prefix}.b": np.zeros(3 * hidden),
    }


@dataclass
class GruTape:
    inputs: np.ndarray
    h_prev: np.ndarray
    h_drop: np.ndarray
    z: np.ndarray
    r: np.ndarray
    c: np.ndarray
    mask: np.ndarray | None


def gru_forward(inputs, W, U, b, mask=None):
    """Run one direction over ``inputs`` of shape (B, T, d_in) from a zero state."""
    batch, steps, _ = inputs.shape
    hidden = U.shape[0]
    x_proj = inputs @ W + b
    Uz, Ur, Uc = U[:, :hidden], U[:, hidden:2 * hidden], U[:, 2 * hidden:]
    h = np.zeros((batch, hidden))
    outputs = np.empty((batch, steps, hidden))
    h_prev = np.empty_like(outputs)
    h_drop = np.empty_like(outputs)
    zs, rs, cs = (np.empty_like(outputs) for _ in range(3))
    for t in range(steps):
        hd = h if mask is None else h * mask
        xz, xr, xc = np.split(x_proj[:, t], 3, axis=-1)
        z = sigmoid(xz + hd @ Uz)
        r = sigmoid(xr + hd @ Ur)
        c = np.tanh(xc + (r * hd) @ Uc)
        h_prev[:, t], h_drop[:, t] = h, hd
        zs[:, t], rs[:, t], cs[:, t] = z, r, c
        h = z * h + (1.0 - z) * c
        outputs[:, t] = h
    return outputs, GruTape(inputs, h_prev, h_drop, zs, rs, cs, mask)


def gru_backward(d_out, tape: GruTape, W, U):
    """Backprop through time.  Returns (d_inputs, dW, dU, db)."""
    batch, steps, hidden = d_out.shape
    Uz, Ur, Uc = U[:, :hidden], U[:, hidden:2 * hidden], U[:, 2 * hidden:]
    dU = np.zeros_like(U)
    d_proj = np.empty((batch, steps, 3 * hidden))
    dh_next = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        dh = d_out[:, t] + dh_next
        z, r, c = tape.z[:, t], tape.r[:, t], tape.c[:, t]
        h_prev, hd = tape.h_prev[:, t], tape.h_drop[:, t]
        dz = dh * (h_prev - c)
        dac = dh * (1.0 - z) * (1.0 - c * c)
        d_rhd = dac @ Uc.T
        daz = dz * z * (1.0 - z)
        dar = d_rhd * hd * r * (1.0 - r)
        dU[:, :hidden] += hd.T @ daz
        dU[:, hidden:2 * hidden] += hd.T @ dar
        dU[:, 2 * hidden:] += (r * hd).T @ dac
        dhd = d_rhd * r + daz @ Uz.T + dar @ Ur.T
        if tape.mask is not None:
            dhd = dhd * tape.mask
        dh_next = dh * z + dhd
        d_proj[:, t, :hidden] = daz
        d_proj[:, t, hidden:2 * hidden] = dar
        d_proj[:, t, 2 * hidden:] = dac
    dW = np.einsum("btd,bth->dh", tape.inputs, d_proj)
    db = d_proj.sum(axis=(0, 1))
    d_inputs = d_proj @ W.T
    return d_inputs, dW, dU, db


def reverse_index(lengths, steps):
    """Per-row index that reverses the first ``length`` positions, keeps the rest."""
    pos = np.arange(steps)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(pos < lengths, lengths - 1 - pos, pos)


def _gather_time(x, index):
    return np.take_along_axis(x, index[..., None], axis=1)


@dataclass
class BiGruTape:
    forward: GruTape
    backward: GruTape
    index: np.ndarray


def bigru_forward(inputs, params, prefix="gru", lengths=None, masks=(None, None)):
    """Bidirectional GRU.  ``inputs`` is (k, d_in) or (B, T, d_in).

    The backward direction reads each sequence reversed within its own
    length, so right padding never leaks into real positions.
    Output is (…, 2h): forward states then backward states.
    """
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None]
    batch, steps, _ = inputs.shape
    if lengths is None:
        lengths = np.full(batch, steps)
    index = reverse_index(lengths, steps)
    fwd_out, fwd_tape = gru_forward(
        inputs, params[f"{prefix}.fwd.W"], params[f"{prefix}.fwd.U"], params[f"{prefix}.fwd.b"], masks[0]
    )
    bwd_out, bwd_tape = gru_forward(
        _gather_time(inputs, index),
        params[f"{prefix}.bwd.W"], params[f"{prefix}.bwd.U"], params[f"{prefix}.bwd.b"], masks[1],
    )
    out = np.concatenate([fwd_out, _gather_time(bwd_out, index)], axis=-1)
    tape = BiGruTape(fwd_tape, bwd_tape, index)
    return (out[0] if single else out), tape


def bigru_backward(d_out, tape: BiGruTape, params, prefix="gru"):
    single = d_out.ndim == 2
    if single:
        d_out = d_out[None]
    hidden = d_out.shape[-1] // 2
    grads = {}
    d_in_f, *g = gru_backward(d_out[..., :hidden], tape.forward,
                              params[f"{prefix}.fwd.W"], params[f"{prefix}.fwd.U"])
    grads.update(zip((f"{prefix}.fwd.W", f"{prefix}.fwd.U", f"{prefix}.fwd.b"), g))
    d_rev = _gather_time(d_out[..., hidden:], tape.index)
    d_in_rev, *g = gru_backward(d_rev, tape.backward,
                                params[f"{prefix}.bwd.W"], params[f"{prefix}.bwd.U"])
    grads.update(zip((f"{prefix}.bwd.W", f"{prefix}.bwd.U", f"{prefix}.bwd.b"), g))
    # The reversal index is an involution, so gathering again undoes it.
    d_inputs = d_in_f + _gather_time(d_in_rev, tape.index)
    return (d_inputs[0] if single else d_inputs), grads


def recurrent_masks(rng, batch, hidden, rate):
    """One inverted-dropout mask per utterance and direction, fixed over time."""
    if rate <= 0:
        return None, None
    keep = 1.0 - rate
    return tuple(
        (rng.random((batch, hidden)) < keep) / keep for _ in range(2)
    )


ACTIVATIONS = {
    "none": (lambda a: a, lambda a, y: np.ones_like(a)),
    "relu": (lambda a: np.maximum(a, 0.0), lambda a, y: (a > 0).astype(a.dtype)),
    "tanh": (np.tanh, lambda a, y: 1.0 - y * y),
}


def dense_forward(x, W, b, activation="none"):
    pre = x @ W + b
    return ACTIVATIONS[activation][0](pre), (x, pre, activation)


def dense_backward(d_out, tape, W):
    """Returns (d_x, dW, db) for inputs of any leading shape."""
    x, pre, activation = tape
    fn, deriv = ACTIVATIONS[activation]
    d_pre = d_out * deriv(pre, fn(pre))
    flat_x = x.reshape(-1, x.shape[-1])
    flat_d = d_pre.reshape(-1, d_pre.shape[-1])
    dW = flat_x.T @ flat_d
    db = flat_d.sum(axis=0)
    return d_pre @ W.T, dW, db


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def failed(self) -> list[str]:
        return [name for name, err in self.errors.items() if not err < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failed

    def lines(self) -> list[str]:
        return [
            f"{'ok  ' if err < self.tolerance else 'FAIL'} {name:<16} max rel err {err:.3e}"
            for name, err in self.errors.items()
        ]


def relative_error(analytic, numeric, floor=1e-5):
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(loss_fn: Callable[[], float], params, analytic, epsilon=1e-5, tolerance=1e-4,
               names=None, floor=1e-5) -> GradCheckReport:
    """Compare ``analytic`` gradients with central finite differences of ``loss_fn``.

    ``loss_fn`` reads ``params`` in place; every entry is perturbed and
    restored.  Per-entry relative error is |a - n| / max(|a| + |n|, floor).
    Central differences at epsilon=1e-5 resolve gradients only down to about
    1e-10 absolute, so entries far below ``floor`` are judged on that scale.
    """
    report = GradCheckReport(tolerance=tolerance)
    for name in names or params:
        tensor = params[name]
        numeric = np.zeros_like(tensor)
        flat, num_flat = tensor.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn()
            flat[i] = orig - epsilon
            down = loss_fn()
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * epsilon)
        err = relative_error(analytic[name], numeric, floor)
        report.errors[name] = float(err.max()) if err.size else 0.0
    return report


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict[str, str] | None = None):
    """Versioned ``.npz`` container: little-endian float64, row-major payloads."""
    payload = {f"t/{k}": np.ascontiguousarray(v, dtype="<f8") for k, v in tensors.items()}
    payload["__version__"] = np.array([CHECKPOINT_VERSION], dtype="<i8")
    for k, v in (meta or {}).items():
        payload[f"m/{k}"] = np.array(v)
    with Path(path).open("wb") as fh:
        np.savez(fh, **payload)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["__version__"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        tensors = {k[2:]: data[k].astype(np.float64) for k in data.files if k.startswith("t/")}
        meta = {k[2:]: str(data[k]) for k in data.files if k.startswith("m/")}
    return tensors, meta
