"""Small float64 numeric kernel with hand-written backward passes.

Arrays are plain 2-D numpy arrays. Every forward op checks its output is
finite and raises ``NonFiniteError`` otherwise.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np


class NonFiniteError(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {what}")
    return x


def linear_fwd(x: np.ndarray, W: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {W.shape[0]}")
    y = x @ W
    if b is not None:
        y = y + b
    return check_finite(y, "linear output")


def linear_bwd(x: np.ndarray, W: np.ndarray, dy: np.ndarray):
    """Returns ``(dx, dW, db)``."""
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (x > 0.0)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu_fwd(x: np.ndarray) -> np.ndarray:
    """tanh approximation of GELU."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_bwd(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


ACTIVATIONS = {"relu": (relu_fwd, relu_bwd), "gelu": (gelu_fwd, gelu_bwd)}


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax_row(x: np.ndarray) -> np.ndarray:
    """Softmax along the last axis (each row sums to 1)."""
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_row(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_attention_fwd(q: np.ndarray, k: np.ndarray, v: np.ndarray):
    """Single-head scaled dot-product attention of ``q`` rows over ``k``/``v``.

    Returns ``(out, attn)``; keep ``attn`` for the backward pass.
    """
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention shapes q{q.shape} k{k.shape} v{v.shape}")
    scale = 1.0 / math.sqrt(q.shape[1])
    attn = softmax_row((q @ k.T) * scale)
    return check_finite(attn @ v, "attention output"), attn


def cross_attention_bwd(dout: np.ndarray, q: np.ndarray, k: np.ndarray, v: np.ndarray, attn: np.ndarray):
    """Returns ``(dq, dk, dv)``."""
    scale = 1.0 / math.sqrt(q.shape[1])
    dv = attn.T @ dout
    dattn = dout @ v.T
    dscores = attn * (dattn - (dattn * attn).sum(axis=1, keepdims=True))
    dq = dscores @ k * scale
    dk = dscores.T @ q * scale
    return dq, dk, dv


def ce_loss(logits: np.ndarray, target: int, weight: float = 1.0):
    """Cross-entropy of one logit vector against a class index.

    Returns ``(loss, dlogits)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.shape[-1]:
        raise IndexError(f"target {target} outside {logits.shape[-1]} classes")
    lp = log_softmax_row(logits)
    grad = np.exp(lp)
    grad[target] -= 1.0
    return -weight * float(lp[target]), weight * grad


# -- parameters and optimizer -------------------------------------------------

@dataclass
class ParamStore:
    params: dict[str, np.ndarray] = field(default_factory=dict)
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        value = np.array(value, dtype=np.float64)
        if value.ndim == 1:
            value = value.reshape(1, -1)
        if value.ndim != 2 or min(value.shape) < 1:
            raise ShapeError(f"parameter {name} must be a non-empty 2-D array")
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def n_params(self, prefixes: Optional[tuple[str, ...]] = None) -> int:
        return sum(p.size for n, p in self.params.items() if prefixes is None or n.startswith(prefixes))

    def copy(self) -> "ParamStore":
        out = ParamStore(t=self.t)
        for n in self.params:
            out.params[n] = self.params[n].copy()
            out.grads[n] = self.grads[n].copy()
            out.m[n] = self.m[n].copy()
            out.v[n] = self.v[n].copy()
        return out


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(store: ParamStore, hyper: AdamHyper = AdamHyper()) -> None:
    """One Adam update of every parameter in place from ``store.grads``."""
    store.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1**store.t
    c2 = 1.0 - b2**store.t
    for name, p in store.params.items():
        g = store.grads[name]
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)


def warmup_cosine_lr(step: int, total_steps: int, base_lr: float, warmup_fraction: float) -> float:
    """Linear warmup over ``warmup_fraction`` of the run, then cosine decay to 0."""
    warm = int(round(total_steps * warmup_fraction))
    if warm > 0 and step < warm:
        return base_lr * (step + 1) / warm
    span = max(1, total_steps - warm)
    progress = min(1.0, (step - warm) / span)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


@dataclass
class GradCheckReport:
    max_error: float
    worst: Optional[tuple[str, int]]
    checked: int
    # coordinates whose central difference is not converged at ``eps``
    unresolved: list[tuple[str, int]] = field(default_factory=list)
    # maximum over every coordinate, unresolved ones included
    strict_error: float = 0.0


def grad_check_report(
    fn: Callable[[], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-4,
    names: Optional[list[str]] = None,
    resolve_tol: Optional[float] = None,
) -> GradCheckReport:
    """``grad_check`` plus the location of the worst coordinate.

    With ``resolve_tol`` set, a coordinate whose error reaches the tolerance
    is tested for whether its central difference can resolve the derivative
    to that tolerance at all. It cannot when

    * the difference quotient's granularity, one float64 spacing of the loss
      over ``2 * eps``, is at least ``resolve_tol`` times its magnitude, or
    * re-measuring at ``eps / 4`` or ``4 * eps`` moves it by ``resolve_tol``
      or more (a kink within reach of the step, or dominant curvature).

    Such coordinates go to ``unresolved`` instead of the maximum. The
    analytic value plays no part in that decision.
    """
    _, analytic = fn()
    analytic = {k: np.array(v, dtype=np.float64) for k, v in analytic.items()}
    report = GradCheckReport(0.0, None, 0)

    def central(flat, idx, h):
        orig = flat[idx]
        flat[idx] = orig + h
        lp, _ = fn()
        flat[idx] = orig - h
        lm, _ = fn()
        flat[idx] = orig
        return (lp - lm) / (2.0 * h), float(np.spacing(max(abs(lp), abs(lm)))) / (2.0 * h)

    def unresolved(flat, idx, num, grain) -> bool:
        if grain >= resolve_tol * abs(num):
            return True
        return any(_rel_err(num, central(flat, idx, h)[0]) >= resolve_tol for h in (eps / 4.0, 4.0 * eps))

    for name in names or list(params):
        flat = params[name].reshape(-1)
        a = analytic[name].reshape(-1)
        for idx in range(flat.size):
            num, grain = central(flat, idx, eps)
            err = _rel_err(a[idx], num)
            report.strict_error = max(report.strict_error, err)
            if resolve_tol is not None and err >= resolve_tol and unresolved(flat, idx, num, grain):
                report.unresolved.append((name, idx))
                continue
            report.checked += 1
            if report.worst is None or err > report.max_error:
                report.max_error = err
                report.worst = (name, idx)
    return report


def grad_check(
    fn: Callable[[], tuple[float, Mapping[str, np.ndarray]]],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-4,
    names: Optional[list[str]] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn()`` evaluates the loss at the current contents of ``params`` and
    returns ``(loss, grads)``. Parameters are perturbed in place and restored.
    Per coordinate the error is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    return grad_check_report(fn, params, eps, names).max_error


# -- checkpoint format ----------------------------------------------------------
#
#   magic   b"GPCK"
#   u32     format version (1)
#   u32     metadata length L, then L bytes of UTF-8 JSON (sorted keys)
#   u32     tensor count N
#   N x:    u16 name length, UTF-8 name, u32 rows, u32 cols,
#           rows*cols little-endian float64, row-major
#
# Tensors are written in sorted name order so equal stores give equal bytes.

CHECKPOINT_MAGIC = b"GPCK"
CHECKPOINT_VERSION = 1


def checkpoint_bytes(params: Mapping[str, np.ndarray], meta: Optional[dict] = None) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    blob = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        if arr.ndim != 2:
            raise ShapeError(f"tensor {name} is not 2-D")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<II", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def parse_checkpoint(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    try:
        return _parse_checkpoint(memoryview(data))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"corrupt checkpoint: {exc}") from exc


def _parse_checkpoint(view: memoryview) -> tuple[dict[str, np.ndarray], dict]:
    if bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 8
    (mlen,) = struct.unpack_from("<I", view, off)
    off += 4
    meta = json.loads(bytes(view[off:off + mlen]).decode("utf-8"))
    off += mlen
    (count,) = struct.unpack_from("<I", view, off)
    off += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", view, off)
        off += 2
        name = bytes(view[off:off + nlen]).decode("utf-8")
        off += nlen
        rows, cols = struct.unpack_from("<II", view, off)
        off += 8
        n = rows * cols
        if off + 8 * n > len(view):
            raise ValueError(f"checkpoint truncated inside tensor {name}")
        params[name] = np.frombuffer(view[off:off + 8 * n], dtype="<f8").reshape(rows, cols).astype(np.float64)
        off += 8 * n
    if off != len(view):
        raise ValueError("trailing bytes after checkpoint tensors")
    return params, meta


def save_checkpoint(path, params: Mapping[str, np.ndarray], meta: Optional[dict] = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, meta))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    return parse_checkpoint(Path(path).read_bytes())
