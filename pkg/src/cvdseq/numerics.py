"""Dense numeric core: activations, losses, Adam, gradient checking.

Everything is float64 numpy. Gradients elsewhere in the package are
hand-derived; `grad_check` is the harness that keeps them honest against
central finite differences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DataError, GradientBlowupError, NumericError

#: Probability clip applied inside the cross-entropy.
BCE_EPS = 1e-7

Params = dict[str, np.ndarray]


def seeded_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for a named substream of the run seed.

    Every random draw in the package flows through this: the run seed plus
    integer stream labels (fold index, patient index, trial index) makes
    each consumer reproducible in isolation.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax(scores, axis: int = -1) -> np.ndarray:
    """Max-shifted exponential normalization along ``axis``."""
    s = np.asarray(scores, dtype=float)
    shifted = s - np.max(s, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def bce_loss(predictions, labels, mask) -> tuple[float, np.ndarray]:
    """Masked binary cross-entropy and its gradient wrt the predictions.

    loss = -sum(mask * (y log p + (1-y) log(1-p))) / max(1, sum(mask))
    with p clipped to [BCE_EPS, 1-BCE_EPS]. Where the clip is active the
    gradient is 0, consistent with the loss actually computed.
    """
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    m = np.asarray(mask, dtype=float)
    if not (p.shape == y.shape == m.shape):
        raise DataError(
            f"bce_loss shape mismatch: predictions {p.shape}, labels {y.shape}, mask {m.shape}"
        )
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    denom = max(1.0, float(m.sum()))
    loss = -float(np.sum(m * (y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))) / denom
    inside = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    grad = np.where(inside, m * (pc - y) / (pc * (1.0 - pc)), 0.0) / denom
    return loss, grad


@dataclass
class AdamState:
    """Optimizer accumulators keyed by parameter-block name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_init(params: Mapping[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(params: Params, grads: Mapping[str, np.ndarray], state: AdamState) -> Params:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    Zero gradients leave parameters untouched (0/(0+eps) update). Any
    non-finite gradient aborts with the offending block named.
    """
    if set(params) != set(grads):
        raise DataError(
            f"adam_step block mismatch: params {sorted(params)} vs grads {sorted(grads)}"
        )
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=float)
        if not np.all(np.isfinite(g)):
            raise GradientBlowupError(name)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def grad_check(
    loss_and_grads: Callable[[Params], tuple[float, Mapping[str, np.ndarray]]],
    params: Params,
    eps: float = 1e-5,
) -> tuple[float, dict[str, float]]:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grads`` must be deterministic. Returns the max relative error
    |a - n| / max(|a|, |n|, 1e-8) overall, plus the per-block maxima.
    Parameters are perturbed in place and restored.
    """
    _, analytic = loss_and_grads(params)
    per_block: dict[str, float] = {}
    for name, p in params.items():
        a = np.asarray(analytic[name], dtype=float)
        numeric = np.zeros(p.size)
        for i in range(p.size):
            orig = p.flat[i]
            p.flat[i] = orig + eps
            up, _ = loss_and_grads(params)
            p.flat[i] = orig - eps
            down, _ = loss_and_grads(params)
            p.flat[i] = orig
            numeric[i] = (up - down) / (2.0 * eps)
        rel = np.abs(a.reshape(-1) - numeric) / np.maximum(
            np.maximum(np.abs(a.reshape(-1)), np.abs(numeric)), 1e-8
        )
        per_block[name] = float(rel.max()) if rel.size else 0.0
    overall = max(per_block.values()) if per_block else 0.0
    return overall, per_block


# ---------------------------------------------------------------------------
# Checkpoint codec: magic, shape table, row-major float64 payload, plus a
# JSON sidecar (same path + ".json") carrying hyperparameters.

_MAGIC = b"CVSQCKP1"


def save_checkpoint(path, params: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    names = list(params)
    for name in names:
        if not np.all(np.isfinite(params[name])):
            raise NumericError(f"checkpoint refused: non-finite values in block {name!r}")
    chunks = [_MAGIC, struct.pack("<I", len(names))]
    for name in names:
        arr = np.asarray(params[name], dtype=float)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.extend(struct.pack("<I", d) for d in arr.shape)
    for name in names:
        chunks.append(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))
    sidecar = {"schema_version": 1, "blocks": names, "meta": dict(meta or {})}
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[Params, dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[: len(_MAGIC)] != _MAGIC:
        raise DataError(f"checkpoint {path}: bad magic bytes")
    off = len(_MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise DataError(f"checkpoint {path}: truncated header")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (n_blocks,) = take("<I")
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(n_blocks):
        (name_len,) = take("<H")
        if off + name_len > len(blob):
            raise DataError(f"checkpoint {path}: truncated header")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = take("<B")
        dims = tuple(take("<I")[0] for _ in range(ndim))
        shapes.append((name, dims))

    params: Params = {}
    for name, dims in shapes:
        count = int(np.prod(dims)) if dims else 1
        size = count * 8
        if off + size > len(blob):
            raise DataError(f"checkpoint {path}: truncated payload for block {name!r}")
        arr = np.frombuffer(blob[off : off + size], dtype="<f8").astype(float).reshape(dims)
        off += size
        params[name] = arr
    if off != len(blob):
        raise DataError(f"checkpoint {path}: {len(blob) - off} trailing bytes")

    try:
        with open(str(path) + ".json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint sidecar for {path}: {exc}") from exc
    return params, sidecar.get("meta", {})
