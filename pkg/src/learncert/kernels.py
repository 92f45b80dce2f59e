"""Hot MLP kernels with a compiled backend and a NumPy fallback.

The compiled extension (``learncert._kernels``) is used when it imports;
otherwise the pure-Python implementations below are selected. Both backends
share the flat parameter layout: for each layer a row-major ``(in, out)``
weight block followed by ``out`` biases.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

ACT_NONE = 0
ACT_RELU = 1
ACT_TANH = 2

ACTIVATIONS = {"relu": ACT_RELU, "tanh": ACT_TANH}


def _py_mlp_logits(theta: np.ndarray, widths: Sequence[int], act: int, x: np.ndarray) -> np.ndarray:
    h = x
    offset = 0
    last = len(widths) - 2
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = theta[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = theta[offset:offset + fan_out]
        offset += fan_out
        h = h @ w + b
        if layer < last:
            if act == ACT_RELU:
                np.maximum(h, 0.0, out=h)
            elif act == ACT_TANH:
                np.tanh(h, out=h)
    return h


def _py_argmax_rows(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. lowest class on ties
    return np.argmax(logits, axis=1).astype(np.int64)


def _py_count_correct(logits: np.ndarray, labels: np.ndarray) -> int:
    return int(np.count_nonzero(_py_argmax_rows(logits) == labels))


def _py_mlp_count_correct(theta, widths, act, x, labels) -> int:
    return _py_count_correct(_py_mlp_logits(theta, widths, act, x), labels)


def _py_sign_clip_step(delta: np.ndarray, grad: np.ndarray, step: float, bound: float) -> None:
    delta -= step * np.sign(grad)
    np.clip(delta, -bound, bound, out=delta)


_PYTHON = {
    "mlp_logits": _py_mlp_logits,
    "argmax_rows": _py_argmax_rows,
    "count_correct": _py_count_correct,
    "mlp_count_correct": _py_mlp_count_correct,
    "sign_clip_step": _py_sign_clip_step,
}

try:
    from learncert import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

_COMPILED = None if _compiled is None else {name: getattr(_compiled, name) for name in _PYTHON}

_active = dict(_COMPILED or _PYTHON)
BACKEND = "compiled" if _COMPILED else "python"


def available_backends() -> list[str]:
    return ["compiled", "python"] if _COMPILED else ["python"]


def use_backend(name: str) -> str:
    """Switch the kernel backend process-wide; returns the previous one."""
    global BACKEND
    if name == "compiled" and _COMPILED is None:
        raise RuntimeError("compiled kernels are not built; run `python setup.py build_ext --inplace`")
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    previous = BACKEND
    _active.clear()
    _active.update(_COMPILED if name == "compiled" else _PYTHON)
    BACKEND = name
    return previous


def _contig(a: np.ndarray, dtype) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=dtype)


def mlp_logits(theta: np.ndarray, widths: Sequence[int], act: int, x: np.ndarray) -> np.ndarray:
    return _active["mlp_logits"](_contig(theta, np.float64), tuple(widths), act, _contig(x, np.float64))


def argmax_rows(logits: np.ndarray) -> np.ndarray:
    return _active["argmax_rows"](_contig(logits, np.float64))


def count_correct(logits: np.ndarray, labels: np.ndarray) -> int:
    return int(_active["count_correct"](_contig(logits, np.float64), _contig(labels, np.int64)))


def mlp_count_correct(theta, widths, act, x, labels) -> int:
    return int(_active["mlp_count_correct"](
        _contig(theta, np.float64), tuple(widths), act, _contig(x, np.float64), _contig(labels, np.int64)
    ))


def sign_clip_step(delta: np.ndarray, grad: np.ndarray, step: float, bound: float) -> None:
    """In-place signed step then clip to ``[-bound, bound]``; ``delta`` must be contiguous float64."""
    if not (delta.flags.c_contiguous and delta.dtype == np.float64):
        raise TypeError("delta must be a C-contiguous float64 array")
    _active["sign_clip_step"](delta.reshape(-1), _contig(grad, np.float64).reshape(-1), float(step), float(bound))
