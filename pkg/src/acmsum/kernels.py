"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Every kernel exists in two equivalent implementations:

* ``_<name>_numpy`` -- vectorized numpy, always available.
* ``_<name>_numba`` -- ``@njit``-compiled loops, used when numba imports.

The active backend is chosen once at import time.  Set the environment
variable ``ACMSUM_KERNELS=numpy`` to force the fallback path (useful for
debugging and for the benchmark in ``benchmarks/bench_kernels.py``).
All kernels are single-threaded so results are reproducible run to run.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import erf as _erf

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        return wrap


_INV_SQRT2 = 0.7071067811865475244
_INV_SQRT_2PI = 0.3989422804014326779


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _softmax_rows_numpy(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_rows_grad_numpy(p: np.ndarray, gout: np.ndarray) -> np.ndarray:
    inner = (gout * p).sum(axis=1, keepdims=True)
    return p * (gout - inner)


def _layer_norm_rows_numpy(x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return (x - mean) * inv_std, inv_std[:, 0]


def _layer_norm_rows_grad_numpy(
    y: np.ndarray, inv_std: np.ndarray, gout: np.ndarray
) -> np.ndarray:
    g_mean = gout.mean(axis=1, keepdims=True)
    gy_mean = (gout * y).mean(axis=1, keepdims=True)
    return inv_std[:, None] * (gout - g_mean - y * gy_mean)


def _gelu_numpy(x: np.ndarray) -> np.ndarray:
    # exact erf variant, not the tanh approximation
    return 0.5 * x * (1.0 + _erf(x * _INV_SQRT2))


def _gelu_grad_numpy(x: np.ndarray, gout: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return gout * (cdf + x * pdf)


def _scatter_add_rows_numpy(out: np.ndarray, ids: np.ndarray, vals: np.ndarray) -> None:
    np.add.at(out, ids, vals)


def _adam_step_numpy(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    bias1: float,
    bias2: float,
) -> None:
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


def _lcs_len_numpy(a: np.ndarray, b: np.ndarray) -> int:
    if a.size == 0 or b.size == 0:
        return 0
    prev = np.zeros(b.size + 1, dtype=np.int64)
    shifted = np.empty(b.size + 1, dtype=np.int64)
    for i in range(a.size):
        match = (b == a[i]).astype(np.int64)
        shifted[0] = 0
        shifted[1:] = prev[:-1] + match
        # dp[i][j] = max(dp[i-1][j], dp[i][j-1], dp[i-1][j-1] + match) collapses
        # to a prefix max over the candidate row
        prev = np.maximum.accumulate(np.maximum(prev, shifted))
    return int(prev[-1])


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily, cached on disk)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _softmax_rows_numba(x):
    n, d = x.shape
    out = np.empty((n, d))
    for i in range(n):
        row_max = x[i, 0]
        for j in range(1, d):
            if x[i, j] > row_max:
                row_max = x[i, j]
        total = 0.0
        for j in range(d):
            e = math.exp(x[i, j] - row_max)
            out[i, j] = e
            total += e
        for j in range(d):
            out[i, j] /= total
    return out


@njit(cache=True)
def _softmax_rows_grad_numba(p, gout):
    n, d = p.shape
    out = np.empty((n, d))
    for i in range(n):
        inner = 0.0
        for j in range(d):
            inner += gout[i, j] * p[i, j]
        for j in range(d):
            out[i, j] = p[i, j] * (gout[i, j] - inner)
    return out


@njit(cache=True)
def _layer_norm_rows_numba(x, eps):
    n, d = x.shape
    y = np.empty((n, d))
    inv_std = np.empty(n)
    for i in range(n):
        mean = 0.0
        for j in range(d):
            mean += x[i, j]
        mean /= d
        var = 0.0
        for j in range(d):
            diff = x[i, j] - mean
            var += diff * diff
        var /= d
        s = 1.0 / math.sqrt(var + eps)
        inv_std[i] = s
        for j in range(d):
            y[i, j] = (x[i, j] - mean) * s
    return y, inv_std


@njit(cache=True)
def _layer_norm_rows_grad_numba(y, inv_std, gout):
    n, d = y.shape
    out = np.empty((n, d))
    for i in range(n):
        g_mean = 0.0
        gy_mean = 0.0
        for j in range(d):
            g_mean += gout[i, j]
            gy_mean += gout[i, j] * y[i, j]
        g_mean /= d
        gy_mean /= d
        for j in range(d):
            out[i, j] = inv_std[i] * (gout[i, j] - g_mean - y[i, j] * gy_mean)
    return out


@njit(cache=True)
def _gelu_numba(x):
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        out[i] = 0.5 * flat[i] * (1.0 + math.erf(flat[i] * _INV_SQRT2))
    return out.reshape(x.shape)


@njit(cache=True)
def _gelu_grad_numba(x, gout):
    out = np.empty(x.size)
    fx = x.ravel()
    fg = gout.ravel()
    for i in range(fx.size):
        cdf = 0.5 * (1.0 + math.erf(fx[i] * _INV_SQRT2))
        pdf = _INV_SQRT_2PI * math.exp(-0.5 * fx[i] * fx[i])
        out[i] = fg[i] * (cdf + fx[i] * pdf)
    return out.reshape(x.shape)


@njit(cache=True)
def _scatter_add_rows_numba(out, ids, vals):
    n, d = vals.shape
    for i in range(n):
        row = ids[i]
        for j in range(d):
            out[row, j] += vals[i, j]


@njit(cache=True)
def _adam_step_numba(p, g, m, v, lr, beta1, beta2, eps, bias1, bias2):
    for i in range(p.size):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / bias1) / (math.sqrt(v[i] / bias2) + eps)


@njit(cache=True)
def _lcs_len_numba(a, b):
    la = a.size
    lb = b.size
    if la == 0 or lb == 0:
        return 0
    prev = np.zeros(lb + 1, dtype=np.int64)
    curr = np.zeros(lb + 1, dtype=np.int64)
    for i in range(1, la + 1):
        curr[0] = 0
        for j in range(1, lb + 1):
            if a[i - 1] == b[j - 1]:
                curr[j] = prev[j - 1] + 1
            elif prev[j] >= curr[j - 1]:
                curr[j] = prev[j]
            else:
                curr[j] = curr[j - 1]
        prev, curr = curr, prev
    return int(prev[lb])


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_REQUESTED = os.environ.get("ACMSUM_KERNELS", "numba" if HAS_NUMBA else "numpy").lower()
if _REQUESTED not in ("numba", "numpy"):
    raise ValueError(f"ACMSUM_KERNELS must be 'numba' or 'numpy', got {_REQUESTED!r}")
USE_NUMBA = _REQUESTED == "numba" and HAS_NUMBA
BACKEND = "numba" if USE_NUMBA else "numpy"

if USE_NUMBA:
    softmax_rows = _softmax_rows_numba
    softmax_rows_grad = _softmax_rows_grad_numba
    layer_norm_rows = _layer_norm_rows_numba
    layer_norm_rows_grad = _layer_norm_rows_grad_numba
    gelu = _gelu_numba
    gelu_grad = _gelu_grad_numba
    scatter_add_rows = _scatter_add_rows_numba
    adam_step = _adam_step_numba
    lcs_len = _lcs_len_numba
else:
    softmax_rows = _softmax_rows_numpy
    softmax_rows_grad = _softmax_rows_grad_numpy
    layer_norm_rows = _layer_norm_rows_numpy
    layer_norm_rows_grad = _layer_norm_rows_grad_numpy
    gelu = _gelu_numpy
    gelu_grad = _gelu_grad_numpy
    scatter_add_rows = _scatter_add_rows_numpy
    adam_step = _adam_step_numpy
    lcs_len = _lcs_len_numpy


KERNEL_PAIRS = {
    "softmax_rows": (_softmax_rows_numpy, _softmax_rows_numba),
    "softmax_rows_grad": (_softmax_rows_grad_numpy, _softmax_rows_grad_numba),
    "layer_norm_rows": (_layer_norm_rows_numpy, _layer_norm_rows_numba),
    "layer_norm_rows_grad": (_layer_norm_rows_grad_numpy, _layer_norm_rows_grad_numba),
    "gelu": (_gelu_numpy, _gelu_numba),
    "gelu_grad": (_gelu_grad_numpy, _gelu_grad_numba),
    "scatter_add_rows": (_scatter_add_rows_numpy, _scatter_add_rows_numba),
    "adam_step": (_adam_step_numpy, _adam_step_numba),
    "lcs_len": (_lcs_len_numpy, _lcs_len_numba),
}
