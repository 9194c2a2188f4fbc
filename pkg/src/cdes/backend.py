"""Hot numeric kernels with two interchangeable implementations.

Every kernel here exists twice: a numba ``@njit`` version (default when numba
imports) and a pure-numpy version. The active implementation is picked once
from the ``CDES_BACKEND`` environment variable (``numba`` or ``numpy``) and
can be switched at runtime with :func:`set_backend`, which tests and the
benchmark use to compare both paths in one process.

Kernel math is float64 throughout; callers own any float32 storage casts.
"""

import math
import os

import numpy as np
from scipy.special import erf as _erf

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

ACT_LINEAR = 0
ACT_RELU = 1
ACT_GELU = 2

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# numpy implementations


def activate(z, code):
    """Elementwise activation: linear, ReLU, or exact (erf-based) GELU."""
    if code == ACT_LINEAR:
        return np.asarray(z, dtype=np.float64).copy()
    if code == ACT_RELU:
        return np.maximum(z, 0.0)
    if code == ACT_GELU:
        z = np.asarray(z, dtype=np.float64)
        return z * 0.5 * (1.0 + _erf(z * _INV_SQRT2))
    raise ValueError(f"unknown activation code {code}")


def activate_deriv(z, code):
    """Elementwise derivative. ReLU subgradient at 0 is 0."""
    if code == ACT_LINEAR:
        return np.ones_like(z, dtype=np.float64)
    if code == ACT_RELU:
        return (np.asarray(z) > 0.0).astype(np.float64)
    if code == ACT_GELU:
        z = np.asarray(z, dtype=np.float64)
        phi = np.exp(-0.5 * z * z) * _INV_SQRT_2PI
        return 0.5 * (1.0 + _erf(z * _INV_SQRT2)) + z * phi
    raise ValueError(f"unknown activation code {code}")


def _np_alignment_batch(W, diags, g, c, senses, code):
    # overflow to inf is legal here; the training loop aborts on it
    with np.errstate(over="ignore"):
        proj = c @ W.T
        z = diags[senses] * g
        resid = proj - activate(z, code)
        loss = float(np.sum(resid * resid))
        grad_w = 2.0 * (resid.T @ c)
        contrib = -2.0 * resid * activate_deriv(z, code) * g
        grad_diag = np.zeros_like(diags)
        np.add.at(grad_diag, senses, contrib)
    return loss, grad_w, grad_diag


def _np_pairwise_sqdist(X, C):
    # ||x-c||^2 = ||x||^2 - 2 x.c + ||c||^2; clip guards tiny negatives.
    xx = np.sum(X * X, axis=1)[:, None]
    cc = np.sum(C * C, axis=1)[None, :]
    d = xx - 2.0 * (X @ C.T) + cc
    return np.maximum(d, 0.0)


def _np_cosine_scores(M, v):
    norms = np.sqrt(np.sum(M * M, axis=1))
    vn = math.sqrt(float(np.dot(v, v)))
    dots = M @ v
    out = np.zeros(M.shape[0], dtype=np.float64)
    nz = norms > 0.0
    if vn > 0.0:
        out[nz] = dots[nz] / (norms[nz] * vn)
    return np.clip(out, -1.0, 1.0)


# ---------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _act_scalar(z, code):
        if code == 0:
            return z
        if code == 1:
            return z if z > 0.0 else 0.0
        return z * 0.5 * (1.0 + math.erf(z * _INV_SQRT2))

    @njit(cache=True, inline="always")
    def _dact_scalar(z, code):
        if code == 0:
            return 1.0
        if code == 1:
            return 1.0 if z > 0.0 else 0.0
        phi = math.exp(-0.5 * z * z) * _INV_SQRT_2PI
        return 0.5 * (1.0 + math.erf(z * _INV_SQRT2)) + z * phi

    @njit(cache=True)
    def _nb_alignment_batch(W, diags, g, c, senses, code):
        # matmuls go through BLAS (np.dot); the activation and the per-sense
        # scatter, which numpy handles poorly (np.add.at), stay as loops
        batch, p = g.shape
        proj = np.dot(c, W.T)
        resid = np.empty((batch, p))
        contrib = np.empty((batch, p))
        loss = 0.0
        grad_diag = np.zeros(diags.shape)
        for b in range(batch):
            s = senses[b]
            for i in range(p):
                z = diags[s, i] * g[b, i]
                r = proj[b, i] - _act_scalar(z, code)
                resid[b, i] = r
                loss += r * r
                contrib[b, i] = -2.0 * r * _dact_scalar(z, code) * g[b, i]
        for b in range(batch):
            s = senses[b]
            for i in range(p):
                grad_diag[s, i] += contrib[b, i]
        grad_w = 2.0 * np.dot(np.ascontiguousarray(resid.T), c)
        return loss, grad_w, grad_diag

    @njit(cache=True)
    def _nb_pairwise_sqdist(X, C):
        n, dim = X.shape
        k = C.shape[0]
        out = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                acc = 0.0
                for d in range(dim):
                    diff = X[i, d] - C[j, d]
                    acc += diff * diff
                out[i, j] = acc
        return out

    @njit(cache=True)
    def _nb_cosine_scores(M, v):
        n, dim = M.shape
        vn = 0.0
        for d in range(dim):
            vn += v[d] * v[d]
        vn = math.sqrt(vn)
        out = np.zeros(n)
        if vn == 0.0:
            return out
        for i in range(n):
            dot = 0.0
            nn = 0.0
            for d in range(dim):
                dot += M[i, d] * v[d]
                nn += M[i, d] * M[i, d]
            if nn > 0.0:
                s = dot / (math.sqrt(nn) * vn)
                if s > 1.0:
                    s = 1.0
                elif s < -1.0:
                    s = -1.0
                out[i] = s
        return out


# ---------------------------------------------------------------------------
# dispatch

_env = os.environ.get("CDES_BACKEND", "").strip().lower()
if _env in ("numpy", "numba"):
    _active = _env
elif _env in ("", "auto"):
    _active = "numba" if HAVE_NUMBA else "numpy"
else:
    raise ValueError(f"CDES_BACKEND must be 'numpy' or 'numba', got {_env!r}")
if _active == "numba" and not HAVE_NUMBA:
    raise ImportError("CDES_BACKEND=numba requested but numba is not importable")


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    """Switch kernel implementation at runtime ('numpy' or 'numba')."""
    global _active
    if name not in ("numpy", "numba"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ImportError("numba backend requested but numba is not importable")
    _active = name


def alignment_batch(W, diags, g, c, senses, code):
    """Loss, grad_W, and dense per-sense diagonal gradients for one batch.

    All gradients use the summed (not mean) convention; ``loss`` is the sum
    of squared residual norms over the batch.
    """
    if _active == "numba":
        return _nb_alignment_batch(W, diags, g, c, senses, code)
    return _np_alignment_batch(W, diags, g, c, senses, code)


def pairwise_sqdist(X, C):
    """Squared Euclidean distances, shape (len(X), len(C))."""
    if _active == "numba":
        return _nb_pairwise_sqdist(X, C)
    return _np_pairwise_sqdist(X, C)


def cosine_scores(M, v):
    """Cosine of each row of M against v; zero-norm rows or query give 0."""
    if _active == "numba":
        return _nb_cosine_scores(M, v)
    return _np_cosine_scores(M, v)


def warmup() -> None:
    """Trigger JIT compilation of all numba kernels on tiny inputs."""
    if _active != "numba":
        return
    W = np.zeros((2, 3))
    diags = np.zeros((1, 2))
    g = np.zeros((1, 2))
    c = np.zeros((1, 3))
    senses = np.zeros(1, dtype=np.int64)
    for code in (ACT_LINEAR, ACT_RELU, ACT_GELU):
        alignment_batch(W, diags, g, c, senses, code)
    pairwise_sqdist(g, g)
    cosine_scores(g, np.zeros(2))
