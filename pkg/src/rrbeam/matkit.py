"""Dense symmetric/Hermitian matrix kernel.

Eigendecompositions go through a cyclic Jacobi kernel. The compiled
``rrbeam._kernels`` extension is used when it imports; otherwise the
pure-Python ``_kernels_py`` twin is used. Set ``RRBEAM_PURE_PYTHON=1`` to force
the fallback.
"""
from __future__ import annotations

import math
import os
from typing import NamedTuple

import numpy as np

from .errors import SingularMatrix

if os.environ.get("RRBEAM_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        from . import _kernels_py as _kernels

        BACKEND = "python"

JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 100
PD_RTOL = 1e-12


class Spectrum(NamedTuple):
    """Eigenvalues (descending) and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym(m) -> np.ndarray:
    """Validate a real square matrix and return its symmetric part."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return (a + a.T) / 2.0


def herm(h) -> np.ndarray:
    """Validate a complex square matrix and return its Hermitian part.

    Diagonal imaginary parts are set to exactly zero.
    """
    a = np.asarray(h, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    out = (a + a.conj().T) / 2.0
    out[np.diag_indices_from(out)] = out.diagonal().real
    return out


def _sign_fix(v: np.ndarray) -> np.ndarray:
    # make the largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def _eig2(a: float, b: float, d: float) -> tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    lam = np.array([mid + rad, mid - rad])
    if b == 0.0:
        vecs = np.eye(2) if a >= d else np.array([[0.0, 1.0], [1.0, 0.0]])
        return lam, vecs
    if a >= d:
        v1 = np.array([lam[0] - d, b])
    else:
        v1 = np.array([b, lam[0] - a])
    v1 /= math.hypot(v1[0], v1[1])
    vecs = np.array([[v1[0], -v1[1]], [v1[1], v1[0]]])
    return lam, vecs


def _eig_real(a: np.ndarray) -> Spectrum:
    n = a.shape[0]
    if n == 1:
        return Spectrum(a[0].copy(), np.ones((1, 1)))
    if n == 2:
        lam, vecs = _eig2(a[0, 0], a[0, 1], a[1, 1])
        return Spectrum(lam, _sign_fix(vecs))
    w, v, _ = _kernels.jacobi_eigh(a, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    order = np.argsort(-w, kind="stable")
    return Spectrum(np.asarray(w)[order], _sign_fix(np.asarray(v)[:, order]))


def _eig_herm(h: np.ndarray) -> Spectrum:
    n = h.shape[0]
    spec = _eig_real(real_embed(h))
    # Each eigenvalue of h appears twice in the embedding; [x; y] and its
    # quarter-turn [-y; x] span the same complex line, so keep one of them.
    accepted: list[np.ndarray] = []
    for k in range(2 * n):
        z = spec.eigenvectors[:n, k] + 1j * spec.eigenvectors[n:, k]
        for q in accepted:
            z = z - q * np.vdot(q, z)
        nz = np.linalg.norm(z)
        if nz > 0.5:
            accepted.append(z / nz)
            if len(accepted) == n:
                break
    if len(accepted) < n:  # pragma: no cover - numerical safety net
        q_mat, _ = np.linalg.qr(np.column_stack(accepted + [np.eye(n)[:, : n - len(accepted)]]))
        accepted = [q_mat[:, k] for k in range(n)]
    q = np.column_stack(accepted)
    lam = np.real(np.einsum("ij,ik,kj->j", q.conj(), h, q))
    order = np.argsort(-lam, kind="stable")
    return Spectrum(lam[order], q[:, order])


def eig_sym(m) -> Spectrum:
    """Spectral decomposition of a real-symmetric or complex-Hermitian matrix."""
    a = np.asarray(m)
    if np.iscomplexobj(a):
        h = herm(a)
        if not np.any(h.imag):
            return _eig_real(np.ascontiguousarray(h.real))
        return _eig_herm(h)
    return _eig_real(np.ascontiguousarray(sym(a)))


def spd_inv_sqrt(m) -> np.ndarray:
    """Inverse square root ``R`` of a symmetric positive-definite matrix.

    ``R @ M @ R == I`` and ``R`` is symmetric positive definite.

    Raises:
        SingularMatrix: if the smallest eigenvalue is below ``1e-12 * trace``.
    """
    a = sym(m)
    spec = _eig_real(a)
    tol = PD_RTOL * abs(np.trace(a))
    if spec.eigenvalues[-1] <= tol:
        raise SingularMatrix(
            f"matrix is not positive definite (min eigenvalue {spec.eigenvalues[-1]:.3e})"
        )
    q = spec.eigenvectors
    r = (q / np.sqrt(spec.eigenvalues)) @ q.T
    return (r + r.T) / 2.0


def real_embed(h) -> np.ndarray:
    """Map an N x N Hermitian matrix to the 2N x 2N real block [[Re, -Im], [Im, Re]]."""
    a = herm(h)
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


def real_unembed(x) -> np.ndarray:
    """Inverse of :func:`real_embed` on its range, projection elsewhere.

    Any real symmetric 2N x 2N matrix is mapped to the Hermitian matrix whose
    embedding is closest in Frobenius norm. PSD inputs give PSD outputs.
    """
    a = sym(x)
    n2 = a.shape[0]
    if n2 % 2:
        raise ValueError("embedded matrix must have even dimension")
    n = n2 // 2
    a11, a12, a21, a22 = a[:n, :n], a[:n, n:], a[n:, :n], a[n:, n:]
    return herm(0.5 * (a11 + a22) + 0.5j * (a21 - a12))


def lambda_max(s) -> float:
    a = sym(s)
    if a.shape[0] == 2:
        return 0.5 * (a[0, 0] + a[1, 1]) + math.hypot(0.5 * (a[0, 0] - a[1, 1]), a[0, 1])
    return float(_eig_real(a).eigenvalues[0])


def lambda_plus(s) -> float:
    """Positive part of the largest eigenvalue, ``max(lambda_max(S), 0)``."""
    return max(lambda_max(s), 0.0)


def inv2(m) -> np.ndarray:
    """Closed-form inverse of a symmetric 2 x 2 matrix.

    Raises:
        SingularMatrix: if the matrix is not positive definite.
    """
    a = sym(m)
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[0, 1]
    if not (a[0, 0] > 0.0 and det > PD_RTOL * (a[0, 0] + a[1, 1]) ** 2):
        raise SingularMatrix(f"2x2 matrix is not positive definite (det {det:.3e})")
    return np.array([[a[1, 1], -a[0, 1]], [-a[0, 1], a[0, 0]]]) / det
