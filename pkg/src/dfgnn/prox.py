"""Proximal operators for the l1 and nuclear norms.

The nuclear prox needs a thin SVD, which is computed from a cyclic Jacobi
eigendecomposition of the smaller Gram matrix. :func:`prox_oracle` is a
test-side reference that never calls an SVD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
# Gram-based singular values carry ~sqrt(eps) * s_max absolute error
ZERO_SV_RTOL = 1e-7


class EigenConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ThinSvd:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T


def soft_threshold(M: np.ndarray, lam: float) -> np.ndarray:
    """Entrywise ``sign(M) * max(|M| - lam, 0)``."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    M = np.asarray(M, dtype=np.float64)
    return np.sign(M) * np.maximum(np.abs(M) - lam, 0.0)


@numba.njit(cache=True)
def _rotate(a, i, j, k, l, s, tau):
    g = a[i, j]
    h = a[k, l]
    a[i, j] = g - s * (h + g * tau)
    a[k, l] = h + s * (g - h * tau)


@numba.njit(cache=True)
def _jacobi_sweeps(A, V, d, tol, max_sweeps):
    """Cyclic Jacobi on the upper triangle of ``A`` (destroyed). Eigenvalues
    land in ``d``, eigenvectors in the columns of ``V``. Returns the number of
    sweeps, or -1 when ``max_sweeps`` is exhausted."""
    n = A.shape[0]
    scale = 0.0
    for i in range(n):
        d[i] = A[i, i]
        scale += A[i, i] * A[i, i]
        for j in range(i + 1, n):
            scale += 2.0 * A[i, j] * A[i, j]
    scale = np.sqrt(scale)
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off += 2.0 * A[i, j] * A[i, j]
        if np.sqrt(off) <= tol * scale:
            return sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                g = 100.0 * abs(apq)
                # negligible against both diagonal entries: drop without rotating
                if abs(d[p]) + g == abs(d[p]) and abs(d[q]) + g == abs(d[q]):
                    A[p, q] = 0.0
                    continue
                theta = 0.5 * (d[q] - d[p]) / apq
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                h = t * apq
                d[p] -= h
                d[q] += h
                A[p, q] = 0.0
                for j in range(p):
                    _rotate(A, j, p, j, q, s, tau)
                for j in range(p + 1, q):
                    _rotate(A, p, j, j, q, s, tau)
                for j in range(q + 1, n):
                    _rotate(A, p, j, q, j, s, tau)
                for j in range(n):
                    _rotate(V, j, p, j, q, s, tau)
    return -1


def eig_sym(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Cyclic Jacobi rotations run until the off-diagonal Frobenius norm drops
    below ``JACOBI_TOL * ||M||_F``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"eig_sym needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("eig_sym input has non-finite entries")
    asym = np.abs(M - M.T).max() if M.size else 0.0
    if asym > 1e-10 * max(1.0, np.abs(M).max()):
        raise ValueError(f"eig_sym input is not symmetric (max asymmetry {asym:.3g})")
    A = np.ascontiguousarray(0.5 * (M + M.T))
    V = np.eye(M.shape[0])
    w = np.diag(A).copy()
    if M.shape[0] > 1:
        sweeps = _jacobi_sweeps(A, V, w, JACOBI_TOL, JACOBI_MAX_SWEEPS)
        if sweeps < 0:
            raise EigenConvergenceError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _orthonormalize(Q: np.ndarray, keep: int) -> np.ndarray:
    """Re-orthogonalize columns of Q in order; columns from ``keep`` on (and any
    that collapse) are replaced by standard-basis completions."""
    n, r = Q.shape
    out = np.zeros((n, r))
    filled = 0

    def add(v):
        nonlocal filled
        for _ in range(2):
            v = v - out[:, :filled] @ (out[:, :filled].T @ v)
        nv = np.linalg.norm(v)
        if nv < 0.5:
            return False
        out[:, filled] = v / nv
        filled += 1
        return True

    for j in range(min(keep, r)):
        v = Q[:, j]
        if not add(v / max(np.linalg.norm(v), 1e-300)):
            break
    basis = 0
    while filled < r:
        # standard basis vector with the largest residual keeps the completion well conditioned
        resid = 1.0 - np.sum(out[:, :filled] ** 2, axis=1)
        cand = int(np.argmax(resid))
        e = np.zeros(n)
        e[cand] = 1.0
        if not add(e):
            e[basis % n] = 1.0
            add(e)
            basis += 1
    return out


def _gram_factor(A: np.ndarray):
    """Right singular vectors and values of a tall ``A`` from ``A^T A``."""
    w, V = eig_sym(A.T @ A)
    w, V = w[::-1], V[:, ::-1]
    s = np.sqrt(np.clip(w, 0.0, None))
    s_max = s[0] if len(s) else 0.0
    good = int(np.sum(s > ZERO_SV_RTOL * s_max)) if s_max > 0 else 0
    return s, np.ascontiguousarray(V), good


def thin_svd(M: np.ndarray) -> ThinSvd:
    """Thin SVD with ``r = min(n, d)`` singular values, sorted descending."""
    M = np.asarray(M, dtype=np.float64)
    n, d = M.shape
    transpose = d > n
    A = M.T if transpose else M
    s, V, good = _gram_factor(A)
    U = np.zeros((A.shape[0], len(s)))
    if good:
        U[:, :good] = (A @ V[:, :good]) / s[:good]
    U = _orthonormalize(U, good)
    s[good:] = 0.0
    if transpose:
        return ThinSvd(V, s, U)
    return ThinSvd(U, s, V)


def prox_nuclear(M: np.ndarray, lam: float) -> np.ndarray:
    """Singular-value soft-thresholding ``U diag((s - lam)_+) V^T``."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    M = np.asarray(M, dtype=np.float64)
    transpose = M.shape[1] > M.shape[0]
    A = M.T if transpose else M
    s, V, good = _gram_factor(A)
    # U diag(shrunk) V^T with U = A V / s on the retained columns
    shrunk = np.maximum(s[:good] - lam, 0.0)
    Vg = V[:, :good]
    out = (A @ (Vg * (shrunk / s[:good]))) @ Vg.T
    return out.T if transpose else out


def nuclear_norm(M: np.ndarray) -> float:
    return float(np.sum(thin_svd(M).s))


def prox_objective(Z: np.ndarray, V: np.ndarray, lam: float, norm: str) -> float:
    """``0.5 ||Z - V||_F^2 + lam ||Z||`` with the norm evaluated by LAPACK."""
    if norm == "l1":
        reg = np.abs(Z).sum()
    elif norm == "nuclear":
        reg = np.linalg.svd(Z, compute_uv=False).sum()
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return 0.5 * float(np.sum((Z - V) ** 2)) + lam * float(reg)


def prox_oracle(V: np.ndarray, lam: float, norm: str, steps: int = 20000) -> np.ndarray:
    """Reference minimizer of ``0.5 ||Z - V||^2 + lam ||Z||`` by plain descent.

    Both norms are replaced by their smooth variational forms
    (``|z| = min_{z=ab} (a^2 + b^2)/2`` entrywise, ``||Z||_* = min_{Z=AB^T}
    (||A||^2 + ||B||^2)/2``) and the factors are driven by gradient descent,
    started at ``Z = V`` with a step that shrinks as the factors grow.
    ``V`` may be a single small matrix or a stack of them (leading batch axis).
    """
    V = np.asarray(V, dtype=np.float64)
    single = V.ndim == 2
    if single:
        V = V[None]
    if V.shape[1] * V.shape[2] > 64:
        raise ValueError("prox_oracle is meant for inputs of at most 8x8")
    if norm == "l1":
        a = np.sign(V) * np.sqrt(np.abs(V))
        b = np.sqrt(np.abs(V))
        a[V == 0] = 1e-3
        b[V == 0] = 1e-3
        for _ in range(steps):
            r = a * b - V
            big = np.maximum(np.abs(a).max(axis=(1, 2)), np.abs(b).max(axis=(1, 2)))
            eta = (0.5 / (big ** 2 + lam + 1e-12))[:, None, None]
            a, b = a - eta * (r * b + lam * a), b - eta * (r * a + lam * b)
        Z = a * b
    elif norm == "nuclear":
        _, n, d = V.shape
        if d <= n:
            A, B = V.copy(), np.broadcast_to(np.eye(d), (len(V), d, d)).copy()
        else:
            A, B = np.broadcast_to(np.eye(n), (len(V), n, n)).copy(), V.transpose(0, 2, 1).copy()
        for _ in range(steps):
            R = A @ B.transpose(0, 2, 1) - V
            big = np.maximum(np.sum(A * A, axis=(1, 2)), np.sum(B * B, axis=(1, 2)))
            eta = (0.5 / (big + lam + 1e-12))[:, None, None]
            A, B = (A - eta * (R @ B + lam * A),
                    B - eta * (R.transpose(0, 2, 1) @ A + lam * B))
        Z = A @ B.transpose(0, 2, 1)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return Z[0] if single else Z
