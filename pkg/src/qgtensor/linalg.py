"""Small dense complex linear algebra.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Every routine
accepts a stack of matrices with arbitrary leading (batch) axes, so a whole
k-grid can be diagonalized in one call. Sizes are tiny (N <= 16) and accuracy
matters more than speed.

The Hermitian eigensolver uses the closed form for 2x2 blocks and cyclic
complex Jacobi rotations otherwise. The polar factor used for gauge fixing is
computed from an SVD.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, NotHermitianError, SingularMatrixError

CMatrix = np.ndarray

TOL_ORTH = 1e-10
TOL_EIG = 1e-10
TOL_SINGULAR = 1e-10
MAX_SWEEPS = 50


class HermEig(NamedTuple):
    """Eigen-decomposition of a Hermitian matrix (or stack of them).

    ``values[..., i]`` is ascending in ``i`` and ``vectors[..., :, i]`` is the
    matching normalized eigenvector.
    """

    values: np.ndarray
    vectors: CMatrix


def as_cmatrix(a, *, allow_nonfinite: bool = False) -> CMatrix:
    """Convert ``a`` to a complex128 array with at least two axes."""
    out = np.asarray(a, dtype=np.complex128)
    if out.ndim < 2:
        raise ValueError(f"expected a matrix, got array with shape {out.shape}")
    if not allow_nonfinite and not np.all(np.isfinite(out)):
        raise ValueError("matrix has non-finite entries")
    return out


def _require_square(a: CMatrix, name: str = "matrix") -> None:
    if a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {a.shape[-2:]}")


def matmul(a, b) -> CMatrix:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"dimension mismatch: {a.shape[-2:]} x {b.shape[-2:]}")
    return a @ b


def adjoint(a) -> CMatrix:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(as_cmatrix(a), -1, -2))


def det(a) -> complex | np.ndarray:
    a = as_cmatrix(a)
    _require_square(a)
    return np.linalg.det(a)


def trace(a) -> complex | np.ndarray:
    a = as_cmatrix(a)
    _require_square(a)
    return np.trace(a, axis1=-2, axis2=-1)


def fro_norm(a) -> float | np.ndarray:
    a = as_cmatrix(a, allow_nonfinite=True)
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def hermiticity_error(h) -> float:
    """Largest ``|H - H^dag|_F`` over the stack."""
    h = as_cmatrix(h)
    return float(np.max(fro_norm(h - adjoint(h)), initial=0.0))


def eig_hermitian(h, tol: float = TOL_EIG, max_sweeps: int = MAX_SWEEPS) -> HermEig:
    """Diagonalize a Hermitian matrix or a stack of Hermitian matrices.

    Args:
        h: array of shape ``(..., N, N)``.
        tol: relative tolerance, used both for the Hermiticity check and as
            the Jacobi stopping criterion on the off-diagonal Frobenius norm.
        max_sweeps: Jacobi sweep limit for ``N > 2``.

    Returns:
        HermEig with ascending eigenvalues.

    Raises:
        NotHermitianError: if ``|H - H^dag|_F > tol * max(1, |H|_F)``.
        ConvergenceError: if Jacobi sweeps do not converge.
    """
    h = as_cmatrix(h)
    _require_square(h)
    scale = np.maximum(fro_norm(h), 1.0)
    dev = fro_norm(h - adjoint(h))
    if np.any(dev > tol * scale):
        worst = int(np.argmax(np.ravel(dev / scale)))
        raise NotHermitianError(float(np.ravel(dev)[worst]), tol * float(np.ravel(scale)[worst]))
    h = 0.5 * (h + adjoint(h))

    n = h.shape[-1]
    if n == 1:
        return HermEig(h[..., 0, :].real.copy(), np.ones_like(h))
    if n == 2:
        return _eig_2x2(h)
    return _eig_jacobi(h, tol, max_sweeps)


def _eig_2x2(h: CMatrix) -> HermEig:
    # H = eps*1 + d.sigma ; E = eps -+ |d|
    a = h[..., 0, 0].real
    b = h[..., 1, 1].real
    c = h[..., 0, 1]
    eps = 0.5 * (a + b)
    d1, d2, d3 = c.real, -c.imag, 0.5 * (a - b)
    r = np.sqrt(d1 * d1 + d2 * d2 + d3 * d3)
    values = np.stack([eps - r, eps + r], axis=-1)

    # lower eigenvector: the larger column of (|d| - d.sigma), no cancellation
    upper_half = d3 >= 0
    x = np.where(upper_half, -(d1 - 1j * d2), r - d3)
    y = np.where(upper_half, r + d3 + 0j, -(d1 + 1j * d2))
    norm = np.sqrt(np.abs(x) ** 2 + np.abs(y) ** 2)
    degenerate = norm <= np.finfo(float).tiny * 1e4
    safe = np.where(degenerate, 1.0, norm)
    x = np.where(degenerate, 1.0, x / safe)
    y = np.where(degenerate, 0.0, y / safe)

    vectors = np.empty(h.shape, dtype=np.complex128)
    vectors[..., 0, 0] = x
    vectors[..., 1, 0] = y
    vectors[..., 0, 1] = np.conj(y)
    vectors[..., 1, 1] = -np.conj(x)
    return HermEig(values, vectors)


def _off_norm(a: CMatrix) -> np.ndarray:
    off = ~np.eye(a.shape[-1], dtype=bool)
    return np.sqrt(np.sum(np.abs(a[..., off]) ** 2, axis=-1))


def _eig_jacobi(h: CMatrix, tol: float, max_sweeps: int) -> HermEig:
    n = h.shape[-1]
    a = h.copy()
    v = np.broadcast_to(np.eye(n, dtype=np.complex128), h.shape).copy()
    threshold = tol * np.maximum(fro_norm(h), np.finfo(float).tiny)

    polished = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        for p in range(n - 1):
            for q in range(p + 1, n):
                _jacobi_rotate(a, v, p, q)
        off = _off_norm(a)
        if np.all(off < threshold):
            if polished:
                break
            # convergence is quadratic; one more sweep reaches round-off
            polished = True
    else:
        off = _off_norm(a)
        if not np.all(off < threshold):
            raise ConvergenceError(sweep, float(np.max(off)))

    values = np.diagonal(a, axis1=-2, axis2=-1).real
    order = np.argsort(values, axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return HermEig(values, v)


def _jacobi_rotate(a: CMatrix, v: CMatrix, p: int, q: int) -> None:
    """Annihilate a[..., p, q] in place with a complex Jacobi rotation."""
    apq = a[..., p, q]
    mag = np.abs(apq)
    active = mag > np.finfo(float).tiny
    if not np.any(active):
        return
    safe = np.where(active, mag, 1.0)
    phase = np.where(active, apq / safe, 1.0)
    with np.errstate(over="ignore"):
        tau = (a[..., q, q].real - a[..., p, p].real) / (2.0 * safe)
    tau = np.where(active, tau, 0.0)
    # t = tan(angle), written to avoid overflow of tau**2 for tiny |a_pq|
    big = np.abs(tau) > 1e150
    tau_s = np.where(big, 1.0, tau)
    t = np.where(tau_s >= 0, 1.0, -1.0) / (np.abs(tau_s) + np.sqrt(1.0 + tau_s * tau_s))
    t = np.where(big, 0.5 / np.where(big, tau, 1.0), t)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = np.where(active, t * c, 0.0)
    c = np.where(active, c, 1.0)

    # J = diag(1, conj(phase)) @ [[c, s], [-s, c]] acting on columns p, q
    j00 = c + 0j
    j01 = s + 0j
    j10 = -s * np.conj(phase)
    j11 = c * np.conj(phase)

    colp = a[..., :, p].copy()
    colq = a[..., :, q].copy()
    a[..., :, p] = colp * j00[..., None] + colq * j10[..., None]
    a[..., :, q] = colp * j01[..., None] + colq * j11[..., None]
    rowp = a[..., p, :].copy()
    rowq = a[..., q, :].copy()
    a[..., p, :] = np.conj(j00)[..., None] * rowp + np.conj(j10)[..., None] * rowq
    a[..., q, :] = np.conj(j01)[..., None] * rowp + np.conj(j11)[..., None] * rowq
    a[..., p, q] = np.where(active, 0.0, a[..., p, q])
    a[..., q, p] = np.where(active, 0.0, a[..., q, p])

    colp = v[..., :, p].copy()
    colq = v[..., :, q].copy()
    v[..., :, p] = colp * j00[..., None] + colq * j10[..., None]
    v[..., :, q] = colp * j01[..., None] + colq * j11[..., None]


def polar_unitary(m, tol: float = TOL_SINGULAR) -> tuple[CMatrix, np.ndarray]:
    """Unitary polar factor of ``m`` together with its smallest singular values.

    Does not raise; callers decide what to do with near-singular entries.
    """
    m = as_cmatrix(m, allow_nonfinite=True)
    _require_square(m)
    if m.shape[-1] == 1:
        mag = np.abs(m[..., 0, 0])
        safe = np.where(mag > 0, mag, 1.0)
        u = np.where(mag[..., None, None] > 0, m / safe[..., None, None], 1.0 + 0j)
        return u, mag
    w, s, vh = np.linalg.svd(m)
    return w @ vh, s[..., -1]


def unitary_align(m, tol: float = TOL_SINGULAR) -> CMatrix:
    """Unitary polar factor ``U`` of ``m = U P``, the Frobenius-nearest unitary.

    Raises:
        SingularMatrixError: if the smallest singular value of any matrix in
            the stack is ``<= tol``.
    """
    u, smin = polar_unitary(m, tol)
    if np.any(smin <= tol):
        raise SingularMatrixError(float(np.min(smin)), tol)
    return u


def is_unitary(u, tol: float = TOL_ORTH) -> bool:
    u = as_cmatrix(u)
    eye = np.eye(u.shape[-1])
    return bool(np.all(fro_norm(adjoint(u) @ u - eye) < tol))
