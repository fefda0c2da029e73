"""Quantum geometric tensor of a tracked eigen-subspace.

For an ``N x n`` orthonormal frame ``V(lambda)`` spanning the tracked subspace,

    Q_mu_nu = (d_mu V)^dag (1 - P) (d_nu V),    P = V V^dag,

an ``n x n`` matrix per ordered direction pair. Its Hermitian part
``g = (Q + Q^dag)/2`` is the (non-Abelian) metric and ``F = i (Q - Q^dag)`` the
curvature, so ``Q = g - i F / 2``.

Derivatives are central differences of frames evaluated at ``lambda +- h`` and
aligned to the frame at ``lambda`` by the unitary polar factor of their
overlap (discrete parallel transport). Without the alignment the arbitrary
phases returned by the eigensolver would dominate the difference quotient.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence
import warnings

import numpy as np

from . import linalg
from .errors import (
    ChartPoleError,
    CriticalRegionWarning,
    SingularMatrixError,
    SingularPointError,
)
from .linalg import adjoint
from .models import TAU_GAP, TWO_PI, DVector, DVectorFamily, HamiltonianFamily, ParameterPoint

DEFAULT_STEP = 1e-4
OVERLAP_TOL = 1e-10
SINGULAR_WARN_FRACTION = 0.10

GaugeFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Subspace:
    """Contiguous band range ``[start, stop)`` of the ascending spectrum.

    ``gap_tol`` classifies a point as singular when the spectrum gap at either
    boundary of the range falls to or below it. When ``degeneracy_tol`` is set
    the subspace is declared degenerate and its internal spread is checked.
    """

    start: int
    stop: int
    gap_tol: float = TAU_GAP
    degeneracy_tol: float | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.stop:
            raise ValueError(f"invalid band range [{self.start}, {self.stop})")

    @property
    def n(self) -> int:
        return self.stop - self.start

    @classmethod
    def lower_half(cls, family: HamiltonianFamily, **kwargs) -> "Subspace":
        return cls(0, family.dim // 2, **kwargs)

    def validate_for(self, family: HamiltonianFamily) -> None:
        if self.stop > family.dim:
            raise ValueError(f"band range [{self.start}, {self.stop}) exceeds dimension {family.dim}")
        if self.n == family.dim:
            raise ValueError("subspace spans the whole Hilbert space; there is nothing to transport")

    def boundary_gap(self, values: np.ndarray) -> np.ndarray:
        gap = np.full(values.shape[:-1], np.inf)
        if self.start > 0:
            gap = np.minimum(gap, values[..., self.start] - values[..., self.start - 1])
        if self.stop < values.shape[-1]:
            gap = np.minimum(gap, values[..., self.stop] - values[..., self.stop - 1])
        return gap

    def spread(self, values: np.ndarray) -> np.ndarray:
        return values[..., self.stop - 1] - values[..., self.start]


@dataclass(frozen=True)
class Frame:
    vectors: np.ndarray
    point: ParameterPoint

    @property
    def n(self) -> int:
        return self.vectors.shape[-1]

    def rotated(self, w: np.ndarray) -> "Frame":
        """The same subspace in another gauge, ``V -> V W``."""
        return Frame(self.vectors @ w, self.point)


# --- metric / curvature split ---------------------------------------------------


def _dagger(a: np.ndarray) -> np.ndarray:
    # NaN-tolerant adjoint for fields with singular cells
    return np.conj(np.swapaxes(a, -1, -2))


def metric_part(q: np.ndarray) -> np.ndarray:
    """``g_mu_nu = (Q_mu_nu + Q_mu_nu^dag) / 2`` (dagger over the band axes)."""
    q = np.asarray(q, dtype=np.complex128)
    return 0.5 * (q + _dagger(q))


def curvature_part(q: np.ndarray) -> np.ndarray:
    """``F_mu_nu = i (Q_mu_nu - Q_mu_nu^dag)``; in the Abelian case ``-2 Im Q``."""
    q = np.asarray(q, dtype=np.complex128)
    return 1j * (q - _dagger(q))


def band_trace(a: np.ndarray) -> np.ndarray:
    return np.trace(a, axis1=-2, axis2=-1)


@dataclass(frozen=True)
class QGTensor:
    """``q[mu, nu]`` is the ``n x n`` matrix ``Q_mu_nu``.

    ``directions[i]`` is the parameter coordinate (periodic first, then
    external) that axis ``i`` refers to.
    """

    q: np.ndarray
    directions: tuple[int, ...] = (0, 1)

    @property
    def n(self) -> int:
        return self.q.shape[-1]

    @property
    def g(self) -> np.ndarray:
        return metric_part(self.q)

    @property
    def f(self) -> np.ndarray:
        return curvature_part(self.q)

    def trace_g(self) -> np.ndarray:
        """Band trace of the metric, a real ``D x D`` matrix."""
        return band_trace(self.g).real

    def trace_f(self) -> np.ndarray:
        return band_trace(self.f).real

    def hermiticity_error(self) -> float:
        """``max |Q_nu_mu - Q_mu_nu^dag|_F`` over direction pairs."""
        swapped = np.swapaxes(self.q, 0, 1)
        return float(np.max(linalg.fro_norm(swapped - adjoint(self.q))))

    def conjugated(self, w: np.ndarray) -> "QGTensor":
        """``W^dag Q W`` for every direction pair: the tensor in the gauge ``V W``."""
        return QGTensor(adjoint(w) @ self.q @ w, self.directions)


# --- frames ----------------------------------------------------------------------


def projector(frame: Frame | np.ndarray) -> np.ndarray:
    v = frame.vectors if isinstance(frame, Frame) else np.asarray(frame)
    return v @ adjoint(v)


def _eigenframes(family, k, ext, subspace: Subspace, gauge: GaugeFn | None = None):
    eig = linalg.eig_hermitian(family.evaluate_batch(k, ext))
    frames = eig.vectors[..., :, subspace.start : subspace.stop]
    if gauge is not None:
        frames = frames @ np.asarray(gauge(k, ext), dtype=np.complex128)
    return frames, subspace.boundary_gap(eig.values), eig.values


def _align(reference: np.ndarray, raw: np.ndarray):
    # M = ref^dag raw = U P; raw U^dag has overlap U P U^dag with ref (positive)
    u, smin = linalg.polar_unitary(adjoint(reference) @ raw)
    return raw @ adjoint(u), smin


def _check_degeneracy(subspace: Subspace, values: np.ndarray) -> None:
    if subspace.degeneracy_tol is not None and subspace.n > 1:
        spread = subspace.spread(values)
        if np.any(spread > subspace.degeneracy_tol):
            raise ValueError(
                f"declared-degenerate subspace has spread {np.max(spread):.3e} > {subspace.degeneracy_tol:.3e}"
            )


def eigenframe(
    family: HamiltonianFamily,
    point: ParameterPoint,
    subspace: Subspace,
    gauge: GaugeFn | None = None,
) -> Frame:
    """Orthonormal frame of the tracked subspace at ``point``.

    Raises:
        SingularPointError: if the boundary gap is ``<= subspace.gap_tol``.
    """
    subspace.validate_for(family)
    frames, gap, values = _eigenframes(family, np.array(point.k), np.array(point.external), subspace, gauge)
    if gap <= subspace.gap_tol:
        raise SingularPointError(point, float(gap), subspace.gap_tol)
    _check_degeneracy(subspace, values)
    return Frame(frames, point)


def aligned_frame(
    family: HamiltonianFamily,
    point: ParameterPoint,
    reference: Frame,
    subspace: Subspace,
    gauge: GaugeFn | None = None,
) -> Frame:
    """Eigenframe at ``point`` in the parallel-transport gauge of ``reference``.

    The returned frame ``V`` satisfies: ``reference.vectors^dag V`` is positive
    definite Hermitian.

    Raises:
        SingularMatrixError: if the overlap with the reference is singular
            (the step is too large or the subspace crossed another band).
    """
    if point == reference.point and gauge is None:
        return reference
    raw = eigenframe(family, point, subspace, gauge)
    aligned, smin = _align(reference.vectors, raw.vectors)
    if smin <= OVERLAP_TOL:
        raise SingularMatrixError(float(smin), OVERLAP_TOL, context=f"overlap between {reference.point} and {point}")
    return Frame(aligned, point)


def frame_derivative(
    family: HamiltonianFamily,
    point: ParameterPoint,
    direction: int,
    h: float = DEFAULT_STEP,
    subspace: Subspace | None = None,
    *,
    reference: Frame | None = None,
    scheme: str = "central",
    gauge: GaugeFn | None = None,
) -> np.ndarray:
    """Finite-difference derivative of the frame along ``direction``.

    Neighbours are aligned to ``reference`` (default: the eigenframe at
    ``point``). ``scheme`` is ``"central"`` (second order) or ``"forward"`` /
    ``"backward"`` (first order), the latter for callers falling back next to
    a singular point.
    """
    subspace = subspace or Subspace.lower_half(family)
    ref = reference or eigenframe(family, point, subspace, gauge)
    if scheme == "central":
        plus = aligned_frame(family, point.shifted(direction, h), ref, subspace, gauge)
        minus = aligned_frame(family, point.shifted(direction, -h), ref, subspace, gauge)
        return (plus.vectors - minus.vectors) / (2 * h)
    if scheme == "forward":
        plus = aligned_frame(family, point.shifted(direction, h), ref, subspace, gauge)
        return (plus.vectors - ref.vectors) / h
    if scheme == "backward":
        minus = aligned_frame(family, point.shifted(direction, -h), ref, subspace, gauge)
        return (ref.vectors - minus.vectors) / h
    raise ValueError(f"unknown scheme {scheme!r}")


# --- projector (finite-difference) evaluation -----------------------------------------


def _shift(k, ext, direction: int, delta: float, n_periodic: int):
    if direction < n_periodic:
        k = k.copy()
        k[..., direction] += delta
    else:
        ext = ext.copy()
        ext[..., direction - n_periodic] += delta
    return k, ext


def _qgt_core(family, k, ext, subspace, h, directions, gauge=None, center=None):
    """Batched projector-method QGT.

    Returns ``(q, min_gap, min_overlap, values)``; ``q`` has shape
    ``(..., D, D, n, n)`` and is only meaningful where the stencil is regular.
    """
    v0, min_gap, values = _eigenframes(family, k, ext, subspace, gauge)
    if center is not None:
        v0 = np.asarray(center, dtype=np.complex128)
    min_overlap = np.full(min_gap.shape, np.inf)
    derivs = []
    for d in directions:
        pair = []
        for sign in (1.0, -1.0):
            kk, ee = _shift(k, ext, d, sign * h, family.n_periodic)
            raw, gap, _ = _eigenframes(family, kk, ee, subspace, gauge)
            aligned, smin = _align(v0, raw)
            min_gap = np.minimum(min_gap, gap)
            min_overlap = np.minimum(min_overlap, smin)
            pair.append(aligned)
        derivs.append((pair[0] - pair[1]) / (2.0 * h))
    dv = np.stack(derivs, axis=-3)  # (..., D, N, n)
    inner = adjoint(v0)[..., None, :, :] @ dv  # (..., D, n, n): V^dag dV
    dvh = adjoint(dv)
    q = dvh[..., :, None, :, :] @ dv[..., None, :, :, :] - adjoint(inner)[..., :, None, :, :] @ inner[..., None, :, :, :]
    return q, min_gap, min_overlap, values


def _resolve_directions(family: HamiltonianFamily, directions: Sequence[int] | None) -> tuple[int, ...]:
    if directions is None:
        return tuple(range(family.n_periodic))
    directions = tuple(int(d) for d in directions)
    if not directions or any(not 0 <= d < family.n_directions for d in directions):
        raise ValueError(f"directions {directions} out of range for {family.n_directions} coordinates")
    return directions


def qgt_point(
    family: HamiltonianFamily,
    point: ParameterPoint,
    subspace: Subspace | None = None,
    h: float = DEFAULT_STEP,
    directions: Sequence[int] | None = None,
    *,
    frame: Frame | None = None,
    gauge: GaugeFn | None = None,
) -> QGTensor:
    """QGT of the tracked subspace at a single point.

    Args:
        family: Hamiltonian family.
        point: evaluation point.
        subspace: tracked bands (default: lower half of the spectrum).
        h: finite-difference step.
        directions: coordinate indices spanning the tensor; default is the
            periodic coordinates only.
        frame: optional frame at ``point`` fixing the gauge of the result.
        gauge: optional hook ``(k, ext) -> (..., n, n)`` rotating every frame
            the eigensolver produces.

    Raises:
        SingularPointError: if the gap closes anywhere on the stencil.
        SingularMatrixError: if neighbouring frames are nearly orthogonal.
    """
    subspace = subspace or Subspace.lower_half(family)
    subspace.validate_for(family)
    directions = _resolve_directions(family, directions)
    center = None
    if frame is not None:
        if frame.vectors.shape != (family.dim, subspace.n):
            raise ValueError(f"frame has shape {frame.vectors.shape}, expected {(family.dim, subspace.n)}")
        center = frame.vectors
    q, gap, overlap, values = _qgt_core(
        family, np.array(point.k), np.array(point.external), subspace, h, directions, gauge, center
    )
    if gap <= subspace.gap_tol:
        raise SingularPointError(point, float(gap), subspace.gap_tol)
    if overlap <= OVERLAP_TOL:
        raise SingularMatrixError(float(overlap), OVERLAP_TOL, context=f"stencil around {point}")
    _check_degeneracy(subspace, values)
    return QGTensor(q, directions)


# --- closed-form two-band evaluation -----------------------------------------------


def _angle_gradients(d: np.ndarray, grad: np.ndarray):
    """Gradients of theta = arccos(d3/|d|) and phi = atan2(d2, d1) by the chain rule."""
    d1, d2, d3 = d[..., 0], d[..., 1], d[..., 2]
    rho2 = d1 * d1 + d2 * d2
    r2 = rho2 + d3 * d3
    rho = np.sqrt(rho2)
    ddot = np.einsum("...c,...dc->...d", d[..., :3], grad)
    dtheta = (d3[..., None] * ddot / r2[..., None] - grad[..., 2]) / rho[..., None]
    dphi = (d1[..., None] * grad[..., 1] - d2[..., None] * grad[..., 0]) / rho2[..., None]
    return dtheta, dphi, rho / np.sqrt(r2)


def _qgt_analytic_core(d: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Lower-band Q from the d-vector and its gradient; shape ``(..., D, D, 1, 1)``."""
    dtheta, dphi, sin_t = _angle_gradients(d, grad)
    tt = dtheta[..., :, None] * dtheta[..., None, :]
    pp = dphi[..., :, None] * dphi[..., None, :]
    pt = dphi[..., :, None] * dtheta[..., None, :]
    s = sin_t[..., None, None]
    q = (tt + s * s * pp) / 4 + 0.25j * s * (pt - np.swapaxes(pt, -1, -2))
    return q[..., None, None]


def qgt_analytic_twoband(d: DVector, grad_d, tau_gap: float = TAU_GAP) -> QGTensor:
    """Closed-form QGT of the lower band of ``eps*1 + d.sigma``.

    ``Q_mu_nu = (dth_mu dth_nu + sin^2(th) dph_mu dph_nu)/4
    + (i/4) sin(th) (dph_mu dth_nu - dph_nu dth_mu)`` with the angle gradients
    obtained from ``grad_d[mu, alpha] = d(d_alpha)/d(lambda_mu)``.

    Raises:
        SingularPointError: if ``|d| <= tau_gap``.
        ChartPoleError: if ``d1 = d2 = 0`` to within ``tau_gap``; use
            :func:`qgt_point` there.
    """
    grad = np.asarray(grad_d, dtype=float)
    if grad.ndim != 2 or grad.shape[1] != 3:
        raise ValueError(f"grad_d must have shape (D, 3), got {grad.shape}")
    if d.norm <= tau_gap:
        raise SingularPointError(d, 2 * d.norm, tau_gap)
    rho = float(np.hypot(d.d1, d.d2))
    if rho <= tau_gap:
        raise ChartPoleError(rho)
    q = _qgt_analytic_core(np.array(d, dtype=float), grad)
    return QGTensor(q.astype(np.complex128), tuple(range(grad.shape[0])))


# --- grids ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid ``k = 2*pi*((i + ox)/nx, (j + oy)/ny)``.

    The default offset 0 puts grid points on the high-symmetry momenta, so
    gap closings at ``(0, pi)``, ``(pi, pi)`` etc. land exactly on cells.
    """

    nx: int
    ny: int
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid sizes must be >= 4, got {self.nx}x{self.ny}")

    @property
    def spacing(self) -> tuple[float, float]:
        return TWO_PI / self.nx, TWO_PI / self.ny

    @property
    def cell_area(self) -> float:
        dx, dy = self.spacing
        return dx * dy

    @property
    def kx(self) -> np.ndarray:
        return TWO_PI * (np.arange(self.nx) + self.offset[0]) / self.nx

    @property
    def ky(self) -> np.ndarray:
        return TWO_PI * (np.arange(self.ny) + self.offset[1]) / self.ny

    def points(self) -> np.ndarray:
        """Momenta of shape ``(nx, ny, 2)``, ``[i, j] = (kx_i, ky_j)``."""
        kx, ky = np.meshgrid(self.kx, self.ky, indexing="ij")
        return np.stack([kx, ky], axis=-1)


@dataclass
class FieldGrid:
    """Per-cell values on a :class:`GridSpec`.

    ``payload`` names what ``values`` holds: ``"qgt"`` (``(nx, ny, D, D, n, n)``
    tensors), ``"frame"`` (``(nx, ny, N, n)``) or ``"scalar"``. Values on
    singular cells are NaN.
    """

    grid: GridSpec
    values: np.ndarray
    singular_mask: np.ndarray
    payload: str = "qgt"
    external: tuple[float, ...] = ()
    directions: tuple[int, ...] = (0, 1)
    pole_mask: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def nx(self) -> int:
        return self.grid.nx

    @property
    def ny(self) -> int:
        return self.grid.ny

    @property
    def spacing(self) -> tuple[float, float]:
        return self.grid.spacing

    @property
    def singular_count(self) -> int:
        return int(np.count_nonzero(self.singular_mask))

    @property
    def singular_fraction(self) -> float:
        return self.singular_count / self.singular_mask.size

    def _require(self, payload: str) -> None:
        if self.payload != payload:
            raise ValueError(f"field holds {self.payload!r} values, expected {payload!r}")

    def tensor(self, i: int, j: int) -> QGTensor:
        self._require("qgt")
        return QGTensor(self.values[i, j], self.directions)

    @property
    def g(self) -> np.ndarray:
        self._require("qgt")
        return metric_part(self.values)

    @property
    def f(self) -> np.ndarray:
        self._require("qgt")
        return curvature_part(self.values)

    def trace_g(self) -> np.ndarray:
        """Band-traced metric, real array ``(nx, ny, D, D)``."""
        return band_trace(self.g).real

    def trace_f(self) -> np.ndarray:
        return band_trace(self.f).real

    def integrate(self, cell_values: np.ndarray) -> float:
        """Sum of ``cell_values * cell area`` over non-singular cells.

        The reduction runs over the full array in index order, so it does not
        depend on how the grid was partitioned among workers.
        """
        vals = np.where(self.singular_mask, 0.0, np.asarray(cell_values))
        return float(np.sum(vals) * self.grid.cell_area)


def _row_chunks(nx: int, workers: int) -> list[np.ndarray]:
    workers = max(1, min(int(workers), nx))
    return [c for c in np.array_split(np.arange(nx), workers) if c.size]


def map_rows(fn: Callable[[np.ndarray], tuple], nx: int, workers: int = 1) -> list[tuple]:
    """Apply ``fn`` to row-index chunks, returning results in row order."""
    chunks = _row_chunks(nx, workers)
    if len(chunks) == 1:
        return [fn(chunks[0])]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(fn, chunks))


def _finish_grid(grid: GridSpec, values, singular, payload, ext, directions, pole_mask=None) -> FieldGrid:
    values = np.array(values)
    values[singular] = np.nan
    out = FieldGrid(grid, values, singular, payload, tuple(ext), directions, pole_mask)
    frac = out.singular_fraction
    if frac > SINGULAR_WARN_FRACTION:
        msg = f"{out.singular_count}/{singular.size} cells singular ({frac:.1%}); model likely at criticality"
        out.warnings.append(msg)
        warnings.warn(msg, CriticalRegionWarning, stacklevel=3)
    return out


def qgt_grid(
    family: HamiltonianFamily,
    grid: GridSpec,
    subspace: Subspace | None = None,
    external: Sequence[float] = (),
    h: float = DEFAULT_STEP,
    directions: Sequence[int] | None = None,
    *,
    method: str = "projector",
    workers: int = 1,
    gauge: GaugeFn | None = None,
) -> FieldGrid:
    """QGT on every cell of a momentum grid at fixed external parameters.

    ``method="projector"`` works for any family. ``method="analytic"`` uses the
    closed two-band form and needs a :class:`DVectorFamily`; cells on a pole of
    the angle chart fall back to the projector method and are recorded in
    ``pole_mask``. Cells where the gap closes anywhere on the stencil are
    flagged singular and set to NaN; more than 10% singular cells triggers a
    :class:`CriticalRegionWarning`.
    """
    if family.n_periodic != 2:
        raise ValueError("momentum grids need a family with two periodic coordinates")
    subspace = subspace or Subspace.lower_half(family)
    subspace.validate_for(family)
    directions = _resolve_directions(family, directions)
    ext = np.asarray(external, dtype=float).reshape(-1)
    if ext.size != family.n_external:
        raise ValueError(f"{family.name} needs {family.n_external} external parameters, got {ext.size}")
    kpts = grid.points()

    if method == "analytic":
        return _analytic_grid(family, grid, subspace, ext, h, directions, kpts, workers, gauge)
    if method != "projector":
        raise ValueError(f"unknown method {method!r}")

    def work(rows):
        k = kpts[rows]
        e = np.broadcast_to(ext, k.shape[:-1] + ext.shape).copy()
        q, gap, overlap, _ = _qgt_core(family, k, e, subspace, h, directions, gauge)
        return q, (gap <= subspace.gap_tol) | (overlap <= OVERLAP_TOL)

    parts = map_rows(work, grid.nx, workers)
    q = np.concatenate([p[0] for p in parts])
    singular = np.concatenate([p[1] for p in parts])
    return _finish_grid(grid, q, singular, "qgt", ext, directions)


def _analytic_grid(family, grid, subspace, ext, h, directions, kpts, workers, gauge) -> FieldGrid:
    if not isinstance(family, DVectorFamily) or family.d_vector is None or family.d_gradient is None:
        raise ValueError(f"analytic method needs a two-band d-vector family, got {family.name!r}")
    if subspace.start != 0 or subspace.stop != 1:
        raise ValueError("analytic method evaluates the lower band only")
    tol = subspace.gap_tol

    def work(rows):
        k = kpts[rows]
        e = np.broadcast_to(ext, k.shape[:-1] + ext.shape).copy()
        d = family.d_vector(k, e)
        grad = family.d_gradient(k, e)[..., list(directions), :]
        r = np.linalg.norm(d[..., :3], axis=-1)
        rho = np.hypot(d[..., 0], d[..., 1])
        singular = 2 * r <= tol
        pole = (rho <= tol) & ~singular
        with np.errstate(divide="ignore", invalid="ignore"):
            q = _qgt_analytic_core(d, grad).astype(np.complex128)
        if np.any(pole):
            qp, gap, overlap, _ = _qgt_core(family, k[pole], e[pole], subspace, h, directions, gauge)
            q[pole] = qp
            singular[pole] = (gap <= tol) | (overlap <= OVERLAP_TOL)
        return q, singular, pole

    parts = map_rows(work, grid.nx, workers)
    q = np.concatenate([p[0] for p in parts])
    singular = np.concatenate([p[1] for p in parts])
    pole = np.concatenate([p[2] for p in parts])
    return _finish_grid(grid, q, singular, "qgt", ext, directions, pole_mask=pole)


def frame_grid(
    family: HamiltonianFamily,
    grid: GridSpec,
    subspace: Subspace | None = None,
    external: Sequence[float] = (),
    *,
    workers: int = 1,
    gauge: GaugeFn | None = None,
) -> FieldGrid:
    """Eigenframes of the tracked subspace on every grid cell."""
    subspace = subspace or Subspace.lower_half(family)
    subspace.validate_for(family)
    ext = np.asarray(external, dtype=float).reshape(-1)
    if ext.size != family.n_external:
        raise ValueError(f"{family.name} needs {family.n_external} external parameters, got {ext.size}")
    kpts = grid.points()

    def work(rows):
        k = kpts[rows]
        e = np.broadcast_to(ext, k.shape[:-1] + ext.shape).copy()
        frames, gap, _ = _eigenframes(family, k, e, subspace, gauge)
        return frames, gap <= subspace.gap_tol

    parts = map_rows(work, grid.nx, workers)
    frames = np.concatenate([p[0] for p in parts])
    singular = np.concatenate([p[1] for p in parts])
    return _finish_grid(grid, frames, singular, "frame", ext, ())
