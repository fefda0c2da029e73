"""Chern numbers and Wilson loops.

Orientation conventions: the torus is oriented by ``dkx ^ dky`` and the
curvature is ``F_xy = i (Q_xy - Q_xy^dag)`` of the tracked (by default lower)
bands. With these choices the two-band model has ``C1 = +1`` for
``-2 < m < 0`` and ``C1 = -1`` for ``0 < m < 2``.

A link variable ``U = det(V_a^dag V_b)/|...|`` behaves like ``exp(-i A dk)``
for the connection ``A = i <psi|d psi>``, so the plaquette product carries
``exp(-i F dkx dky)``; the lattice field strength is minus its phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg
from .errors import CriticalRegionError, LatticeError, SingularMatrixError, SingularPointError
from .linalg import adjoint
from .models import TWO_PI, HamiltonianFamily, ParameterPoint, reduce_periodic
from .qgt import (
    DEFAULT_STEP,
    OVERLAP_TOL,
    FieldGrid,
    Frame,
    GaugeFn,
    Subspace,
    _eigenframes,
    band_trace,
    qgt_point,
)

CRITICAL_FRACTION = 0.10
LINK_TOL = 1e-12
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class ChernResult:
    """``value`` is an exact integer for the lattice method, a float otherwise.

    ``deviation`` is ``|raw value - nearest integer|``; for the lattice method
    ``max_plaquette_phase`` records how close the grid is to the admissibility
    limit ``pi``.
    """

    value: float | int
    method: str
    grid: tuple[int, int]
    singular_cells: int
    deviation: float
    max_plaquette_phase: float | None = None

    @property
    def nearest_integer(self) -> int:
        return int(round(self.value))


@dataclass(frozen=True)
class Holonomy:
    unitary: np.ndarray
    path: tuple[ParameterPoint, ...]
    closed: bool

    @property
    def berry_phase(self) -> float:
        """Phase of ``det W`` in ``(-pi, pi]``; for one band the Berry phase."""
        return float(np.angle(np.linalg.det(self.unitary)))

    def unitarity_error(self) -> float:
        w = self.unitary
        return float(linalg.fro_norm(adjoint(w) @ w - np.eye(w.shape[-1])))


def chern_direct(field: FieldGrid, max_singular_fraction: float = CRITICAL_FRACTION) -> ChernResult:
    """First Chern number by summing ``Tr F_xy * dkx * dky / 2 pi`` over cells.

    Singular cells are skipped.

    Raises:
        CriticalRegionError: if the singular fraction is ``>= 10%``.
    """
    if field.payload != "qgt":
        raise ValueError("chern_direct needs a QGT field")
    if field.singular_fraction >= max_singular_fraction:
        raise CriticalRegionError(field.singular_count, field.singular_mask.size, max_singular_fraction)
    try:
        ix, iy = field.directions.index(0), field.directions.index(1)
    except ValueError:
        raise ValueError("field does not contain both momentum directions") from None
    tr_f = band_trace(field.f[..., ix, iy, :, :])
    ok = ~field.singular_mask
    imag = np.max(np.abs(tr_f.imag[ok]), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(tr_f.real[ok]), initial=0.0)))
    if imag > IMAG_TOL * scale:
        raise ArithmeticError(f"curvature trace has imaginary residue {imag:.3e}")
    value = field.integrate(tr_f.real) / TWO_PI
    return ChernResult(value, "direct", (field.nx, field.ny), field.singular_count, abs(value - round(value)))


def link_variable(frame_a: Frame | np.ndarray, frame_b: Frame | np.ndarray, tol: float = LINK_TOL) -> complex:
    """Unimodular link ``det(V_a^dag V_b) / |det(V_a^dag V_b)|``.

    Raises:
        LatticeError: if the overlap determinant vanishes.
    """
    va = frame_a.vectors if isinstance(frame_a, Frame) else np.asarray(frame_a)
    vb = frame_b.vectors if isinstance(frame_b, Frame) else np.asarray(frame_b)
    if va.shape != vb.shape:
        raise ValueError(f"frames differ in shape: {va.shape} vs {vb.shape}")
    dt = complex(np.linalg.det(adjoint(va) @ vb))
    if abs(dt) <= tol:
        raise LatticeError(f"vanishing link |det| = {abs(dt):.3e}; refine the grid")
    return dt / abs(dt)


def _links(v: np.ndarray, axis: int, tol: float) -> np.ndarray:
    dt = np.linalg.det(adjoint(v) @ np.roll(v, -1, axis=axis))
    mag = np.abs(dt)
    if np.any(mag <= tol):
        i, j = np.unravel_index(int(np.argmin(mag)), mag.shape)
        raise LatticeError(f"vanishing link at cell ({i}, {j}) along axis {axis}: |det| = {mag[i, j]:.3e}; refine the grid")
    return dt / mag


def lattice_field_strength(frames: FieldGrid, tol: float = LINK_TOL) -> np.ndarray:
    """Curvature flux through each plaquette, ``(nx, ny)`` real in ``(-pi, pi]``."""
    v = frames.values
    ux = _links(v, 0, tol)
    uy = _links(v, 1, tol)
    plaquette = ux * np.roll(uy, -1, axis=0) * np.conj(np.roll(ux, -1, axis=1)) * np.conj(uy)
    return -np.angle(plaquette)


def chern_lattice(frames: FieldGrid, tol: float = LINK_TOL, admissibility: float = np.pi * (1 - 1e-6)) -> ChernResult:
    """Gauge-invariant lattice Chern number from link variables.

    The plaquette fluxes sum to ``2 pi`` times an integer by construction; the
    result is returned as an ``int``.

    Raises:
        CriticalRegionError: if any cell is singular.
        LatticeError: for vanishing links or a plaquette at the branch cut.
    """
    if frames.payload != "frame":
        raise ValueError("chern_lattice needs a frame field")
    if frames.singular_count:
        raise CriticalRegionError(frames.singular_count, frames.singular_mask.size, 0.0)
    flux = lattice_field_strength(frames, tol)
    worst = float(np.max(np.abs(flux)))
    if worst >= admissibility:
        raise LatticeError(f"plaquette flux {worst:.6f} reaches the branch cut; refine the grid")
    raw = float(np.sum(flux)) / TWO_PI
    value = int(round(raw))
    if abs(raw - value) > 1e-6:
        raise LatticeError(f"plaquette sum {raw!r} is not an integer; frames are not periodic on the grid")
    return ChernResult(value, "lattice", (frames.nx, frames.ny), 0, abs(raw - value), worst)


def _same_point(a: ParameterPoint, b: ParameterPoint, tol: float = 1e-12) -> bool:
    if len(a.k) != len(b.k) or len(a.external) != len(b.external):
        return False
    dk = np.abs(reduce_periodic(np.array(a.k) - np.array(b.k) + np.pi) - np.pi)
    de = np.abs(np.array(a.external) - np.array(b.external))
    return bool(np.all(dk <= tol) and np.all(de <= tol))


def wilson_loop(
    family: HamiltonianFamily,
    path: Sequence[ParameterPoint],
    subspace: Subspace | None = None,
    *,
    gauge: GaugeFn | None = None,
) -> Holonomy:
    """Path-ordered parallel transport of the tracked subspace along ``path``.

    Each segment contributes the polar factor ``U_j`` of ``V_j^dag V_{j+1}``;
    the result is ``W = (U_0 U_1 ... U_{L-1})^dag``, the unitary acting on
    component vectors in the gauge of the first frame. For a closed path the
    starting frame is reused at the end, so ``W`` is the holonomy and for a
    single band ``W = exp(i * Berry phase)``.

    Raises:
        SingularPointError: if the gap closes at a path point.
        SingularMatrixError: if consecutive frames are nearly orthogonal.
    """
    subspace = subspace or Subspace.lower_half(family)
    subspace.validate_for(family)
    path = tuple(path)
    if len(path) < 3:
        raise ValueError("a path needs at least 3 points")
    k = np.array([p.k for p in path], dtype=float)
    ext = np.array([p.external for p in path], dtype=float).reshape(len(path), family.n_external)
    frames, gap, _ = _eigenframes(family, k, ext, subspace, gauge)
    bad = np.flatnonzero(gap <= subspace.gap_tol)
    if bad.size:
        i = int(bad[0])
        raise SingularPointError(path[i], float(gap[i]), subspace.gap_tol)
    closed = _same_point(path[0], path[-1])
    if closed:
        frames = frames.copy()
        frames[-1] = frames[0]
    u, smin = linalg.polar_unitary(adjoint(frames[:-1]) @ frames[1:])
    if np.any(smin <= OVERLAP_TOL):
        i = int(np.argmin(smin))
        raise SingularMatrixError(float(smin[i]), OVERLAP_TOL, context=f"segment {path[i]} -> {path[i + 1]}")
    total = np.eye(subspace.n, dtype=np.complex128)
    for uj in u:
        total = total @ uj
    return Holonomy(adjoint(total), path, closed)


def square_loop(
    center: ParameterPoint,
    side: float,
    directions: tuple[int, int] = (0, 1),
    points_per_side: int = 8,
) -> list[ParameterPoint]:
    """Counter-clockwise square in the ``(mu, nu)`` plane, entered from ``center``.

    The path runs from the center to the midpoint of the ``+mu`` edge, around
    the square, and back. The stick is traversed both ways, so the closed
    transport is the square's holonomy expressed in the center's gauge.
    """
    if side <= 0:
        raise ValueError("side must be positive")
    mu, nu = directions
    if mu == nu:
        raise ValueError("loop directions must differ")
    n_half = max(1, points_per_side // 2)
    s = side / 2
    corners = [(0.0, 0.0), (s, 0.0), (s, s), (-s, s), (-s, -s), (s, -s), (s, 0.0), (0.0, 0.0)]
    local = [corners[0]]
    for (a0, b0), (a1, b1) in zip(corners[:-1], corners[1:]):
        length = max(abs(a1 - a0), abs(b1 - b0))
        steps = max(1, int(round(n_half * length / s)))
        for t in range(1, steps + 1):
            f = t / steps
            local.append((a0 + f * (a1 - a0), b0 + f * (b1 - b0)))
    base = center.coords
    n = len(center.k)
    out = []
    for a, b in local:
        c = base.copy()
        c[mu] += a
        c[nu] += b
        out.append(ParameterPoint(tuple(c[:n]), tuple(c[n:])))
    return out


def small_loop_holonomy(
    family: HamiltonianFamily,
    center: ParameterPoint,
    subspace: Subspace | None = None,
    side: float = 1e-2,
    directions: tuple[int, int] = (0, 1),
    *,
    h: float = DEFAULT_STEP,
    points_per_side: int = 8,
    gauge: GaugeFn | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Holonomy ``W`` of a small square, the curvature ``F_mu_nu`` at its center and its area."""
    subspace = subspace or Subspace.lower_half(family)
    path = square_loop(center, side, directions, points_per_side)
    w = wilson_loop(family, path, subspace, gauge=gauge).unitary
    f = qgt_point(family, center, subspace, h, directions, gauge=gauge).f[0, 1]
    return w, f, side * side


def small_loop_check(
    family: HamiltonianFamily,
    center: ParameterPoint,
    subspace: Subspace | None = None,
    side: float = 1e-2,
    directions: tuple[int, int] = (0, 1),
    *,
    h: float = DEFAULT_STEP,
    points_per_side: int = 8,
    gauge: GaugeFn | None = None,
) -> float:
    """``|(W - 1)/sigma - i F_mu_nu(center)|_F`` for a square of the given side.

    ``W`` is the holonomy around the counter-clockwise square spanned by
    ``directions`` (in that order) and ``sigma = side**2`` its area.
    """
    w, f, area = small_loop_holonomy(
        family, center, subspace, side, directions, h=h, points_per_side=points_per_side, gauge=gauge
    )
    eye = np.eye(w.shape[-1])
    return float(linalg.fro_norm((w - eye) / area - 1j * f))
