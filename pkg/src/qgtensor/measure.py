"""Scalar diagnostics: fidelity susceptibility, parameter sweeps and critical points."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CriticalRegionWarning, QGTError
from .linalg import adjoint, fro_norm
from .models import HamiltonianFamily, ParameterPoint
from .qgt import DEFAULT_STEP, FieldGrid, GridSpec, Subspace, band_trace, eigenframe, frame_grid, qgt_grid, qgt_point
from .topology import chern_direct, chern_lattice

UNIT_TOL = 1e-8
MIN_SWEEP_POINTS = 5
IQR_FACTOR = 3.0


def _unit_direction(direction, n_coords: int) -> np.ndarray:
    u = np.asarray(direction, dtype=float).reshape(-1)
    if u.size != n_coords:
        raise ValueError(f"direction has {u.size} components, the parameter space has {n_coords}")
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise ValueError(f"direction must be a unit vector, |u| = {np.linalg.norm(u):.6g}")
    return u


def fidelity_susceptibility(
    family: HamiltonianFamily,
    point: ParameterPoint,
    direction: Sequence[float],
    subspace: Subspace | None = None,
    h: float = DEFAULT_STEP,
) -> float:
    """``chi_FS = sum_{mu nu} Tr g_{mu nu} u^mu u^nu`` along a unit direction.

    ``direction`` has one component per coordinate of ``point`` (momenta
    first, then external parameters). For a multi-band subspace the band
    trace makes the result gauge invariant.
    """
    u = _unit_direction(direction, point.n_directions)
    active = tuple(int(i) for i in np.flatnonzero(u))
    q = qgt_point(family, point, subspace, h, active)
    tr_g = band_trace(q.g).real
    ua = u[list(active)]
    return float(ua @ tr_g @ ua)


def overlap_susceptibility(
    family: HamiltonianFamily,
    point: ParameterPoint,
    direction: Sequence[float],
    subspace: Subspace | None = None,
    delta: float = 1e-3,
) -> float:
    """Finite-shift estimate ``(n - |V(p)^dag V(p + delta u)|_F^2) / delta^2``.

    For one band this is ``(1 - |<psi(p)|psi(p + delta u)>|^2) / delta^2``.
    """
    subspace = subspace or Subspace.lower_half(family)
    u = _unit_direction(direction, point.n_directions)
    v0 = eigenframe(family, point, subspace).vectors
    shifted = point.coords + delta * u
    n = len(point.k)
    v1 = eigenframe(family, ParameterPoint(tuple(shifted[:n]), tuple(shifted[n:])), subspace).vectors
    return float((subspace.n - fro_norm(adjoint(v0) @ v1) ** 2) / delta**2)


def sweep_values(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive arithmetic grid ``start, start + step, ..., <= stop``.

    Values are rounded to 12 decimals so that e.g. ``0`` and ``2`` are hit
    exactly.
    """
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise ValueError("sweep bounds must be finite")
    if step <= 0:
        raise ValueError(f"sweep step must be positive, got {step}")
    if stop < start:
        raise ValueError(f"empty sweep range [{start}, {stop}]")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12)


@dataclass
class SweepResult:
    """Observable versus the swept external parameter.

    ``values`` is NaN where the observable is undefined or failed; ``errors``
    maps sample index to the reason.
    """

    parameters: np.ndarray
    values: np.ndarray
    singular_counts: np.ndarray
    grid: GridSpec
    kind: str
    method: str = ""
    errors: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.parameters = np.asarray(self.parameters, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.singular_counts = np.asarray(self.singular_counts, dtype=int)
        if not (self.parameters.shape == self.values.shape == self.singular_counts.shape) or self.parameters.ndim != 1:
            raise ValueError("sweep arrays must be one-dimensional and of equal length")
        if np.any(np.diff(self.parameters) <= 0):
            raise ValueError("sweep parameters must be strictly increasing")

    def __len__(self) -> int:
        return self.parameters.size

    @property
    def step(self) -> float:
        return float(np.median(np.diff(self.parameters))) if len(self) > 1 else 0.0


@dataclass(frozen=True)
class CriticalPointEstimate:
    """A detected transition.

    For ``kind="peak"`` ``peak_value`` is the (possibly infinite) observable
    at the peak; for ``kind="plateau"`` it is the jump in the invariant.
    """

    location: float
    peak_value: float
    resolution: float
    kind: str = "peak"


def _external_for(family: HamiltonianFamily, m: float, fixed: Sequence[float]) -> tuple[float, ...]:
    ext = (float(m), *map(float, fixed))
    if len(ext) != family.n_external:
        raise ValueError(f"{family.name} needs {family.n_external} external parameters, got {len(ext)}")
    return ext


def _sweep(
    family: HamiltonianFamily,
    parameters: np.ndarray,
    grid: GridSpec,
    fixed: Sequence[float],
    evaluate: Callable[[tuple[float, ...]], tuple[float, int]],
    kind: str,
    method: str,
) -> SweepResult:
    values = np.full(parameters.size, np.nan)
    singular = np.zeros(parameters.size, dtype=int)
    errors: dict[int, str] = {}
    for i, m in enumerate(parameters):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CriticalRegionWarning)
                value, count, note = evaluate(_external_for(family, m, fixed))
        except QGTError as exc:
            errors[i] = str(exc)
            singular[i] = getattr(exc, "singular_cells", 0)
            continue
        values[i] = value
        singular[i] = count
        if note:
            errors[i] = note
    return SweepResult(parameters, values, singular, grid, kind, method, errors)


def _metric_integral(field_: FieldGrid) -> float:
    ix, iy = field_.directions.index(0), field_.directions.index(1)
    tr_g = field_.trace_g()
    return field_.integrate(tr_g[..., ix, ix] + tr_g[..., iy, iy])


def integrated_metric_sweep(
    family: HamiltonianFamily,
    start: float,
    stop: float,
    step: float,
    grid: GridSpec,
    subspace: Subspace | None = None,
    *,
    fixed: Sequence[float] = (),
    h: float = DEFAULT_STEP,
    method: str = "projector",
    workers: int = 1,
) -> SweepResult:
    """``sum_cells (Tr g_xx + Tr g_yy) * cell area`` over non-singular cells, per ``m``.

    ``m`` is the first external parameter; ``fixed`` supplies any others.
    Per-value failures become NaN entries with a message in ``errors``.
    """
    return integrated_metric_scan(
        family, sweep_values(start, stop, step), grid, subspace, fixed=fixed, h=h, method=method, workers=workers
    )


def integrated_metric_scan(
    family: HamiltonianFamily,
    parameters: Sequence[float],
    grid: GridSpec,
    subspace: Subspace | None = None,
    *,
    fixed: Sequence[float] = (),
    h: float = DEFAULT_STEP,
    method: str = "projector",
    workers: int = 1,
) -> SweepResult:
    """As :func:`integrated_metric_sweep` at explicit, increasing ``parameters``."""
    params = np.asarray(parameters, dtype=float)

    def evaluate(ext):
        fg = qgt_grid(family, grid, subspace, ext, h, (0, 1), method=method, workers=workers)
        return _metric_integral(fg), fg.singular_count, ""

    return _sweep(family, params, grid, fixed, evaluate, "metric", method)


def chern_sweep(
    family: HamiltonianFamily,
    start: float,
    stop: float,
    step: float,
    grid: GridSpec,
    subspace: Subspace | None = None,
    method: str = "lattice",
    *,
    fixed: Sequence[float] = (),
    h: float = DEFAULT_STEP,
    workers: int = 1,
) -> SweepResult:
    """First Chern number per ``m`` by the ``lattice`` or ``direct`` method.

    Values where the gap closes on any grid cell are undefined (NaN), as are
    values whose computation failed.
    """
    return chern_scan(
        family, sweep_values(start, stop, step), grid, subspace, method, fixed=fixed, h=h, workers=workers
    )


def chern_scan(
    family: HamiltonianFamily,
    parameters: Sequence[float],
    grid: GridSpec,
    subspace: Subspace | None = None,
    method: str = "lattice",
    *,
    fixed: Sequence[float] = (),
    h: float = DEFAULT_STEP,
    workers: int = 1,
) -> SweepResult:
    """As :func:`chern_sweep` at explicit, increasing ``parameters``."""
    if method not in ("lattice", "direct"):
        raise ValueError(f"unknown Chern method {method!r}")
    params = np.asarray(parameters, dtype=float)

    def evaluate(ext):
        if method == "lattice":
            fg = frame_grid(family, grid, subspace, ext, workers=workers)
        else:
            fg = qgt_grid(family, grid, subspace, ext, h, (0, 1), workers=workers)
        if fg.singular_count:
            return math.nan, fg.singular_count, f"gap closes on {fg.singular_count} cells; C1 undefined"
        result = chern_lattice(fg) if method == "lattice" else chern_direct(fg)
        return float(result.value), 0, ""

    return _sweep(family, params, grid, fixed, evaluate, "chern", method)


def _parabolic_offset(ym: float, y0: float, yp: float) -> float:
    denom = ym - 2.0 * y0 + yp
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / denom, -0.5, 0.5))


def _peaks(sweep: SweepResult) -> list[CriticalPointEstimate]:
    x = sweep.parameters
    y = sweep.values.copy()
    # samples where the gap closes on the grid stand for the divergence itself
    y[(sweep.singular_counts > 0) & ~np.isnan(y)] = np.inf
    finite = y[np.isfinite(y)]
    if finite.size == 0:
        threshold = -np.inf
    else:
        q1, med, q3 = np.percentile(finite, [25, 50, 75])
        threshold = med + IQR_FACTOR * (q3 - q1)
    step = sweep.step
    out: list[CriticalPointEstimate] = []
    i, last = 1, len(y) - 1
    while i < last:
        if np.isposinf(y[i]):
            j = i
            while j + 1 < len(y) and np.isposinf(y[j + 1]):
                j += 1
            if j < last:
                out.append(CriticalPointEstimate(float(np.mean(x[i : j + 1])), math.inf, step * (j - i + 1) / 2 + step / 2))
            i = j + 1
            continue
        ym, y0, yp = y[i - 1], y[i], y[i + 1]
        if np.isfinite(y0) and y0 > threshold and not (ym >= y0) and not (yp > y0):
            offset = _parabolic_offset(ym, y0, yp) if np.isfinite(ym) and np.isfinite(yp) else 0.0
            out.append(CriticalPointEstimate(float(x[i] + offset * step), float(y0), step))
        i += 1
    return out


def _plateau_changes(sweep: SweepResult) -> list[CriticalPointEstimate]:
    ok = np.flatnonzero(np.isfinite(sweep.values))
    out = []
    for a, b in zip(ok[:-1], ok[1:]):
        va, vb = sweep.values[a], sweep.values[b]
        if round(va) != round(vb):
            xa, xb = sweep.parameters[a], sweep.parameters[b]
            out.append(CriticalPointEstimate(float(0.5 * (xa + xb)), float(round(vb) - round(va)), float(0.5 * (xb - xa)), "plateau"))
    return out


def detect_critical_points(sweep: SweepResult) -> list[CriticalPointEstimate]:
    """Critical points of a sweep.

    Metric sweeps: interior local maxima above ``median + 3 * IQR`` of the
    finite samples, refined by a three-point parabola. A sample with singular
    grid cells is a gap closing caught on the grid and counts as an infinite
    peak; runs of such samples merge into one estimate.

    Chern sweeps: midpoints between neighbouring defined samples whose integer
    values differ.

    Raises:
        ValueError: for sweeps with fewer than 5 samples.
    """
    if len(sweep) < MIN_SWEEP_POINTS:
        raise ValueError(f"need at least {MIN_SWEEP_POINTS} sweep points, got {len(sweep)}")
    if sweep.kind == "chern":
        return _plateau_changes(sweep)
    return _peaks(sweep)


def plateaus(sweep: SweepResult) -> list[tuple[float, float, int]]:
    """Maximal runs ``(first m, last m, C1)`` of equal defined Chern values."""
    out: list[tuple[float, float, int]] = []
    for m, v in zip(sweep.parameters, sweep.values):
        if not np.isfinite(v):
            continue
        c = int(round(v))
        if out and out[-1][2] == c:
            out[-1] = (out[-1][0], float(m), c)
        else:
            out.append((float(m), float(m), c))
    return out
