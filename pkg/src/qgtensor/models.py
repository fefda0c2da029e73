"""Parameterized Hamiltonian families.

A family maps a point of the parameter manifold (periodic momenta plus
external scalars such as the mass ``m``) to a Hermitian matrix. Families are
vectorized: ``hamiltonian(k, ext)`` takes ``k`` of shape ``(..., n_periodic)``
and ``ext`` of shape ``(..., n_external)`` and returns ``(..., dim, dim)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import linalg
from .errors import SingularPointError

TWO_PI = 2.0 * math.pi
TAU_GAP = 1e-8

SIGMA_0 = np.eye(2, dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)

HamiltonianFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def reduce_periodic(k):
    """Reduce angles to ``[0, 2*pi)``."""
    r = np.mod(k, TWO_PI)
    # mod of a tiny negative number rounds up to exactly 2*pi
    return np.where(r >= TWO_PI, 0.0, r)


@dataclass(frozen=True)
class ParameterPoint:
    k: tuple[float, ...]
    external: tuple[float, ...] = ()

    def __post_init__(self):
        k = tuple(float(x) for x in reduce_periodic(np.asarray(self.k, dtype=float).reshape(-1)))
        ext = tuple(float(x) for x in np.asarray(self.external, dtype=float).reshape(-1))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "external", ext)

    @property
    def coords(self) -> np.ndarray:
        """All coordinates, periodic first."""
        return np.array(self.k + self.external, dtype=float)

    @property
    def n_directions(self) -> int:
        return len(self.k) + len(self.external)

    def shifted(self, direction: int, delta: float) -> "ParameterPoint":
        c = self.coords
        c[direction] += delta
        n = len(self.k)
        return ParameterPoint(tuple(c[:n]), tuple(c[n:]))

    def __str__(self) -> str:
        k = ", ".join(f"{x:.6g}" for x in self.k)
        e = ", ".join(f"{x:.6g}" for x in self.external)
        return f"(k=({k}), ext=({e}))"


@dataclass(frozen=True)
class HamiltonianFamily:
    name: str
    dim: int
    n_periodic: int
    n_external: int
    hamiltonian: HamiltonianFn = field(repr=False)
    params: dict = field(default_factory=dict, compare=False)

    @property
    def n_directions(self) -> int:
        return self.n_periodic + self.n_external

    def evaluate_batch(self, k, ext) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        ext = np.asarray(ext, dtype=float)
        if k.shape[-1] != self.n_periodic or ext.shape[-1] != self.n_external:
            raise ValueError(
                f"{self.name} expects {self.n_periodic} periodic and {self.n_external} external "
                f"coordinates, got {k.shape[-1]} and {ext.shape[-1]}"
            )
        lead = np.broadcast_shapes(k.shape[:-1], ext.shape[:-1])
        k = np.broadcast_to(k, lead + k.shape[-1:])
        ext = np.broadcast_to(ext, lead + ext.shape[-1:])
        h = np.asarray(self.hamiltonian(k, ext), dtype=np.complex128)
        h = np.broadcast_to(h, lead + h.shape[-2:])
        if h.shape[-2:] != (self.dim, self.dim):
            raise ValueError(f"{self.name} returned shape {h.shape[-2:]}, expected {(self.dim, self.dim)}")
        return h

    def evaluate(self, point: ParameterPoint) -> np.ndarray:
        return self.evaluate_batch(np.array(point.k), np.array(point.external))

    def spectrum(self, point: ParameterPoint) -> np.ndarray:
        return linalg.eig_hermitian(self.evaluate(point)).values


@dataclass(frozen=True)
class DVectorFamily(HamiltonianFamily):
    """Two-band family ``H = eps*1 + d.sigma`` with access to ``d`` itself.

    ``d_vector(k, ext)`` returns ``(..., 4)`` ordered ``(d1, d2, d3, eps)`` and
    ``d_gradient(k, ext)`` returns ``(..., n_directions, 3)`` with the
    derivatives of ``(d1, d2, d3)`` along every direction, periodic first.
    """

    d_vector: HamiltonianFn | None = field(default=None, repr=False)
    d_gradient: HamiltonianFn | None = field(default=None, repr=False)


class DVector(NamedTuple):
    d1: float
    d2: float
    d3: float
    eps: float = 0.0

    @property
    def norm(self) -> float:
        return math.sqrt(self.d1 ** 2 + self.d2 ** 2 + self.d3 ** 2)


def dvector_hamiltonian(d: DVector) -> np.ndarray:
    """``eps*1 + d1*sx + d2*sy + d3*sz``."""
    return d.eps * SIGMA_0 + d.d1 * SIGMA_X + d.d2 * SIGMA_Y + d.d3 * SIGMA_Z


def dvector_to_hamiltonian(d: np.ndarray) -> np.ndarray:
    """Vectorized :func:`dvector_hamiltonian` for ``d`` of shape ``(..., 4)``."""
    d = np.asarray(d, dtype=float)
    h = np.empty(d.shape[:-1] + (2, 2), dtype=np.complex128)
    h[..., 0, 0] = d[..., 3] + d[..., 2]
    h[..., 1, 1] = d[..., 3] - d[..., 2]
    h[..., 0, 1] = d[..., 0] - 1j * d[..., 1]
    h[..., 1, 0] = d[..., 0] + 1j * d[..., 1]
    return h


# --- two-band model on the momentum torus -----------------------------------


def _qwz_d(k: np.ndarray, ext: np.ndarray) -> np.ndarray:
    kx, ky, m = k[..., 0], k[..., 1], ext[..., 0]
    return np.stack(
        [np.sin(kx), np.sin(ky), m + np.cos(kx) + np.cos(ky), np.zeros_like(kx)], axis=-1
    )


def _qwz_grad(k: np.ndarray, ext: np.ndarray) -> np.ndarray:
    kx, ky = k[..., 0], k[..., 1]
    zero = np.zeros_like(kx)
    one = np.ones_like(kx)
    return np.stack(
        [
            np.stack([np.cos(kx), zero, -np.sin(kx)], axis=-1),
            np.stack([zero, np.cos(ky), -np.sin(ky)], axis=-1),
            np.stack([zero, zero, one], axis=-1),
        ],
        axis=-2,
    )


def qwz_family() -> DVectorFamily:
    """``d = (sin kx, sin ky, m + cos kx + cos ky)``, ``eps = 0``; external ``m``."""
    return DVectorFamily(
        name="qwz",
        dim=2,
        n_periodic=2,
        n_external=1,
        hamiltonian=lambda k, ext: dvector_to_hamiltonian(_qwz_d(k, ext)),
        d_vector=_qwz_d,
        d_gradient=_qwz_grad,
    )


def qwz_d_vector(point: ParameterPoint) -> DVector:
    if len(point.k) != 2 or len(point.external) != 1:
        raise ValueError(f"two-band model needs (kx, ky) and one external m, got {point}")
    d = _qwz_d(np.array(point.k), np.array(point.external))
    return DVector(*(float(x) for x in d))


def analytic_angles(d: DVector, tau_gap: float = TAU_GAP) -> tuple[float, float | None]:
    """Bloch-sphere angles of ``d``: ``theta = arccos(d3/|d|)``, ``phi = atan2(d2, d1)``.

    ``phi`` is ``None`` at the poles (``d1 = d2 = 0``) where the chart is
    undefined.

    Raises:
        SingularPointError: if ``|d| <= tau_gap``.
    """
    r = d.norm
    if r <= tau_gap:
        raise SingularPointError(d, 2.0 * r, tau_gap)
    theta = math.acos(min(1.0, max(-1.0, d.d3 / r)))
    if math.hypot(d.d1, d.d2) <= tau_gap:
        return theta, None
    return theta, math.atan2(d.d2, d.d1)


def analytic_eigenvectors(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower eigenvectors of ``n.sigma`` as 2x1 columns.

    ``psi_plus = (cos(theta/2), e^{i phi} sin(theta/2))`` and
    ``psi_minus = (-sin(theta/2), e^{i phi} cos(theta/2))``.
    """
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    ph = complex(math.cos(phi), math.sin(phi))
    plus = np.array([[c], [ph * s]], dtype=np.complex128)
    minus = np.array([[-s], [ph * c]], dtype=np.complex128)
    return plus, minus


# --- degenerate four-band family ----------------------------------------------

# Mixing generator G = sx(x)sx + sz(x)sy. The two terms commute and square to
# the identity, so G has eigenvalues {-2, 0, 0, 2} and exp(i kx G) is 2*pi periodic in kx.
MIX_A = np.kron(SIGMA_X, SIGMA_X)
MIX_B = np.kron(SIGMA_Z, SIGMA_Y)
MIX_GENERATOR = MIX_A + MIX_B


def default_mix(k: np.ndarray, ext: np.ndarray) -> np.ndarray:
    """``V(k) = exp(i kx G)`` with the fixed generator :data:`MIX_GENERATOR`."""
    kx = np.asarray(k, dtype=float)[..., 0]
    c = np.cos(kx)[..., None, None]
    s = np.sin(kx)[..., None, None]
    eye = np.eye(4, dtype=np.complex128)
    return (c * eye + 1j * s * MIX_A) @ (c * eye + 1j * s * MIX_B)


def identity_mix(k: np.ndarray, ext: np.ndarray) -> np.ndarray:
    shape = np.asarray(k).shape[:-1]
    return np.broadcast_to(np.eye(4, dtype=np.complex128), shape + (4, 4))


def doubled_qwz_family(mix: str | HamiltonianFn = "default") -> HamiltonianFamily:
    """``H4 = V(k) [H(k,m) (+) H(k,m)] V(k)^dag`` built from two copies of the two-band model.

    The lower eigenvalue is exactly two-fold degenerate everywhere. ``mix`` is
    ``"default"``, ``"identity"`` or a callable ``(k, ext) -> (..., 4, 4)``
    returning unitaries; non-unitary output is rejected at evaluation time.
    """
    if isinstance(mix, str):
        try:
            mix_fn = {"default": default_mix, "identity": identity_mix}[mix]
        except KeyError:
            raise ValueError(f"unknown mix {mix!r}") from None
        label = mix
    else:
        mix_fn = mix
        label = getattr(mix, "__name__", "custom")

    def hamiltonian(k, ext):
        h2 = dvector_to_hamiltonian(_qwz_d(k, ext))
        block = np.zeros(h2.shape[:-2] + (4, 4), dtype=np.complex128)
        block[..., :2, :2] = h2
        block[..., 2:, 2:] = h2
        v = np.asarray(mix_fn(k, ext), dtype=np.complex128)
        if v.shape[-2:] != (4, 4):
            raise ValueError(f"mix must return 4x4 matrices, got {v.shape[-2:]}")
        err = linalg.fro_norm(linalg.adjoint(v) @ v - np.eye(4))
        if np.any(err > 1e-10):
            raise ValueError(f"mix is not unitary (|V^dag V - 1| = {np.max(err):.3e})")
        return v @ block @ linalg.adjoint(v)

    return HamiltonianFamily(
        name="doubled-qwz", dim=4, n_periodic=2, n_external=1, hamiltonian=hamiltonian, params={"mix": label}
    )


def constant_family(matrix=None, n_periodic: int = 2, n_external: int = 1) -> HamiltonianFamily:
    """A family that ignores its parameters; all geometric quantities vanish."""
    h0 = SIGMA_Z * -1.0 if matrix is None else linalg.as_cmatrix(matrix)
    if linalg.hermiticity_error(h0) > 1e-12:
        raise ValueError("constant family needs a Hermitian matrix")
    dim = h0.shape[-1]

    def hamiltonian(k, ext):
        return np.broadcast_to(h0, np.asarray(k).shape[:-1] + (dim, dim))

    return HamiltonianFamily(
        name="constant", dim=dim, n_periodic=n_periodic, n_external=n_external, hamiltonian=hamiltonian
    )


# --- tabulated d-vector models ------------------------------------------------


def tabulated_dvector_family(table: np.ndarray, name: str = "tabulated") -> DVectorFamily:
    """Two-band family from d-vector samples on a uniform periodic grid.

    ``table[i, j] = (d1, d2, d3, eps)`` at ``k = 2*pi*(i/nx, j/ny)``. Between
    samples the components are continued by trigonometric interpolation, which
    reproduces the table exactly on the grid and is smooth and periodic, so the
    finite-difference machinery applies unchanged. No external parameters.
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 3 or table.shape[-1] != 4:
        raise ValueError(f"table must have shape (nx, ny, 4), got {table.shape}")
    nx, ny = table.shape[:2]
    coef = np.fft.fft2(table, axes=(0, 1)) / (nx * ny)
    qx = np.fft.fftfreq(nx) * nx
    qy = np.fft.fftfreq(ny) * ny

    def modes(k):
        ex = np.exp(1j * k[..., 0, None] * qx)
        ey = np.exp(1j * k[..., 1, None] * qy)
        return ex, ey

    def d_vector(k, ext):
        ex, ey = modes(np.asarray(k, dtype=float))
        return np.einsum("...a,abc,...b->...c", ex, coef, ey).real

    def d_gradient(k, ext):
        ex, ey = modes(np.asarray(k, dtype=float))
        gx = np.einsum("...a,abc,...b->...c", 1j * qx * ex, coef[..., :3], ey).real
        gy = np.einsum("...a,abc,...b->...c", ex, coef[..., :3], 1j * qy * ey).real
        return np.stack([gx, gy], axis=-2)

    return DVectorFamily(
        name=name,
        dim=2,
        n_periodic=2,
        n_external=0,
        hamiltonian=lambda k, ext: dvector_to_hamiltonian(d_vector(k, ext)),
        params={"nx": nx, "ny": ny},
        d_vector=d_vector,
        d_gradient=d_gradient,
    )


DVECTOR_COLUMNS = ("kx_index", "ky_index", "d1", "d2", "d3", "eps")


def read_dvector_csv(path: str | PathLike) -> np.ndarray:
    """Read a tabulated d-vector grid; returns an ``(nx, ny, 4)`` array."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DVECTOR_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = [
            (int(r["kx_index"]), int(r["ky_index"]), float(r["d1"]), float(r["d2"]), float(r["d3"]), float(r["eps"]))
            for r in reader
        ]
    if not rows:
        raise ValueError(f"{path}: no rows")
    nx = max(r[0] for r in rows) + 1
    ny = max(r[1] for r in rows) + 1
    table = np.full((nx, ny, 4), np.nan)
    for i, j, *vals in rows:
        if i < 0 or j < 0:
            raise ValueError(f"{path}: negative grid index ({i}, {j})")
        if not np.isnan(table[i, j, 0]):
            raise ValueError(f"{path}: duplicate entry for ({i}, {j})")
        table[i, j] = vals
    if np.isnan(table).any():
        raise ValueError(f"{path}: grid is incomplete, expected {nx}x{ny} entries")
    return table


def write_dvector_csv(path: str | PathLike, table: np.ndarray) -> None:
    table = np.asarray(table, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DVECTOR_COLUMNS)
        for i in range(table.shape[0]):
            for j in range(table.shape[1]):
                w.writerow([i, j, *(f"{x:.17g}" for x in table[i, j])])


def load_dvector_csv(path: str | PathLike) -> DVectorFamily:
    return tabulated_dvector_family(read_dvector_csv(path), name=f"tabulated:{path}")


def energy_gap(family: HamiltonianFamily, point: ParameterPoint, subspace_size: int) -> float:
    """Gap between level ``subspace_size - 1`` and level ``subspace_size``."""
    if not 0 < subspace_size < family.dim:
        raise ValueError(f"subspace_size must be in (0, {family.dim}), got {subspace_size}")
    values = family.spectrum(point)
    return float(values[subspace_size] - values[subspace_size - 1])


def make_family(name: str, *, mix: str = "default", table: str | None = None) -> HamiltonianFamily:
    """Look up a family by its CLI name."""
    if name == "qwz":
        return qwz_family()
    if name == "doubled-qwz":
        return doubled_qwz_family(mix)
    if name == "constant":
        return constant_family()
    if name == "tabulated":
        if table is None:
            raise ValueError("model 'tabulated' needs a d-vector table (--table PATH)")
        return load_dvector_csv(table)
    raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")


MODEL_NAMES: Sequence[str] = ("qwz", "doubled-qwz", "constant", "tabulated")
