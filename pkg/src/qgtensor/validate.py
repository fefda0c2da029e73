"""Built-in invariant checks run by ``qgt validate``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import adjoint, fro_norm
from .measure import fidelity_susceptibility, overlap_susceptibility
from .models import ParameterPoint, doubled_qwz_family, qwz_family
from .qgt import GridSpec, Subspace, eigenframe, frame_grid, projector, qgt_grid, qgt_point
from .topology import chern_direct, chern_lattice, small_loop_check, wilson_loop

SAMPLE_POINTS = (
    ParameterPoint((1.0, 0.5), (1.0,)),
    ParameterPoint((2.3, 4.1), (-1.2,)),
    ParameterPoint((5.0, 0.2), (2.7,)),
    ParameterPoint((0.4, 3.3), (0.6,)),
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _families():
    return ((qwz_family(), Subspace(0, 1)), (doubled_qwz_family(), Subspace(0, 2)))


def _all_directions(point: ParameterPoint) -> tuple[int, ...]:
    return tuple(range(point.n_directions))


def check_hermiticity() -> CheckResult:
    worst = 0.0
    for fam, sub in _families():
        for p in SAMPLE_POINTS:
            worst = max(worst, qgt_point(fam, p, sub, directions=_all_directions(p)).hermiticity_error())
    return CheckResult("hermiticity", worst < 1e-10, f"max |Q_nu_mu - Q_mu_nu^dag| = {worst:.2e}")


def check_metric_psd() -> CheckResult:
    lowest = np.inf
    for fam, sub in _families():
        for p in SAMPLE_POINTS:
            q = qgt_point(fam, p, sub, directions=_all_directions(p)).q
            d, n = q.shape[0], q.shape[-1]
            block = np.transpose(q, (0, 2, 1, 3)).reshape(d * n, d * n)
            lowest = min(lowest, float(np.min(np.linalg.eigvalsh(0.5 * (block + adjoint(block))))))
            lowest = min(lowest, float(np.min(np.linalg.eigvalsh(np.trace(q, axis1=-2, axis2=-1).real))))
    return CheckResult("metric-psd", lowest > -1e-10, f"smallest eigenvalue {lowest:.2e}")


def check_curvature_antisymmetry() -> CheckResult:
    worst = 0.0
    for fam, sub in _families():
        for p in SAMPLE_POINTS:
            f = qgt_point(fam, p, sub, directions=_all_directions(p)).f
            worst = max(worst, float(np.max(fro_norm(f + np.swapaxes(f, 0, 1)))))
            worst = max(worst, float(np.max(fro_norm(f - adjoint(f)))))
    return CheckResult("curvature-antisymmetry", worst < 1e-10, f"max |F_mu_nu + F_nu_mu| = {worst:.2e}")


def check_projector() -> CheckResult:
    worst = 0.0
    for fam, sub in _families():
        for p in SAMPLE_POINTS:
            pr = projector(eigenframe(fam, p, sub))
            worst = max(worst, float(fro_norm(pr @ pr - pr)), float(fro_norm(pr - adjoint(pr))))
    return CheckResult("projector-idempotency", worst < 1e-12, f"max |P^2 - P| = {worst:.2e}")


def check_wilson_unitarity() -> CheckResult:
    worst = 0.0
    ky = 0.7
    path = [ParameterPoint((x, ky), (1.0,)) for x in np.linspace(0.0, 2 * np.pi, 10_001)]
    for fam, sub in _families():
        worst = max(worst, wilson_loop(fam, path, sub).unitarity_error())
    return CheckResult("wilson-unitarity", worst < 1e-8, f"|W^dag W - 1| = {worst:.2e} over 10^4 segments")


def random_gauge(seed: int = 0, n: int = 2) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Gauge hook returning a pseudo-random ``U(n)`` matrix (``n`` = 1 or 2) per point.

    The matrix is a deterministic, deliberately non-smooth hash of the point
    coordinates, so neighbouring stencil points get unrelated rotations.
    """
    if n not in (1, 2):
        raise ValueError("random_gauge supports n = 1 or 2")

    def gauge(k, ext):
        c = np.concatenate([np.asarray(k, dtype=float), np.asarray(ext, dtype=float)], axis=-1)
        weights = np.array([12.9898, 78.233, 37.719, 4.581][: c.shape[-1]] + [1.0] * max(0, c.shape[-1] - 4))
        base = c @ weights + 0.618 * seed
        ang = [np.modf(np.abs(np.sin(base * (j + 1) + j)) * 43758.5453)[0] * 2 * np.pi for j in range(4)]
        alpha, beta, gamma, theta = ang
        if n == 1:
            return np.exp(1j * alpha)[..., None, None]
        w = np.empty(c.shape[:-1] + (2, 2), dtype=np.complex128)
        w[..., 0, 0] = np.exp(1j * beta) * np.cos(theta)
        w[..., 0, 1] = np.exp(1j * gamma) * np.sin(theta)
        w[..., 1, 0] = -np.exp(-1j * gamma) * np.sin(theta)
        w[..., 1, 1] = np.exp(-1j * beta) * np.cos(theta)
        return np.exp(1j * alpha)[..., None, None] * w

    return gauge


def check_gauge_covariance() -> CheckResult:
    fam, sub = doubled_qwz_family(), Subspace(0, 2)
    conj_err = 0.0
    for i, p in enumerate(SAMPLE_POINTS):
        ref = qgt_point(fam, p, sub)
        gauge = random_gauge(i)
        w = gauge(np.array(p.k), np.array(p.external))
        rotated = qgt_point(fam, p, sub, gauge=gauge)
        conj_err = max(conj_err, float(np.max(fro_norm(rotated.q - ref.conjugated(w).q))))
    loop_err = 0.0
    for f, s in _families():
        for p in SAMPLE_POINTS[:2]:
            scale = max(1.0, float(fro_norm(qgt_point(f, p, s).f[0, 1])))
            loop_err = max(loop_err, small_loop_check(f, p, s, side=1e-2) / scale)
    ok = conj_err < 1e-6 and loop_err < 1e-2
    return CheckResult(
        "gauge-covariance", ok, f"conjugation residual {conj_err:.2e}; small-loop holonomy vs F {loop_err:.2e}"
    )


def check_analytic_agreement() -> CheckResult:
    fam = qwz_family()
    num = qgt_grid(fam, GridSpec(16, 16), Subspace(0, 1), (1.0,))
    ana = qgt_grid(fam, GridSpec(16, 16), Subspace(0, 1), (1.0,), method="analytic")
    keep = ~ana.pole_mask & ~num.singular_mask
    err = float(np.max(np.abs(num.values - ana.values)[keep]))
    return CheckResult("analytic-agreement", err < 1e-5, f"max |Q_projector - Q_closed_form| = {err:.2e}")


def check_phase_diagram() -> CheckResult:
    fam = qwz_family()
    expected = {-1.0: 1, 1.0: -1, 3.0: 0, -3.0: 0}
    lines, ok = [], True
    for m, c in expected.items():
        lat = chern_lattice(frame_grid(fam, GridSpec(24, 24), Subspace(0, 1), (m,))).value
        direct = chern_direct(qgt_grid(fam, GridSpec(32, 32), Subspace(0, 1), (m,))).value
        ok &= lat == c and abs(direct - c) < 0.02
        lines.append(f"m={m:+g}: {lat:+d}/{direct:+.4f}")
    return CheckResult("phase-diagram", bool(ok), "; ".join(lines))


def check_additivity() -> CheckResult:
    lines, ok = [], True
    for m in (-1.0, 1.0, 3.0):
        single = chern_lattice(frame_grid(qwz_family(), GridSpec(24, 24), Subspace(0, 1), (m,))).value
        double = chern_lattice(frame_grid(doubled_qwz_family(), GridSpec(24, 24), Subspace(0, 2), (m,))).value
        ok &= double == 2 * single
        lines.append(f"m={m:+g}: {double:+d}")
    return CheckResult("non-abelian-additivity", bool(ok), "; ".join(lines))


def check_fidelity() -> CheckResult:
    fam = qwz_family()
    worst = 0.0
    for p in SAMPLE_POINTS:
        u = np.array([0.6, 0.0, 0.8])
        chi = fidelity_susceptibility(fam, p, u)
        # the +-u average cancels the odd truncation term of the overlap estimate
        oracle = 0.5 * (overlap_susceptibility(fam, p, u) + overlap_susceptibility(fam, p, -u))
        worst = max(worst, abs(chi - oracle) / chi)
    return CheckResult("fidelity-susceptibility", worst < 1e-3, f"max relative deviation {worst:.2e}")


def check_determinism() -> CheckResult:
    fam, sub = doubled_qwz_family(), Subspace(0, 2)
    grid = GridSpec(12, 12)
    a = qgt_grid(fam, grid, sub, (1.0,), workers=1)
    b = qgt_grid(fam, grid, sub, (1.0,), workers=4)
    fa = frame_grid(fam, grid, sub, (1.0,), workers=1)
    fb = frame_grid(fam, grid, sub, (1.0,), workers=3)
    same = np.array_equal(a.values, b.values, equal_nan=True) and np.array_equal(fa.values, fb.values)
    return CheckResult("determinism", bool(same), "bit-identical across 1/3/4 workers" if same else "outputs differ")


CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_hermiticity,
    check_metric_psd,
    check_curvature_antisymmetry,
    check_projector,
    check_wilson_unitarity,
    check_gauge_covariance,
    check_analytic_agreement,
    check_phase_diagram,
    check_additivity,
    check_fidelity,
    check_determinism,
)


def run_checks() -> list[CheckResult]:
    """Run every check; an exception inside a check counts as a failure."""
    out = []
    for check in CHECKS:
        name = check.__name__.removeprefix("check_").replace("_", "-")
        try:
            out.append(check())
        except Exception as exc:  # noqa: BLE001 - report, do not crash the table
            out.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return out


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  status  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL'}    {r.detail}")
    return "\n".join(lines)
