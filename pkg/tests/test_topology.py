import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgtensor import linalg
from qgtensor.errors import CriticalRegionError, LatticeError, SingularPointError
from qgtensor.models import HamiltonianFamily, ParameterPoint, constant_family, doubled_qwz_family, qwz_family
from qgtensor.qgt import Frame, GridSpec, Subspace, eigenframe, frame_grid, qgt_grid
from qgtensor.topology import (
    chern_direct,
    chern_lattice,
    link_variable,
    small_loop_check,
    small_loop_holonomy,
    square_loop,
    wilson_loop,
)
from qgtensor.validate import random_gauge

from conftest import qwz_matrix, random_unitary

# Berry phase of the lower band along kx at ky=0.7, m=1: -Arg of the product of
# 2000 numpy-eigh overlaps around the circle
BERRY_PHASE_KY07 = 0.19966142406765858

QWZ = qwz_family()
DOUBLED = doubled_qwz_family()


def kx_circle(ky, m, segments):
    return [ParameterPoint((x, ky), (m,)) for x in np.linspace(0.0, 2 * np.pi, segments + 1)]


class TestChernDirect:
    @pytest.mark.parametrize("m, expected", [(1.0, -1), (3.0, 0), (-1.0, 1), (-3.0, 0)])
    def test_phase_diagram(self, m, expected):
        c = chern_direct(qgt_grid(QWZ, GridSpec(64, 64), Subspace(0, 1), (m,)))
        assert c.value == pytest.approx(expected, abs=0.02)
        assert c.deviation < 0.02 and c.method == "direct"

    def test_constant_family_exactly_zero(self):
        assert chern_direct(qgt_grid(constant_family(), GridSpec(8, 8), Subspace(0, 1), (0.0,))).value == 0.0

    def test_critical_region(self):
        with pytest.warns(Warning):
            fg = qgt_grid(QWZ, GridSpec(4, 4), Subspace(0, 1), (0.0,))
        with pytest.raises(CriticalRegionError):
            chern_direct(fg)

    def test_few_singular_cells_skipped(self):
        c = chern_direct(qgt_grid(QWZ, GridSpec(32, 32), Subspace(0, 1), (2.0,)))
        assert c.singular_cells == 1 and math.isfinite(c.value)

    def test_needs_qgt_field(self):
        with pytest.raises(ValueError):
            chern_direct(frame_grid(QWZ, GridSpec(8, 8), Subspace(0, 1), (1.0,)))

    def test_doubled_total_chern(self):
        c = chern_direct(qgt_grid(DOUBLED, GridSpec(48, 48), Subspace(0, 2), (1.0,)))
        assert c.value == pytest.approx(-2, abs=0.02)


class TestLinkVariable:
    def test_same_frame(self):
        f = eigenframe(DOUBLED, ParameterPoint((1.0, 0.5), (1.0,)), Subspace(0, 2))
        assert link_variable(f, f) == pytest.approx(1.0)

    def test_pure_gauge(self):
        f = eigenframe(DOUBLED, ParameterPoint((1.0, 0.5), (1.0,)), Subspace(0, 2))
        w = random_unitary(np.random.default_rng(4), 2)
        det = np.linalg.det(w)
        assert link_variable(f, f.rotated(w)) == pytest.approx(det / abs(det))

    def test_vanishing_overlap(self):
        a = Frame(np.array([[1], [0]], dtype=complex), ParameterPoint((0.0, 0.0)))
        b = Frame(np.array([[0], [1]], dtype=complex), ParameterPoint((0.0, 0.0)))
        with pytest.raises(LatticeError):
            link_variable(a, b)

    @given(st.integers(0, 2**32 - 1))
    def test_unimodular(self, seed):
        rng = np.random.default_rng(seed)
        a = random_unitary(rng, 4)[:, :2]
        b = random_unitary(rng, 4)[:, :2]
        assert abs(link_variable(a, b)) == pytest.approx(1.0, abs=1e-12)


class TestChernLattice:
    @pytest.mark.parametrize("m, expected", [(-1.0, 1), (1.0, -1), (3.0, 0), (-3.0, 0)])
    def test_phase_diagram_exact(self, m, expected):
        c = chern_lattice(frame_grid(QWZ, GridSpec(24, 24), Subspace(0, 1), (m,)))
        assert c.value == expected and isinstance(c.value, int)

    @pytest.mark.parametrize("m", [-2.5, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.5, 3.0])
    def test_additivity(self, m):
        single = chern_lattice(frame_grid(QWZ, GridSpec(24, 24), Subspace(0, 1), (m,))).value
        double = chern_lattice(frame_grid(DOUBLED, GridSpec(24, 24), Subspace(0, 2), (m,))).value
        assert double == 2 * single

    def test_singular_cells_rejected(self):
        with pytest.raises(CriticalRegionError):
            chern_lattice(frame_grid(QWZ, GridSpec(24, 24), Subspace(0, 1), (2.0,)))

    def test_needs_frame_field(self):
        with pytest.raises(ValueError):
            chern_lattice(qgt_grid(QWZ, GridSpec(8, 8), Subspace(0, 1), (1.0,)))

    @pytest.mark.parametrize("m", [-1.0, 1.0, 3.0])
    def test_method_agreement(self, m):
        direct = chern_direct(qgt_grid(QWZ, GridSpec(64, 64), Subspace(0, 1), (m,))).value
        lattice = chern_lattice(frame_grid(QWZ, GridSpec(64, 64), Subspace(0, 1), (m,))).value
        assert abs(direct - lattice) < 0.05

    def test_orientation_reversal_flips_sign(self):
        mirrored = HamiltonianFamily(
            "mirrored", 2, 2, 1, lambda k, e: QWZ.hamiltonian(k * np.array([1.0, -1.0]), e)
        )
        c = chern_lattice(frame_grid(QWZ, GridSpec(24, 24), Subspace(0, 1), (1.0,))).value
        cm = chern_lattice(frame_grid(mirrored, GridSpec(24, 24), Subspace(0, 1), (1.0,))).value
        assert cm == -c

    @given(st.integers(0, 1000), st.sampled_from([-1.0, 1.0, 3.0]))
    def test_gauge_invariance_bit_identical(self, seed, m):
        grid = GridSpec(12, 12)
        a = chern_lattice(frame_grid(DOUBLED, grid, Subspace(0, 2), (m,)))
        b = chern_lattice(frame_grid(DOUBLED, grid, Subspace(0, 2), (m,), gauge=random_gauge(seed)))
        assert a.value == b.value


class TestWilsonLoop:
    def test_identical_points(self):
        p = ParameterPoint((1.0, 0.5), (1.0,))
        w = wilson_loop(DOUBLED, [p, p, p], Subspace(0, 2))
        np.testing.assert_allclose(w.unitary, np.eye(2), atol=1e-14)
        assert w.closed

    def test_backtracking(self):
        a = ParameterPoint((1.0, 0.5), (1.0,))
        b = ParameterPoint((1.3, 0.9), (1.2,))
        for fam, sub in ((QWZ, Subspace(0, 1)), (DOUBLED, Subspace(0, 2))):
            w = wilson_loop(fam, [a, b, a], sub).unitary
            assert linalg.fro_norm(w - np.eye(sub.n)) < 1e-10

    def test_berry_phase_frozen(self):
        w = wilson_loop(QWZ, kx_circle(0.7, 1.0, 2000), Subspace(0, 1))
        assert w.berry_phase == pytest.approx(BERRY_PHASE_KY07, abs=1e-8)

    @pytest.mark.parametrize("ky", [0.3, 2.0, 4.4])
    def test_berry_phase_link_oracle(self, ky):
        xs = np.linspace(0.0, 2 * np.pi, 501)[:-1]
        vs = [np.linalg.eigh(qwz_matrix(x, ky, 1.0))[1][:, 0] for x in xs]
        prod = np.prod([np.vdot(vs[i], vs[(i + 1) % len(vs)]) for i in range(len(vs))])
        w = wilson_loop(QWZ, kx_circle(ky, 1.0, 500), Subspace(0, 1))
        assert w.berry_phase == pytest.approx(-np.angle(prod), abs=1e-8)

    def test_unitarity_long_path(self):
        w = wilson_loop(DOUBLED, kx_circle(0.7, 1.0, 10_000), Subspace(0, 2))
        assert w.unitarity_error() < 1e-8

    def test_reversal_conjugates(self):
        path = square_loop(ParameterPoint((1.0, 0.5), (1.0,)), 0.3)
        fwd = wilson_loop(DOUBLED, path, Subspace(0, 2)).unitary
        rev = wilson_loop(DOUBLED, path[::-1], Subspace(0, 2)).unitary
        np.testing.assert_allclose(rev, fwd.conj().T, atol=1e-12)

    def test_singular_point_reported(self):
        path = [ParameterPoint((x, math.pi), (2.0,)) for x in (3.0, math.pi, 3.3)]
        with pytest.raises(SingularPointError) as info:
            wilson_loop(QWZ, path, Subspace(0, 1))
        assert info.value.point == path[1]

    def test_too_short(self):
        p = ParameterPoint((1.0, 0.5), (1.0,))
        with pytest.raises(ValueError):
            wilson_loop(QWZ, [p, p], Subspace(0, 1))


class TestSmallLoop:
    def test_square_loop_geometry(self):
        c = ParameterPoint((1.0, 0.5), (1.0,))
        path = square_loop(c, 0.2, (0, 2), points_per_side=4)
        assert path[0] == c and path[-1] == c
        coords = np.array([p.coords for p in path])
        assert np.max(coords[:, 0]) == pytest.approx(1.1) and np.min(coords[:, 2]) == pytest.approx(0.9)
        np.testing.assert_allclose(coords[:, 1], 0.5)

    def test_constant_family(self):
        c = ParameterPoint((1.0, 0.5), (1.0,))
        for side in (1e-1, 1e-2):
            assert small_loop_check(constant_family(), c, Subspace(0, 1), side) == 0.0

    @pytest.mark.parametrize("center", [(1.0, 0.5), (2.0, 4.0), (0.3, 2.5)])
    def test_first_order_convergence(self, center):
        c = ParameterPoint(center, (1.0,))
        sides = [1e-1, 1e-2, 1e-3]
        res = [small_loop_check(QWZ, c, Subspace(0, 1), s) for s in sides]
        assert res[0] > res[1] > res[2]
        assert np.polyfit(np.log(sides), np.log(res), 1)[0] >= 0.9

    def test_halving_side_quarters_leading_term(self):
        c = ParameterPoint((1.0, 0.5), (1.0,))
        w1, _, _ = small_loop_holonomy(QWZ, c, Subspace(0, 1), 0.02)
        w2, _, _ = small_loop_holonomy(QWZ, c, Subspace(0, 1), 0.01)
        ratio = linalg.fro_norm(w1 - np.eye(1)) / linalg.fro_norm(w2 - np.eye(1))
        assert ratio == pytest.approx(4.0, rel=0.01)

    def test_non_abelian_and_external_plane(self):
        c = ParameterPoint((1.0, 0.5), (1.0,))
        for plane in ((0, 1), (0, 2), (1, 2)):
            res = [small_loop_check(DOUBLED, c, Subspace(0, 2), s, plane) for s in (1e-1, 1e-2)]
            assert res[1] < res[0] / 10

    def test_orientation_sign(self):
        c = ParameterPoint((1.0, 0.5), (1.0,))
        w, f, area = small_loop_holonomy(QWZ, c, Subspace(0, 1), 1e-2)
        assert ((w[0, 0] - 1) / area).imag == pytest.approx(f[0, 0].real, rel=1e-3)
