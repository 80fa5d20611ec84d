"""Discrete calculus, perimeters, shapes, contours and raster IO."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from atwflow import grid_fields as gf
from atwflow.anisotropy import Anisotropy


def square_domain(half_extent, cells):
    return gf.GridDomain(
        (-half_extent, -half_extent), (2 * half_extent, 2 * half_extent), (cells, cells)
    )


def hexagon_gauge():
    ang = np.linspace(0.0, 2.0 * np.pi, 7)[:-1]
    return Anisotropy.polyhedral(np.stack([np.cos(ang), np.sin(ang)], axis=1))


CROSS_DOM = gf.GridDomain((-2.5625, -2.5625), (5.125, 5.125), (656, 656))  # spacing 1/128


class TestDomain:
    def test_spacing_and_volume(self):
        dom = gf.GridDomain((0.0, 0.0), (2.0, 4.0), (10, 20))
        assert_allclose(dom.spacing, [0.2, 0.2])
        assert_allclose(dom.cell_volume, 0.04)
        assert_allclose(dom.axis_centers(0)[0], 0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            gf.GridDomain((0.0,), (1.0,), (8,))
        with pytest.raises(ValueError):
            gf.GridDomain((0.0, 0.0), (1.0, 1.0), (3, 8))
        with pytest.raises(ValueError):
            gf.GridDomain((0.0, 0.0), (1.0, -1.0), (8, 8))

    def test_subdomain_shares_lattice(self):
        dom = square_domain(1.0, 32)
        sub = dom.subdomain((4, 8), (20, 24))
        assert sub.cells == (16, 16)
        assert_allclose(sub.spacing, dom.spacing)
        assert_allclose(sub.axis_centers(0), dom.axis_centers(0)[4:20])
        assert_allclose(sub.axis_centers(1), dom.axis_centers(1)[8:24])

    def test_frame_rejection(self):
        dom = square_domain(1.0, 16)
        mask = np.zeros((16, 16), dtype=bool)
        mask[1, 8] = True
        with pytest.raises(gf.FrameViolation):
            gf.IndicatorField(dom, mask)


class TestGradDiv:
    def test_constant_gives_zero(self):
        dom = square_domain(1.0, 16)
        f = gf.ScalarField(dom, np.full(dom.shape, 3.7))
        assert np.all(gf.grad_forward(f).vectors == 0.0)

    def test_linear_gives_unit_vector(self):
        dom = square_domain(1.0, 32)
        f = gf.ScalarField.from_function(dom, lambda x, y: x)
        g = gf.grad_forward(f).vectors
        assert_allclose(g[:-1, :, 0], 1.0)
        assert_allclose(g[:, :, 1], 0.0)
        assert_allclose(g[-1, :, 0], 0.0)  # one-sided closure at the top

    def test_adjointness_identity(self):
        rng = np.random.default_rng(0)
        for cells in [(8, 8), (13, 7), (6, 5, 9)]:
            dom = gf.GridDomain((0.0,) * len(cells), tuple(0.3 * c for c in cells), cells)
            f = rng.normal(size=cells)
            p = rng.normal(size=cells + (len(cells),))
            g = gf.grad_forward_array(f, dom.spacing)
            d = gf.div_backward_array(p, dom.spacing)
            lhs = float((g * p).sum())
            rhs = -float((f * d).sum())
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_laplacian_of_quadratic(self):
        dom = gf.GridDomain((-1.0, -1.0), (2.0, 2.0), (64, 64))
        f = gf.ScalarField.from_function(dom, lambda x, y: x * x)
        lap = gf.div_backward(gf.grad_forward(f)).values
        assert_allclose(lap[2:-2, 2:-2], 2.0, rtol=1e-9)

    def test_zero_vector_field(self):
        dom = square_domain(1.0, 8)
        assert np.all(gf.div_backward(gf.VectorField.zeros(dom)).values == 0.0)


class TestVolume:
    def test_empty(self):
        dom = square_domain(1.0, 8)
        assert gf.volume(gf.IndicatorField.empty(dom)) == 0.0

    def test_cross_area(self):
        e = gf.shape("cross", CROSS_DOM, arm_length=2.0)
        spacing = CROSS_DOM.spacing[0]
        assert abs(gf.volume(e) - 12.0) <= 4.0 * 16.0 * spacing

    def test_full_box_minus_frame(self):
        dom = gf.GridDomain((0.0, 0.0), (1.0, 2.0), (10, 20))
        mask = np.zeros(dom.shape, dtype=bool)
        mask[2:-2, 2:-2] = True
        e = gf.IndicatorField(dom, mask)
        assert_allclose(gf.volume(e), (10 - 4) * (20 - 4) * dom.cell_volume)

    def test_modularity_exact(self):
        dom = square_domain(1.0, 40)
        rng = np.random.default_rng(1)
        for _ in range(5):
            a = gf.shape("ball", dom, radius=0.4, center=rng.uniform(-0.2, 0.2, 2))
            b = gf.shape("ball", dom, radius=0.3, center=rng.uniform(-0.2, 0.2, 2))
            union = gf.IndicatorField(dom, a.membership | b.membership)
            inter = gf.IndicatorField(dom, a.membership & b.membership)
            # exact identity at the cell-count level; products only add rounding
            assert union.count() + inter.count() == a.count() + b.count()
            assert_allclose(
                gf.volume(union) + gf.volume(inter),
                gf.volume(a) + gf.volume(b),
                rtol=1e-15,
            )


class TestPerimeter:
    def test_l1_square_exact(self):
        dom = square_domain(1.6, 64)  # spacing 0.05, centers avoid the boundary
        e = gf.shape("rectangle", dom, lo=(-1.0, -1.0), hi=(1.0, 1.0))
        l1 = Anisotropy.weighted_l1([1.0, 1.0])
        assert_allclose(gf.perimeter_phi(e, l1), 8.0, rtol=0.0, atol=1e-10)

    def test_l1_cross_near_exact(self):
        e = gf.shape("cross", CROSS_DOM, arm_length=2.0)
        l1 = Anisotropy.weighted_l1([1.0, 1.0])
        spacing = CROSS_DOM.spacing[0]
        assert abs(gf.perimeter_phi(e, l1) - 16.0) <= 8.0 * spacing

    def test_empty_zero(self):
        dom = square_domain(1.0, 8)
        assert gf.perimeter_phi(gf.IndicatorField.empty(dom), Anisotropy.euclidean(2)) == 0.0

    def test_submodularity(self):
        dom = square_domain(1.0, 48)
        rng = np.random.default_rng(2)
        gauges = [
            Anisotropy.weighted_l1([1.0, 1.0]),
            Anisotropy.euclidean(2),
            hexagon_gauge(),
            Anisotropy.l_infinity([1.0, 0.7]),
        ]
        for _ in range(8):
            a = gf.shape("ball", dom, radius=rng.uniform(0.2, 0.5), center=rng.uniform(-0.3, 0.3, 2))
            b = gf.shape("ball", dom, radius=rng.uniform(0.2, 0.5), center=rng.uniform(-0.3, 0.3, 2))
            union = gf.IndicatorField(dom, a.membership | b.membership)
            inter = gf.IndicatorField(dom, a.membership & b.membership)
            for phi in gauges:
                lhs = gf.perimeter_phi(union, phi) + gf.perimeter_phi(inter, phi)
                rhs = gf.perimeter_phi(a, phi) + gf.perimeter_phi(b, phi)
                assert lhs <= rhs + 1e-8

    def test_coarea_on_separated_levels(self):
        # u piecewise constant over nested shapes with boundaries several
        # cells apart: the TV of u must equal the weighted perimeter sum
        dom = square_domain(1.0, 64)
        radii = [0.8, 0.55, 0.3]
        levels = [0.5, 1.25, 2.0]
        u = np.zeros(dom.shape)
        sets = []
        for r, t in zip(radii, levels):
            e = gf.shape("ball", dom, radius=r)
            sets.append(e)
            u[e.membership] = t
        for phi in [Anisotropy.weighted_l1([1.0, 1.0]), Anisotropy.euclidean(2), hexagon_gauge()]:
            tv = gf.total_variation_phi(u, dom.spacing, phi)
            prev = 0.0
            acc = 0.0
            for e, t in zip(sets, levels):
                acc += (t - prev) * gf.perimeter_phi(e, phi)
                prev = t
            assert abs(tv - acc) <= 1e-8 * max(1.0, acc)


class TestShapes:
    def test_cross_matches_polygon_membership(self):
        e = gf.shape("cross", CROSS_DOM, arm_length=2.0)
        x, y = CROSS_DOM.center_mesh()
        expected = ((np.abs(x) <= 1.0) & (np.abs(y) <= 2.0)) | (
            (np.abs(y) <= 1.0) & (np.abs(x) <= 2.0)
        )
        np.testing.assert_array_equal(e.membership, expected)

    def test_zero_radius_ball_empty(self):
        dom = square_domain(1.0, 32)
        assert gf.shape("ball", dom, radius=0.0).is_empty()

    def test_wulff_of_l1_is_square(self):
        dom = square_domain(1.6, 64)
        l1 = Anisotropy.weighted_l1([1.0, 1.0])
        w = gf.shape("wulff", dom, phi=l1, radius=1.0)
        sq = gf.shape("rectangle", dom, lo=(-1.0, -1.0), hi=(1.0, 1.0))
        np.testing.assert_array_equal(w.membership, sq.membership)

    def test_wulff_matches_dual_ball_cell_by_cell(self):
        dom = square_domain(1.6, 48)
        phi = hexagon_gauge()
        w = gf.shape("wulff", dom, phi=phi, radius=1.2)
        pts = dom.center_points()
        expected = (phi.dual_eval_many(pts) <= 1.2).reshape(dom.shape)
        np.testing.assert_array_equal(w.membership, expected)

    def test_disk_union(self):
        dom = square_domain(1.0, 64)
        e = gf.shape(
            "disk-union", dom, centers=[[-0.4, 0.0], [0.4, 0.0]], radii=[0.25, 0.25]
        )
        single = gf.shape("ball", dom, radius=0.25, center=[-0.4, 0.0])
        assert e.count() == 2 * single.count()  # disjoint congruent disks

    def test_shape_touching_frame_rejected(self):
        dom = square_domain(1.0, 32)
        with pytest.raises(gf.FrameViolation):
            gf.shape("ball", dom, radius=0.99)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            gf.shape("pentagon", square_domain(1.0, 16))


class TestContours:
    def test_single_cell(self):
        dom = square_domain(1.0, 16)
        mask = np.zeros(dom.shape, dtype=bool)
        mask[8, 8] = True
        loops = gf.contour_extract(gf.IndicatorField(dom, mask))
        assert len(loops) == 1
        assert loops[0].shape == (5, 2)  # 4 segments, closed
        assert_allclose(loops[0][0], loops[0][-1])

    def test_empty(self):
        dom = square_domain(1.0, 16)
        assert gf.contour_extract(gf.IndicatorField.empty(dom)) == []

    def test_ball_circumference(self):
        r = 0.5
        dom = square_domain(1.0, 100)  # spacing 0.02 = r/25
        dom = gf.GridDomain((-1.0, -1.0), (2.0, 2.0), (100, 100))
        e = gf.shape("ball", dom, radius=r)
        loops = gf.contour_extract(e)
        assert len(loops) == 1
        seglen = np.hypot(*np.diff(loops[0], axis=0).T).sum()
        assert abs(seglen - 2.0 * np.pi * r) <= 0.1 * 2.0 * np.pi * r

    def test_two_components(self):
        dom = square_domain(1.0, 64)
        e = gf.shape(
            "disk-union", dom, centers=[[-0.4, 0.0], [0.4, 0.0]], radii=[0.2, 0.2]
        )
        assert len(gf.contour_extract(e)) == 2

    def test_saddle_disconnects(self):
        dom = square_domain(1.0, 16)
        mask = np.zeros(dom.shape, dtype=bool)
        mask[7, 7] = True
        mask[8, 8] = True
        loops = gf.contour_extract(gf.IndicatorField(dom, mask))
        assert len(loops) == 2


class TestRasterIO:
    def test_round_trip_scalar(self, tmp_path):
        dom = gf.GridDomain((0.0, 0.0), (1.0, 2.0), (12, 24))
        f = gf.ScalarField.from_function(dom, lambda x, y: np.sin(x) + y)
        path = tmp_path / "field.atwf"
        gf.save_raster(path, f)
        values, spacing = gf.load_raster(path)
        np.testing.assert_array_equal(values, f.values)
        assert_allclose(spacing, dom.spacing, rtol=1e-7)

    def test_round_trip_indicator(self, tmp_path):
        dom = gf.GridDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (8, 9, 10))
        rng = np.random.default_rng(3)
        mask = np.zeros(dom.shape, dtype=bool)
        mask[3:-3, 3:-3, 3:-3] = rng.random((2, 3, 4)) > 0.5
        e = gf.IndicatorField(dom, mask)
        path = tmp_path / "set.atwf"
        gf.save_raster(path, e)
        values, _ = gf.load_raster(path)
        np.testing.assert_array_equal(values > 0.5, mask)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"JUNK" + b"\x00" * 60)
        with pytest.raises(ValueError, match="magic"):
            gf.load_raster(p)

    def test_header_is_32_bytes_and_deterministic(self, tmp_path):
        dom = square_domain(1.0, 8)
        f = gf.ScalarField(dom, np.zeros(dom.shape))
        p1, p2 = tmp_path / "a.atwf", tmp_path / "b.atwf"
        gf.save_raster(p1, f)
        gf.save_raster(p2, f)
        b1, b2 = p1.read_bytes(), p2.read_bytes()
        assert b1 == b2
        assert b1[:4] == b"ATWF"
        assert len(b1) == 32 + 8 * 64

    def test_pgm_export(self, tmp_path):
        dom = square_domain(1.0, 8)
        f = gf.ScalarField.from_function(dom, lambda x, y: x)
        path = tmp_path / "field.pgm"
        gf.save_pgm(path, f)
        lines = path.read_text().splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "8 8"
        assert len(lines) == 3 + 8
