"""Frozen expected values for the closed-form reference solutions.

These constants were derived by hand before any numerics existed; the grid
pipeline is validated against them, so they must never be edited to make a
failing run pass.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from atwflow import oracles as orc


class TestCrossSet:
    def test_initial_polygon(self):
        poly = orc.cross_set(0.0)
        assert poly.shape == (12, 2)
        assert_allclose(np.max(poly), 2.0)
        assert_allclose(np.min(poly), -2.0)
        # counterclockwise orientation: twice the signed area is positive
        x, y = poly[:, 0], poly[:, 1]
        area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert_allclose(area2, 2.0 * 12.0)

    def test_square_at_phase_change(self):
        poly = orc.cross_set(1.0)
        assert poly.shape == (4, 2)
        assert_allclose(np.sort(np.abs(poly).ravel()), np.ones(8))

    def test_empty_after_extinction(self):
        assert orc.cross_set(2.0).shape == (0, 2)
        assert orc.cross_set(orc.cross_extinction() + 1e-9).shape == (0, 2)

    def test_volumes(self):
        assert_allclose(orc.cross_volume(0.0), 12.0)
        assert_allclose(orc.cross_volume(0.5), 8.0)
        assert_allclose(orc.cross_volume(1.0), 4.0)
        assert_allclose(orc.cross_volume(1.25), 4.0 * (1.0 - 2.0 * 0.25))
        assert orc.cross_volume(1.75) == 0.0

    def test_perimeters(self):
        assert_allclose(orc.cross_perimeter_l1(0.0), 16.0)
        assert_allclose(orc.cross_perimeter_l1(1.0), 8.0)
        assert_allclose(orc.cross_perimeter_l1(1.25), 8.0 * math.sqrt(0.5))

    def test_extinction_time(self):
        assert_allclose(orc.cross_extinction(), 1.5)

    def test_monotone_nesting(self):
        pts = np.random.default_rng(7).uniform(-2.2, 2.2, size=(500, 2))
        prev = orc.cross_contains(pts, 0.0)
        for t in [0.3, 0.7, 1.0, 1.2, 1.4, 1.49]:
            cur = orc.cross_contains(pts, t)
            assert not np.any(cur & ~prev)
            prev = cur


class TestCrossArrival:
    def test_frozen_values(self):
        assert_allclose(orc.cross_arrival(0.0, 0.0), 1.5)
        assert_allclose(orc.cross_arrival(0.0, 1.5), 0.5)
        assert orc.cross_arrival(1.9, 1.9) == 0.0
        assert_allclose(orc.cross_arrival(0.3, 0.9), 1.0 + 0.5 * (1.0 - 0.81))
        assert_allclose(orc.cross_arrival(1.0, 0.0), 1.5 - 0.5)  # core boundary
        assert orc.cross_arrival(2.5, 0.5) == 0.0

    def test_inverts_the_set_evolution(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-2.3, 2.3, size=(2000, 2))
        u = orc.cross_arrival(pts[:, 0], pts[:, 1])
        # u vanishes outside the initial set, so {u >= t} matches only for t > 0
        for t in [0.2, 0.9, 1.0, 1.3, 1.5]:
            inside = orc.cross_contains(pts, t)
            np.testing.assert_array_equal(inside, u >= t)
        assert np.all(orc.cross_contains(pts, 0.0) | (u == 0.0))

    def test_vectorized_matches_scalar(self):
        xs = np.linspace(-2.4, 2.4, 37)
        ys = np.linspace(-2.4, 2.4, 41)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        U = orc.cross_arrival(X, Y)
        for i in (0, 11, 36):
            for j in (0, 17, 40):
                assert U[i, j] == orc.cross_arrival(float(xs[i]), float(ys[j]))


class TestCalibration:
    def test_paper_sample_points(self):
        z, div = orc.calibration_field(np.array([[0.5, 0.5], [0.5, 1.5], [1.5, 0.5]]))
        assert_allclose(z[0], [0.5, 0.5])
        assert_allclose(div[0], 2.0)
        assert_allclose(z[1], [0.5, 1.0])
        assert_allclose(div[1], 1.0)
        assert_allclose(z[2], [1.0, 0.5])
        assert_allclose(div[2], 1.0)

    def test_thousand_point_report(self):
        rng = np.random.default_rng(11)
        pts = []
        while len(pts) < 1000:
            cand = rng.uniform(-2.0, 2.0, size=(4000, 2))
            keep = orc.cross_contains(cand, 0.0)
            pts.extend(cand[keep].tolist())
        pts = np.array(pts[:1000])
        rep = orc.calibration_check(pts)
        assert rep["n_points"] == 1000
        assert rep["div_exact"]
        assert rep["max_dual_eval"] <= 1.0 + 1e-12
        assert rep["passed"]

    def test_rejects_outside_points(self):
        with pytest.raises(ValueError):
            orc.calibration_check(np.array([[1.9, 1.9]]))


class TestRadialSolutions:
    def test_shrinking_ball_values(self):
        assert_allclose(orc.shrinking_ball(1.0, 0.375, dim=2), 0.5)
        assert_allclose(orc.shrinking_ball(1.0, 0.0, dim=2), 1.0)
        assert orc.shrinking_ball(1.0, orc.ball_extinction(1.0, 2), dim=2) == 0.0
        assert_allclose(orc.ball_extinction(1.0, dim=2), 0.5)
        assert_allclose(orc.ball_extinction(1.0, dim=3), 0.25)

    def test_ball_ode_residual(self):
        # finite-difference check of r' = -(dim-1)/r on the closed form
        for dim in (2, 3):
            t = np.linspace(0.0, 0.1, 100)
            r = orc.shrinking_ball(1.0, t, dim=dim)
            drdt = np.gradient(r, t)
            assert_allclose(drdt[1:-1], -(dim - 1) / r[1:-1], rtol=1e-3)

    def test_square_law(self):
        assert_allclose(orc.shrinking_square_l1(1.0, 0.375), 0.5)
        assert_allclose(orc.square_extinction(1.0), 0.5)
        assert orc.shrinking_square_l1(1.0, 0.6) == 0.0

    def test_step_radius_frozen(self):
        # largest root of r = R - h/r for R=1, h=1/64
        assert_allclose(orc.step_radius(1.0, 1.0 / 64.0), 0.9841229182759271)
        assert orc.step_radius(0.1, 1.0 / 64.0) == 0.0  # below the step threshold
        r = orc.radius_sequence(1.0, 1.0 / 64.0, 40)
        assert r[0] == 1.0
        assert np.all(np.diff(r) <= 0)

    def test_radius_sequence_tracks_ode(self):
        h = 1.0 / 256.0
        r = orc.radius_sequence(1.0, h, 64)
        t = h * np.arange(65)
        exact = orc.shrinking_ball(1.0, t, dim=2)
        assert np.max(np.abs(r - exact)) < 2.0 * h

    def test_disk_bv_energy(self):
        assert_allclose(orc.disk_bv_energy(1.0), 2.0 * math.pi / 3.0)


class TestDiskFamily:
    def test_arrival_frozen_values(self):
        centers = np.array([[0.0, 0.0], [0.5, 0.0]])
        radii = np.array([0.2, 0.1])
        assert_allclose(orc.disk_family_arrival([[0.0, 0.0]], centers, radii), 0.02)
        assert_allclose(orc.disk_family_arrival([[0.5, 0.0]], centers, radii), 0.005)
        assert_allclose(
            orc.disk_family_arrival([[0.1, 0.0]], centers, radii),
            3.0 * 0.2 ** 2 / 8.0,
        )
        assert orc.disk_family_arrival([[0.9, 0.9]], centers, radii) == 0.0

    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            orc.disk_family_arrival(
                [[0.0, 0.0]], np.array([[0.0, 0.0], [0.1, 0.0]]), np.array([0.2, 0.2])
            )

    def test_paraboloid_second_differences(self):
        centers = np.array([[0.0, 0.0]])
        radii = np.array([0.5])
        xs = np.linspace(-0.3, 0.3, 61)
        u = orc.disk_family_arrival(
            np.stack([xs, np.zeros_like(xs)], axis=1), centers, radii
        )
        d2 = np.diff(u, 2) / (xs[1] - xs[0]) ** 2
        assert_allclose(d2, -1.0, atol=1e-9)

    def test_generator_constants_and_bounds(self):
        centers, radii, delta = orc.disk_family_generate(6, seed=4)
        assert delta == 0.5
        assert len(radii) == 6
        assert np.all(radii > 0.0)
        # pairwise disjoint with positive gaps
        for i in range(6):
            for j in range(i + 1, 6):
                gap = np.linalg.norm(centers[i] - centers[j]) - radii[i] - radii[j]
                assert gap > 0.0
        # contained in the unit domain
        assert np.all(np.hypot(centers[:, 0], centers[:, 1]) + radii < 1.0)
        # decaying radii: r_{n+1} < 2^{-n}
        for n in range(1, 6):
            assert radii[n] < 2.0 ** (-n)

    def test_generator_damping_rule(self):
        centers, radii, delta = orc.disk_family_generate(4, seed=12)
        C = max(18.0 / (math.pi - 2.0), 1.5 * (2.0 * delta + 9.0))
        assert_allclose(C, 18.0 / (math.pi - 2.0))
        for n in range(1, 4):
            prev_c, prev_r = centers[:n], radii[:n]
            d_n = min(
                np.linalg.norm(centers[n] - c) - r for c, r in zip(prev_c, prev_r)
            )
            bound = min(
                0.5 * (1.0 / n - 1.0 / (n + 1)) * delta * d_n * d_n / (2.0 * math.pi * C),
                d_n / 6.0,
            )
            assert radii[n] <= bound + 1e-15

    def test_generator_deterministic(self):
        a = orc.disk_family_generate(5, seed=9)
        b = orc.disk_family_generate(5, seed=9)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestOracleFactory:
    def test_cross_wrapper(self):
        o = orc.oracle_for("cross", L=2.0)
        assert_allclose(o.volume_at(0.0), 12.0)
        assert_allclose(o.extinction_time(), 1.5)
        assert o.contains(np.array([[0.0, 1.8]]), 0.0)[0]
        assert not o.contains(np.array([[0.0, 1.8]]), 0.5)[0]
        assert_allclose(o.arrival(np.array([[0.0, 1.5]]))[0], 0.5)

    def test_ball_wrapper(self):
        o = orc.oracle_for("shrinking_ball", R0=1.0, dim=2)
        assert_allclose(o.volume_at(0.0), math.pi)
        assert_allclose(o.perimeter_at(0.375), 2.0 * math.pi * 0.5)
        assert_allclose(o.arrival(np.array([[0.0, 0.0]]))[0], 0.5)

    def test_family_wrapper(self):
        centers = np.array([[0.0, 0.0], [0.6, 0.0]])
        radii = np.array([0.2, 0.15])
        o = orc.oracle_for("disk_family", centers=centers, radii=radii)
        assert_allclose(o.extinction_time(), 0.02)
        assert o.contains(np.array([[0.6, 0.0]]), 0.0)[0]
        assert_allclose(o.volume_at(0.0), math.pi * (0.04 + 0.0225))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            orc.oracle_for("torus")
