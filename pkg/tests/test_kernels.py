"""Backend parity: the numba kernels must reproduce the numpy reference."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from atwflow import _kernels
from atwflow.distance_transform import OFFSETS_2D, OFFSETS_3D

numba_available = True
try:
    import numba  # noqa: F401
except ImportError:
    numba_available = False

needs_numba = pytest.mark.skipif(not numba_available, reason="numba not installed")


@pytest.fixture
def restore_backend():
    prev = _kernels.select_backend("auto")
    yield
    _kernels.select_backend(prev)


def random_seed_field(shape, n_sources, rng):
    dist = np.full(shape, np.inf)
    idx = tuple(rng.integers(0, s, n_sources) for s in shape)
    dist[idx] = 0.0
    return dist


def test_select_backend_roundtrip(restore_backend):
    _kernels.select_backend("numpy")
    assert _kernels.backend_name() == "numpy"
    prev = _kernels.select_backend("auto")
    assert prev == "numpy"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _kernels.select_backend("fortran")


class TestChamferParity:
    @needs_numba
    def test_2d(self, restore_backend):
        rng = np.random.default_rng(3)
        w = 0.02 * np.sqrt((OFFSETS_2D.astype(float) ** 2).sum(axis=1))
        for _ in range(4):
            seed = random_seed_field((40, 37), 5, rng)
            _kernels.select_backend("numpy")
            a = seed.copy()
            _kernels.get_backend().chamfer_fixpoint_2d(a, OFFSETS_2D, w)
            _kernels.select_backend("numba")
            b = seed.copy()
            _kernels.get_backend().chamfer_fixpoint_2d(b, OFFSETS_2D, w)
            assert_allclose(a, b, rtol=0.0, atol=1e-12)

    @needs_numba
    def test_3d(self, restore_backend):
        rng = np.random.default_rng(5)
        w = 0.05 * np.sqrt((OFFSETS_3D.astype(float) ** 2).sum(axis=1))
        seed = random_seed_field((14, 12, 15), 4, rng)
        _kernels.select_backend("numpy")
        a = seed.copy()
        _kernels.get_backend().chamfer_fixpoint_3d(a, OFFSETS_3D, w)
        _kernels.select_backend("numba")
        b = seed.copy()
        _kernels.get_backend().chamfer_fixpoint_3d(b, OFFSETS_3D, w)
        assert_allclose(a, b, rtol=0.0, atol=1e-12)

    def test_fixpoint_is_stable(self, restore_backend):
        rng = np.random.default_rng(7)
        w = 0.02 * np.sqrt((OFFSETS_2D.astype(float) ** 2).sum(axis=1))
        seed = random_seed_field((30, 30), 3, rng)
        _kernels.select_backend("numpy")
        a = seed.copy()
        _kernels.get_backend().chamfer_fixpoint_2d(a, OFFSETS_2D, w)
        b = a.copy()
        _kernels.get_backend().chamfer_fixpoint_2d(b, OFFSETS_2D, w)
        np.testing.assert_array_equal(a, b)


class TestCpChunkParity:
    def _problem(self, rng, shape=(32, 32)):
        x = np.linspace(-1, 1, shape[0])[:, None]
        y = np.linspace(-1, 1, shape[1])[None, :]
        d = np.hypot(x, y) - 0.5 + 0.05 * rng.standard_normal(shape)
        spacing = np.array([2.0 / shape[0], 2.0 / shape[1]])
        L2 = 4.0 * float((1.0 / spacing**2).sum())
        tau = sigma = 1.0 / np.sqrt(L2)
        return d, spacing, tau, sigma

    def _run(self, backend, d, spacing, tau, sigma, kind, arg):
        _kernels.select_backend(backend)
        be = _kernels.get_backend()
        w = d.copy()
        wbar = d.copy()
        zeta = np.zeros(d.shape + (2,))
        be.cp_chunk(w, wbar, zeta, d, spacing, 0.05, tau, sigma, 60, kind, arg)
        return w, zeta

    @needs_numba
    @pytest.mark.parametrize("kind,arg", [("euclid", None), ("l1", np.array([1.0, 1.4]))])
    def test_fused_2d_matches_numpy(self, restore_backend, kind, arg):
        rng = np.random.default_rng(11)
        d, spacing, tau, sigma = self._problem(rng)
        w_np, z_np = self._run("numpy", d, spacing, tau, sigma, kind, arg)
        w_nb, z_nb = self._run("numba", d, spacing, tau, sigma, kind, arg)
        assert_allclose(w_nb, w_np, rtol=0.0, atol=1e-10)
        assert_allclose(z_nb, z_np, rtol=0.0, atol=1e-10)

    def test_generic_projection_matches_euclid(self, restore_backend):
        from atwflow.anisotropy import Anisotropy

        rng = np.random.default_rng(13)
        d, spacing, tau, sigma = self._problem(rng)
        proj = Anisotropy.euclidean(2).dual().project_dual_many
        w_e, z_e = self._run("numpy", d, spacing, tau, sigma, "euclid", None)
        w_g, z_g = self._run("numpy", d, spacing, tau, sigma, "generic", proj)
        assert_allclose(w_g, w_e, rtol=0.0, atol=1e-12)
        assert_allclose(z_g, z_e, rtol=0.0, atol=1e-12)
