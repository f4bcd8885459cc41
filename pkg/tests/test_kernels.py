"""Both kernel paths must implement identical semantics, cell for cell."""

import numpy as np
import pytest

from gmwalk import _kernels

needs_numba = pytest.mark.skipif(
    not _kernels.HAS_NUMBA, reason="numba backend not active"
)

rng = np.random.default_rng(2024)


@needs_numba
def test_lattice_step_paths_agree():
    S, L = 3, 64
    W = np.zeros((S, L))
    W[:, 20:44] = rng.random((S, 24))
    trans = rng.random((S, S))
    offs = np.array([-2, 0, 3], dtype=np.int64)
    out_a = np.zeros_like(W)
    out_b = np.zeros_like(W)
    _kernels.lattice_step_numpy(W, out_a, trans, offs)
    _kernels.lattice_step_numba(W, out_b, trans, offs)
    np.testing.assert_allclose(out_a, out_b, rtol=0, atol=1e-15)


@needs_numba
def test_conv_step_paths_agree():
    L = 101
    w = np.zeros(L)
    w[30:70] = rng.random(40)
    weights = rng.random(5)
    offs = np.array([-3, -1, 0, 2, 5], dtype=np.int64)
    out_a = np.zeros(L)
    out_b = np.zeros(L)
    _kernels.conv_step_numpy(w, out_a, weights, offs)
    _kernels.conv_step_numba(w, out_b, weights, offs)
    np.testing.assert_allclose(out_a, out_b, rtol=0, atol=1e-15)


@needs_numba
def test_heis_step_paths_agree():
    S, Nx, Ny, Nz = 2, 9, 9, 21
    W = np.zeros((S, Nx, Ny, Nz))
    W[:, 2:7, 2:7, 8:13] = rng.random((S, 5, 5, 5))
    trans = rng.random((S, S))
    incs = np.array([[1, 0, 0], [0, -1, 1]], dtype=np.int64)
    oy = 4
    out_a = np.zeros_like(W)
    out_b = np.zeros_like(W)
    _kernels.heis_step_numpy(W, out_a, trans, incs, oy)
    _kernels.heis_step_numba(W, out_b, trans, incs, oy)
    np.testing.assert_allclose(out_a, out_b, rtol=0, atol=1e-15)


@needs_numba
def test_heis_conv_step_paths_agree():
    Nx, Ny, Nz = 9, 9, 25
    w = np.zeros((Nx, Ny, Nz))
    w[2:7, 2:7, 9:16] = rng.random((5, 5, 7))
    weights = rng.random(4)
    incs = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=np.int64)
    out_a = np.zeros_like(w)
    out_b = np.zeros_like(w)
    _kernels.heis_conv_step_numpy(w, out_a, weights, incs, 4)
    _kernels.heis_conv_step_numba(w, out_b, weights, incs, 4)
    np.testing.assert_allclose(out_a, out_b, rtol=0, atol=1e-15)


def test_shear_moves_mass_where_expected():
    # left increment (1,0,0) sends (x,y,z) to (x+1, y, z+y)
    Nx, Ny, Nz = 5, 5, 9
    w = np.zeros((Nx, Ny, Nz))
    oy = 2
    w[2, 3, 4] = 1.0          # coordinates (0, 1, 0)
    out = np.zeros_like(w)
    _kernels.heis_conv_step(w, out, np.array([1.0]),
                            np.array([[1, 0, 0]], dtype=np.int64), oy)
    assert out[3, 3, 5] == 1.0
    assert out.sum() == 1.0


def test_mass_conservation_under_stepping():
    S, L = 2, 40
    W = np.zeros((S, L))
    W[:, 20] = 0.5
    trans = np.array([[0.25, 0.75], [0.6, 0.4]])
    offs = np.array([1, -1], dtype=np.int64)
    out = np.zeros_like(W)
    for _ in range(10):
        out.fill(0.0)
        _kernels.lattice_step(W, out, trans, offs)
        W, out = out, W
    assert W.sum() == pytest.approx(1.0, abs=1e-14)
