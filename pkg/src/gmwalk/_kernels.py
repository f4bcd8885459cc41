"""Hot stepping kernels: numba-compiled with a pure-numpy fallback.

The fallback is selected by setting ``GMWALK_PURE_NUMPY=1`` (or numba's own
``NUMBA_DISABLE_JIT``) in the environment, or automatically when numba is not
importable.  Both paths implement identical semantics so they can be compared
cell by cell; ``benchmarks/bench_kernels.py`` times them against each other.

Layout conventions:

* Lattice tables are flat ``(S, L)`` float64 arrays; a group coordinate maps
  to a flat index through C-order strides.  A per-symbol step is then a single
  constant flat offset.  Engines size boxes so that populated cells never sit
  close enough to the edge for an offset to cross a row boundary; edge cells
  hold exact zeros, so row-crossing writes only ever add zeros.
* Heisenberg tables are ``(S, Nx, Ny, Nz)``; the left increment (a, b, c)
  sends index (x, y, z) to (x+a, y+b, z+c+a*(y-oy)) where oy is the index of
  the y origin.  The shear depends on y, so this cannot be a flat offset.
"""

import os

import numpy as np

_FORCE_NUMPY = bool(os.environ.get("GMWALK_PURE_NUMPY") or os.environ.get("NUMBA_DISABLE_JIT"))

try:
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# ---------------------------------------------------------------- numpy path

def lattice_step_numpy(W, out, trans, offs):
    """out[s2, i + offs[s2]] += sum_s trans[s, s2] * W[s, i]."""
    L = W.shape[1]
    M = trans.T @ W
    for s2 in range(trans.shape[1]):
        off = int(offs[s2])
        lo = -off if off < 0 else 0
        hi = L - off if off > 0 else L
        if lo < hi:
            out[s2, lo + off : hi + off] += M[s2, lo:hi]


def conv_step_numpy(w, out, weights, offs):
    """out[i + offs[j]] += weights[j] * w[i] for every atom j."""
    L = w.shape[0]
    for j in range(weights.shape[0]):
        off = int(offs[j])
        lo = -off if off < 0 else 0
        hi = L - off if off > 0 else L
        if lo < hi:
            out[lo + off : hi + off] += weights[j] * w[lo:hi]


def heis_step_numpy(W, out, trans, incs, oy):
    S, Nx, Ny, Nz = W.shape
    M = np.tensordot(trans, W, axes=(0, 0))
    for s2 in range(S):
        a, b, c = (int(v) for v in incs[s2])
        _heis_shift_add_numpy(M[s2], out[s2], a, b, c, oy)


def heis_conv_step_numpy(w, out, weights, incs, oy):
    for j in range(weights.shape[0]):
        a, b, c = (int(v) for v in incs[j])
        _heis_shift_add_numpy(w, out, a, b, c, oy, scale=float(weights[j]))


def _heis_shift_add_numpy(src, dst, a, b, c, oy, scale=1.0):
    Nx, Ny, Nz = src.shape
    xlo = -a if a < 0 else 0
    xhi = Nx - a if a > 0 else Nx
    if xlo >= xhi:
        return
    for y in range(max(0, -b), min(Ny, Ny - b)):
        dz = c + a * (y - oy)
        zlo = -dz if dz < 0 else 0
        zhi = Nz - dz if dz > 0 else Nz
        if zlo >= zhi:
            continue
        dst[xlo + a : xhi + a, y + b, zlo + dz : zhi + dz] += (
            scale * src[xlo:xhi, y, zlo:zhi]
        )


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @njit(cache=True)
    def _lattice_step_nb(W, out, trans, offs):
        S, L = W.shape
        for s2 in range(S):
            off = offs[s2]
            lo = -off if off < 0 else 0
            hi = L - off if off > 0 else L
            for s in range(S):
                w = trans[s, s2]
                if w == 0.0:
                    continue
                row = W[s]
                orow = out[s2]
                for i in range(lo, hi):
                    orow[i + off] += w * row[i]

    @njit(cache=True)
    def _conv_step_nb(w, out, weights, offs):
        L = w.shape[0]
        for j in range(weights.shape[0]):
            off = offs[j]
            c = weights[j]
            lo = -off if off < 0 else 0
            hi = L - off if off > 0 else L
            for i in range(lo, hi):
                out[i + off] += c * w[i]

    @njit(cache=True)
    def _heis_step_nb(W, out, trans, incs, oy):
        S, Nx, Ny, Nz = W.shape
        for s2 in range(S):
            a = incs[s2, 0]
            b = incs[s2, 1]
            c = incs[s2, 2]
            xlo = -a if a < 0 else 0
            xhi = Nx - a if a > 0 else Nx
            ylo = -b if b < 0 else 0
            yhi = Ny - b if b > 0 else Ny
            for s in range(S):
                p = trans[s, s2]
                if p == 0.0:
                    continue
                for x in range(xlo, xhi):
                    for y in range(ylo, yhi):
                        dz = c + a * (y - oy)
                        zlo = -dz if dz < 0 else 0
                        zhi = Nz - dz if dz > 0 else Nz
                        for z in range(zlo, zhi):
                            out[s2, x + a, y + b, z + dz] += p * W[s, x, y, z]

    @njit(cache=True)
    def _heis_conv_step_nb(w, out, weights, incs, oy):
        Nx, Ny, Nz = w.shape
        for j in range(weights.shape[0]):
            a = incs[j, 0]
            b = incs[j, 1]
            c = incs[j, 2]
            p = weights[j]
            xlo = -a if a < 0 else 0
            xhi = Nx - a if a > 0 else Nx
            ylo = -b if b < 0 else 0
            yhi = Ny - b if b > 0 else Ny
            for x in range(xlo, xhi):
                for y in range(ylo, yhi):
                    dz = c + a * (y - oy)
                    zlo = -dz if dz < 0 else 0
                    zhi = Nz - dz if dz > 0 else Nz
                    for z in range(zlo, zhi):
                        out[x + a, y + b, z + dz] += p * w[x, y, z]

    def lattice_step_numba(W, out, trans, offs):
        _lattice_step_nb(W, out, trans, np.asarray(offs, dtype=np.int64))

    def conv_step_numba(w, out, weights, offs):
        _conv_step_nb(w, out, weights, np.asarray(offs, dtype=np.int64))

    def heis_step_numba(W, out, trans, incs, oy):
        _heis_step_nb(W, out, trans, np.asarray(incs, dtype=np.int64), oy)

    def heis_conv_step_numba(w, out, weights, incs, oy):
        _heis_conv_step_nb(w, out, weights, np.asarray(incs, dtype=np.int64), oy)

else:
    lattice_step_numba = None
    conv_step_numba = None
    heis_step_numba = None
    heis_conv_step_numba = None


if HAS_NUMBA:
    BACKEND = "numba"
    lattice_step = lattice_step_numba
    conv_step = conv_step_numba
    heis_step = heis_step_numba
    heis_conv_step = heis_conv_step_numba
else:
    BACKEND = "numpy"
    lattice_step = lattice_step_numpy
    conv_step = conv_step_numpy
    heis_step = heis_step_numpy
    heis_conv_step = heis_conv_step_numpy


def warm_up():
    """Trigger JIT compilation on tiny inputs (no-op on the numpy path)."""
    W = np.zeros((2, 8))
    W[:, 4] = 0.5
    out = np.zeros_like(W)
    lattice_step(W, out, np.full((2, 2), 0.5), np.array([1, -1]))
    w3 = np.zeros((3, 3, 5))
    w3[1, 1, 2] = 1.0
    out3 = np.zeros_like(w3)
    heis_conv_step(w3, out3, np.array([0.5, 0.5]), np.array([[1, 0, 0], [-1, 0, 0]]), 1)
    W4 = np.zeros((2, 3, 3, 5))
    W4[:, 1, 1, 2] = 0.5
    out4 = np.zeros_like(W4)
    heis_step(W4, out4, np.full((2, 2), 0.5), np.array([[1, 0, 0], [0, 1, 0]]), 1)
    conv_step(np.ones(8), np.zeros(8), np.array([1.0]), np.array([0]))
