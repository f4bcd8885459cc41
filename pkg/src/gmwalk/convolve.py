"""Convolution powers of finitely supported measures on the shipped groups.

Dense float engines mirror the walk engines (flat stride boxes for lattices,
sheared boxes for the Heisenberg group); a sparse dictionary engine covers
exact rational work and any other group.  Convolving multiplies the new
increment on the left, which for i.i.d. powers agrees with either order.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import ResourceLimitError
from .groups import EmbeddedRealLattice, HeisenbergZ, IntegerLattice

SPARSE_ATOM_CAP = 2_000_000


def sparse_convolve(dist, masses, spec):
    out = {}
    for g, w in dist.items():
        for h, v in masses.items():
            key = spec.multiply(h, g)
            out[key] = out.get(key, 0) + w * v
    return out


def heis_z_bound(atoms, span):
    """Safe |z| bound after ``span`` left multiplications by the given atoms.

    When every atom moves x or y but not both, shearing steps see |y| built
    up only by the other steps, so the products peak at the n^2/4 split;
    mixed atoms shear while advancing y, which needs the triangular budget.
    """
    amax = max(abs(a) for a, _, _ in atoms)
    bmax = max(abs(b) for _, b, _ in atoms)
    cmax = max(abs(c) for _, _, c in atoms)
    if all(a * b == 0 for a, b, _ in atoms):
        return (span * span // 4 + span) * amax * bmax + span * cmax
    return span * cmax + amax * bmax * span * (span - 1) // 2 + span


class LatticeConvEngine:
    def __init__(self, spec, masses, k_max, max_cells):
        d = spec.key_size
        atoms = sorted(masses)
        lo = [min(0, min(a[i] for a in atoms)) * k_max for i in range(d)]
        hi = [max(0, max(a[i] for a in atoms)) * k_max for i in range(d)]
        dims = tuple(h - l + 1 for l, h in zip(lo, hi))
        L = 1
        for dd in dims:
            L *= dd
        if L > max_cells:
            raise ResourceLimitError(f"dense box needs {L} cells (> {max_cells})",
                                     completed=0)
        strides = [0] * d
        acc = 1
        for i in range(d - 1, -1, -1):
            strides[i] = acc
            acc *= dims[i]
        self.origin = sum(-l * st for l, st in zip(lo, strides))
        self.offs = np.array([sum(a[i] * strides[i] for i in range(d)) for a in atoms],
                             dtype=np.int64)
        self.weights = np.array([float(masses[a]) for a in atoms])
        self.w = np.zeros(L)
        self.w[self.origin] = 1.0
        self._buf = np.zeros(L)
        self.k = 0

    def step_once(self):
        self._buf.fill(0.0)
        _kernels.conv_step(self.w, self._buf, self.weights, self.offs)
        self.w, self._buf = self._buf, self.w
        self.k += 1

    def identity_mass(self):
        return float(self.w[self.origin])

    def total(self):
        return float(self.w.sum())


class HeisConvEngine:
    def __init__(self, spec, masses, k_max, max_cells):
        atoms = sorted(masses)
        ax = [a[0] for a in atoms]
        by = [a[1] for a in atoms]
        cz = [a[2] for a in atoms]
        xlo, xhi = min(0, min(ax)) * k_max, max(0, max(ax)) * k_max
        ylo, yhi = min(0, min(by)) * k_max, max(0, max(by)) * k_max
        zb = heis_z_bound(atoms, k_max)
        dims = (xhi - xlo + 1, yhi - ylo + 1, 2 * zb + 1)
        cells = dims[0] * dims[1] * dims[2]
        if cells > max_cells:
            raise ResourceLimitError(f"dense box needs {cells} cells (> {max_cells})",
                                     completed=0)
        self.lo = (xlo, ylo, -zb)
        self.oy = -ylo
        self.origin = (-xlo, -ylo, zb)
        self.incs = np.array(atoms, dtype=np.int64)
        self.weights = np.array([float(masses[a]) for a in atoms])
        self.w = np.zeros(dims)
        self.w[self.origin] = 1.0
        self._buf = np.zeros(dims)
        self.k = 0

    def step_once(self):
        self._buf.fill(0.0)
        _kernels.heis_conv_step(self.w, self._buf, self.weights, self.incs, self.oy)
        self.w, self._buf = self._buf, self.w
        self.k += 1

    def identity_mass(self):
        return float(self.w[self.origin])

    def total(self):
        return float(self.w.sum())


class SparseConvEngine:
    def __init__(self, spec, masses, k_max=None, max_atoms=SPARSE_ATOM_CAP):
        self.spec = spec
        self.masses = dict(masses)
        rational = any(isinstance(w, Fraction) for w in self.masses.values())
        self.zero = Fraction(0) if rational else 0.0
        one = Fraction(1) if rational else 1.0
        self.dist = {spec.identity(): one}
        self.max_atoms = max_atoms
        self.k = 0

    def step_once(self):
        self.dist = sparse_convolve(self.dist, self.masses, self.spec)
        if len(self.dist) > self.max_atoms:
            raise ResourceLimitError(
                f"sparse convolution support exceeded {self.max_atoms}", completed=self.k
            )
        self.k += 1

    def identity_mass(self):
        return self.dist.get(self.spec.identity(), self.zero)

    def total(self):
        return sum(self.dist.values())


def make_conv_engine(spec, masses, k_max, mode="float", max_cells=80_000_000):
    if mode == "float":
        fm = {g: float(w) for g, w in masses.items()}
        if isinstance(spec, (IntegerLattice, EmbeddedRealLattice)) and spec.key_size > 0:
            return LatticeConvEngine(spec, fm, k_max, max_cells)
        if isinstance(spec, HeisenbergZ):
            return HeisConvEngine(spec, fm, k_max, max_cells)
        return SparseConvEngine(spec, fm)
    return SparseConvEngine(spec, masses)
