"""Forward law of the accumulated cocycle product, jointly with the chain state.

The step recursion multiplies the new increment on the LEFT of the running
product: after emitting symbol s' from state s,

    W_{n+1}(s', v(s') * g) += W_n(s, g) * p(s -> s').

Dense float engines (stride-indexed boxes) are selected automatically for
integer-lattice and embedded-lattice targets and for the Heisenberg group;
everything else, and all exact-rational work, runs on hash-keyed sparse
tables.  No mass is ever pruned unless explicitly requested, and pruned mass
is tracked and surfaced in every derived report.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .convolve import heis_z_bound
from .errors import ResourceLimitError, ValidationError
from .gm_system import check_aperiodicity_algebraic, cylinder_mass
from .groups import EmbeddedRealLattice, FiniteGroup, HeisenbergZ, IntegerLattice

DEFAULT_MAX_CELLS = 80_000_000
DEFAULT_MAX_ATOMS = 3_000_000
EXPORT_MAX_ATOMS = 5_000_000
BOUNDARY_ATOL = 1e-9


def _as_box(E, ambient_dim):
    """Normalize a window to a tuple of per-dimension open intervals."""
    if ambient_dim == 1 and len(E) == 2 and not hasattr(E[0], "__len__"):
        E = (E,)
    box = tuple((float(lo), float(hi)) for lo, hi in E)
    if len(box) != ambient_dim:
        raise ValidationError(f"window has {len(box)} dimensions, ambient space has {ambient_dim}")
    for lo, hi in box:
        if not lo < hi:
            raise ValidationError(f"degenerate window interval ({lo}, {hi})")
    return box


def box_volume(box):
    v = 1.0
    for lo, hi in box:
        v *= hi - lo
    return v


class MassTable:
    """Finitely supported mass on (state, group element) at step n."""

    def __init__(self, n, mode, spec, data, dropped=0.0):
        self.n = n
        self.mode = mode
        self.spec = spec
        self.data = data                # dict[(state, gkey)] -> mass
        self.dropped = dropped

    def total(self):
        return sum(self.data.values())

    def group_masses(self):
        out = {}
        for (_, g), w in self.data.items():
            out[g] = out.get(g, 0) + w
        return out

    def mass_at(self, g):
        zero = Fraction(0) if self.mode == "rational" else 0.0
        return sum((w for (_, gg), w in self.data.items() if gg == g), zero)

    def state_marginal(self, m):
        zero = Fraction(0) if self.mode == "rational" else 0.0
        out = [zero] * m
        for (s, _), w in self.data.items():
            out[s] += w
        return out

    def items_sorted(self):
        return sorted(self.data.items())

    def support(self):
        return set(g for (_, g) in self.data)

    def rows(self):
        """(n, key..., mass) rows of the group marginal, sorted by key."""
        return [(self.n,) + g + (w,) for g, w in sorted(self.group_masses().items())]


def write_distribution_csv(table: MassTable, path):
    """Write a table's group marginal as CSV with columns (n, key..., mass)."""
    key_size = table.spec.key_size
    header = ["n"] + [f"key_{i}" for i in range(key_size)] + ["mass"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table.rows():
            fh.write(",".join(_csv_cell(c) for c in row) + "\n")


def _csv_cell(x):
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ------------------------------------------------------------------ engines

class _SparseEngine:
    """Dictionary-backed stepping; exact in rational mode."""

    def __init__(self, system, cocycle, mode, seed_state=None,
                 max_atoms=DEFAULT_MAX_ATOMS, prune_eps=0.0, data=None, n=0,
                 seed_entry=None):
        self.system = system
        self.cocycle = cocycle
        self.spec = cocycle.spec
        self.mode = mode
        self.max_atoms = max_atoms
        self.prune_eps = prune_eps
        self.dropped = Fraction(0) if mode == "rational" else 0.0
        self.n = n
        e = self.spec.identity()
        one = Fraction(1) if mode == "rational" else 1.0
        if data is not None:
            self.data = dict(data)
        elif seed_entry is not None:
            s0, g0 = seed_entry
            self.data = {(int(s0), tuple(g0)): one}
        elif seed_state is None:
            pi = system.pi if mode == "rational" else system.pi_float
            self.data = {(s, e): pi[s] for s in range(system.m)}
        else:
            self.data = {(int(seed_state), e): one}

    def step_once(self):
        trans = self.system.trans if self.mode == "rational" else self.system.trans_float
        vals = self.cocycle.values
        mul = self.spec.multiply
        new = {}
        for (s, g), w in self.data.items():
            row = trans[s]
            for s2 in range(self.system.m):
                key = (s2, mul(vals[s2], g))
                nw = w * row[s2]
                if key in new:
                    new[key] += nw
                else:
                    new[key] = nw
        if self.prune_eps:
            kept = {}
            for k, w in new.items():
                if w < self.prune_eps:
                    self.dropped += w
                else:
                    kept[k] = w
            new = kept
        if len(new) > self.max_atoms:
            raise ResourceLimitError(
                f"sparse support exceeded {self.max_atoms} atoms", completed=self.n
            )
        self.data = new
        self.n += 1

    def total(self):
        return sum(self.data.values())

    def mass_at(self, g):
        zero = Fraction(0) if self.mode == "rational" else 0.0
        out = zero
        for (_, gg), w in self.data.items():
            if gg == g:
                out += w
        return out

    def joint_mass_at(self, s, g):
        zero = Fraction(0) if self.mode == "rational" else 0.0
        return self.data.get((s, g), zero)

    def state_marginal(self):
        zero = Fraction(0) if self.mode == "rational" else 0.0
        out = [zero] * self.system.m
        for (s, _), w in self.data.items():
            out[s] += w
        return out

    def window_mass(self, box, shift=None):
        spec = self.spec
        if not isinstance(spec, EmbeddedRealLattice):
            raise ValidationError("window masses require an embedded real lattice")
        sh = spec.embed(shift) if shift is not None else (0.0,) * spec.ambient_dim
        total = Fraction(0) if self.mode == "rational" else 0.0
        flagged = 0
        for (_, g), w in self.data.items():
            emb = spec.embed(g)
            inside = True
            for j, (lo, hi) in enumerate(box):
                x = emb[j]
                if not (lo + sh[j] < x < hi + sh[j]):
                    inside = False
                if min(abs(x - lo - sh[j]), abs(x - hi - sh[j])) < BOUNDARY_ATOL:
                    flagged += 1
            if inside:
                total += w
        return total, flagged

    def to_table(self):
        return MassTable(self.n, self.mode, self.spec, dict(self.data), self.dropped)


class _DenseLatticeEngine:
    """Float stepping on a flat stride-indexed box (integer/embedded lattices)."""

    def __init__(self, system, cocycle, n_max, seed_state=None, max_cells=DEFAULT_MAX_CELLS,
                 seed_entry=None):
        spec = cocycle.spec
        self.system = system
        self.cocycle = cocycle
        self.spec = spec
        self.mode = "float"
        self.dropped = 0.0
        self.n = 0
        d = spec.key_size
        vals = cocycle.values
        span = n_max + (1 if seed_entry is not None else 0)
        lo = [min(0, min(v[i] for v in vals)) * span for i in range(d)]
        hi = [max(0, max(v[i] for v in vals)) * span for i in range(d)]
        self.dims = tuple(h - l + 1 for l, h in zip(lo, hi))
        self.lo = tuple(lo)
        L = 1
        for dd in self.dims:
            L *= dd
        if system.m * L > max_cells:
            raise ResourceLimitError(
                f"dense box needs {system.m * L} cells, over the {max_cells} guard",
                completed=0,
            )
        self.L = L
        strides = [0] * d
        acc = 1
        for i in range(d - 1, -1, -1):
            strides[i] = acc
            acc *= self.dims[i]
        self.strides = tuple(strides)
        self.origin = sum(-l * st for l, st in zip(lo, strides))
        self.offs = np.array(
            [sum(v[i] * strides[i] for i in range(d)) for v in vals], dtype=np.int64
        )
        self.W = np.zeros((system.m, L))
        if seed_entry is not None:
            s0, g0 = seed_entry
            self.W[int(s0), self.flat_index(tuple(g0))] = 1.0
        elif seed_state is None:
            self.W[:, self.origin] = system.pi_float
        else:
            self.W[int(seed_state), self.origin] = 1.0
        self._buf = np.zeros_like(self.W)
        self._embed_cache = None

    def flat_index(self, g):
        idx = self.origin
        for c, st, l, dim in zip(g, self.strides, self.lo, self.dims):
            if not l <= c <= l + dim - 1:
                return None
            idx += c * st
        return idx

    def step_once(self):
        self._buf.fill(0.0)
        _kernels.lattice_step(self.W, self._buf, self.system.trans_float, self.offs)
        self.W, self._buf = self._buf, self.W
        self.n += 1

    def total(self):
        return float(self.W.sum())

    def mass_at(self, g):
        idx = self.flat_index(g)
        if idx is None:
            return 0.0
        return float(self.W[:, idx].sum())

    def joint_mass_at(self, s, g):
        idx = self.flat_index(g)
        if idx is None:
            return 0.0
        return float(self.W[s, idx])

    def state_marginal(self):
        return self.W.sum(axis=1).tolist()

    def _embed_grid(self):
        # per-cell real embeddings, cached; ambient axis first
        if self._embed_cache is None:
            spec = self.spec
            coords = np.unravel_index(np.arange(self.L), self.dims)
            emb = np.zeros((spec.ambient_dim, self.L))
            for i in range(spec.key_size):
                ci = coords[i].astype(np.float64) + self.lo[i]
                for j in range(spec.ambient_dim):
                    b = spec.basis[i][j]
                    if b:
                        emb[j] += b * ci
            self._embed_cache = emb
        return self._embed_cache

    def window_mass(self, box, shift=None):
        spec = self.spec
        if not isinstance(spec, EmbeddedRealLattice):
            raise ValidationError("window masses require an embedded real lattice")
        emb = self._embed_grid()
        sh = spec.embed(shift) if shift is not None else (0.0,) * spec.ambient_dim
        marg = self.W.sum(axis=0)
        mask = np.ones(self.L, dtype=bool)
        flagged = 0
        occupied = marg > 0.0
        for j, (lo, hi) in enumerate(box):
            x = emb[j]
            mask &= (x > lo + sh[j]) & (x < hi + sh[j])
            near = (np.abs(x - (lo + sh[j])) < BOUNDARY_ATOL) | (
                np.abs(x - (hi + sh[j])) < BOUNDARY_ATOL
            )
            flagged += int(np.count_nonzero(near & occupied))
        return float(marg[mask].sum()), flagged

    def to_table(self):
        nz = np.nonzero(self.W)
        if nz[0].size > EXPORT_MAX_ATOMS:
            raise ResourceLimitError(
                f"table export would produce {nz[0].size} atoms", completed=self.n
            )
        data = {}
        for s, flat in zip(*nz):
            coords = np.unravel_index(flat, self.dims)
            g = tuple(int(c + l) for c, l in zip(coords, self.lo))
            data[(int(s), g)] = float(self.W[s, flat])
        return MassTable(self.n, "float", self.spec, data, self.dropped)


class _DenseHeisEngine:
    """Float stepping on a dense (x, y, z) box with the shear handled in-kernel."""

    def __init__(self, system, cocycle, n_max, seed_state=None, max_cells=DEFAULT_MAX_CELLS,
                 seed_entry=None):
        spec = cocycle.spec
        self.system = system
        self.cocycle = cocycle
        self.spec = spec
        self.mode = "float"
        self.dropped = 0.0
        self.n = 0
        vals = cocycle.values
        span = n_max + (1 if seed_entry is not None else 0)
        ax = [v[0] for v in vals]
        by = [v[1] for v in vals]
        cz = [v[2] for v in vals]
        xlo, xhi = min(0, min(ax)) * span, max(0, max(ax)) * span
        ylo, yhi = min(0, min(by)) * span, max(0, max(by)) * span
        zbound = heis_z_bound(vals, span)
        self.lo = (xlo, ylo, -zbound)
        self.dims = (xhi - xlo + 1, yhi - ylo + 1, 2 * zbound + 1)
        cells = self.system.m * self.dims[0] * self.dims[1] * self.dims[2]
        if cells > max_cells:
            raise ResourceLimitError(
                f"dense Heisenberg box needs {cells} cells, over the {max_cells} guard",
                completed=0,
            )
        self.incs = np.array(vals, dtype=np.int64)
        self.oy = -ylo
        self.W = np.zeros((system.m,) + self.dims)
        if seed_entry is not None:
            s0, g0 = seed_entry
            self.W[(int(s0),) + self._index(tuple(g0))] = 1.0
        elif seed_state is None:
            self.W[:, -xlo, -ylo, zbound] = system.pi_float
        else:
            self.W[int(seed_state), -xlo, -ylo, zbound] = 1.0
        self._buf = np.zeros_like(self.W)

    def _index(self, g):
        out = []
        for c, l, dim in zip(g, self.lo, self.dims):
            if not l <= c <= l + dim - 1:
                return None
            out.append(c - l)
        return tuple(out)

    def step_once(self):
        self._buf.fill(0.0)
        _kernels.heis_step(self.W, self._buf, self.system.trans_float, self.incs, self.oy)
        self.W, self._buf = self._buf, self.W
        self.n += 1

    def total(self):
        return float(self.W.sum())

    def mass_at(self, g):
        idx = self._index(g)
        if idx is None:
            return 0.0
        return float(self.W[(slice(None),) + idx].sum())

    def joint_mass_at(self, s, g):
        idx = self._index(g)
        if idx is None:
            return 0.0
        return float(self.W[(s,) + idx])

    def state_marginal(self):
        return self.W.sum(axis=(1, 2, 3)).tolist()

    def window_mass(self, box, shift=None):
        raise ValidationError("window masses require an embedded real lattice")

    def to_table(self):
        nz = np.nonzero(self.W)
        if nz[0].size > EXPORT_MAX_ATOMS:
            raise ResourceLimitError(
                f"table export would produce {nz[0].size} atoms", completed=self.n
            )
        data = {}
        for s, x, y, z in zip(*nz):
            g = (int(x + self.lo[0]), int(y + self.lo[1]), int(z + self.lo[2]))
            data[(int(s), g)] = float(self.W[s, x, y, z])
        return MassTable(self.n, "float", self.spec, data, self.dropped)


def _make_engine(system, cocycle, n_max, mode, seed_state=None,
                 max_cells=DEFAULT_MAX_CELLS, max_atoms=DEFAULT_MAX_ATOMS,
                 prune_eps=0.0, seed_entry=None):
    cocycle.check_total(system.m)
    spec = cocycle.spec
    if mode == "float" and not prune_eps:
        if isinstance(spec, (IntegerLattice, EmbeddedRealLattice)) and spec.key_size > 0:
            return _DenseLatticeEngine(system, cocycle, n_max, seed_state, max_cells,
                                       seed_entry=seed_entry)
        if isinstance(spec, HeisenbergZ):
            return _DenseHeisEngine(system, cocycle, n_max, seed_state, max_cells,
                                    seed_entry=seed_entry)
    return _SparseEngine(system, cocycle, mode, seed_state, max_atoms, prune_eps,
                         seed_entry=seed_entry)


# ------------------------------------------------------------- public ops

def zero_table(system, cocycle, mode="rational", seed_state=None) -> MassTable:
    """Step-0 table: all mass at the identity, stationary state marginal."""
    eng = _SparseEngine(system, cocycle, mode, seed_state)
    return eng.to_table()


def step(table: MassTable, system, cocycle, max_atoms=DEFAULT_MAX_ATOMS) -> MassTable:
    """One left-increment step of a sparse table."""
    eng = _SparseEngine(system, cocycle, table.mode, data=table.data, n=table.n,
                        max_atoms=max_atoms)
    eng.dropped = table.dropped
    eng.step_once()
    return eng.to_table()


def distribution(system, cocycle, n, mode="rational", seed_state=None,
                 max_cells=DEFAULT_MAX_CELLS, max_atoms=DEFAULT_MAX_ATOMS,
                 prune_eps=0.0) -> MassTable:
    """Law of the n-step product (joint with the state), from the step-1 seed."""
    if n < 0:
        raise ValidationError("n must be >= 0")
    eng = _make_engine(system, cocycle, n, mode, seed_state, max_cells, max_atoms, prune_eps)
    for _ in range(n):
        eng.step_once()
    return eng.to_table()


def mass_trajectory(system, cocycle, targets, n_max, mode="float", seed_state=None,
                    max_cells=DEFAULT_MAX_CELLS, max_atoms=DEFAULT_MAX_ATOMS,
                    prune_eps=0.0, _with_dropped=False):
    """Masses at fixed group elements for every n <= n_max (one forward pass).

    Returns a list of rows, row n holding the mass of each target at step n.
    """
    targets = [tuple(t) for t in targets]
    eng = _make_engine(system, cocycle, n_max, mode, seed_state, max_cells, max_atoms,
                       prune_eps)
    rows = [[eng.mass_at(t) for t in targets]]
    for _ in range(n_max):
        eng.step_once()
        rows.append([eng.mass_at(t) for t in targets])
    if _with_dropped:
        return rows, float(eng.dropped)
    return rows


def return_sequence(system, cocycle, n_max, mode="float", max_cells=DEFAULT_MAX_CELLS,
                    **kw):
    """Identity-return masses for n = 0..n_max.

    Bernoulli systems factorize into convolution powers of the one-step law,
    which drops the state dimension from the table.
    """
    e = cocycle.spec.identity()
    if system.is_bernoulli:
        from .convolve import make_conv_engine

        weights = system.pi if mode == "rational" else system.pi_float
        masses = {}
        for s in range(system.m):
            g = cocycle.value(s)
            masses[g] = masses.get(g, 0) + weights[s]
        eng = make_conv_engine(cocycle.spec, masses, n_max, mode, max_cells)
        out = [Fraction(1) if mode == "rational" else 1.0]
        for _ in range(n_max):
            eng.step_once()
            out.append(eng.identity_mass())
        return out
    return [row[0] for row in
            mass_trajectory(system, cocycle, [e], n_max, mode, max_cells=max_cells, **kw)]


@dataclass
class RatioReport:
    g: tuple
    ns: list
    ratios: list
    deviations: list
    stride: int
    first_valid_n: int | None
    periodic: bool
    dropped: float = 0.0
    note: str = ""

    def worst(self):
        return max(self.deviations) if self.deviations else math.inf

    def rows(self):
        return [
            (n, "step_ratio", r, 1.0, d)
            for n, r, d in zip(self.ns, self.ratios, self.deviations)
        ]


def ratio_sequence(system, cocycle, g, ns, mode="float", stride=1, **kw) -> RatioReport:
    """Successive-step mass ratios mu^{n+stride}(g) / mu^n(g).

    Walks with a degenerate increment lattice never return at odd steps; they
    are accepted with stride 2 and flagged as periodic rather than rejected.
    """
    g = tuple(g)
    ns = sorted(set(int(n) for n in ns))
    n_top = ns[-1] + stride
    traj, dropped = mass_trajectory(system, cocycle, [g], n_top, mode,
                                    _with_dropped=True, **kw)
    seq = [row[0] for row in traj]
    first_valid = next((i for i, v in enumerate(seq) if i >= 1 and v > 0), None)
    ap = check_aperiodicity_algebraic(system, cocycle)
    periodic = not ap.full
    ratios, devs, kept = [], [], []
    for n in ns:
        den, num = seq[n], seq[n + stride]
        if den == 0:
            continue
        r = num / den
        r = float(r) if mode == "rational" else r
        kept.append(n)
        ratios.append(r)
        # pruned mass widens every deviation as a certified error bound
        devs.append(abs(r - 1.0) + (dropped / float(den) if dropped else 0.0))
    note = ""
    if periodic:
        note = (
            f"increment lattice has index {ap.index}: aperiodicity fails, "
            f"compare strides that are multiples of the period"
        )
    return RatioReport(g, kept, ratios, devs, stride, first_valid, periodic,
                       dropped=dropped, note=note)


@dataclass
class CrossRatioReport:
    g: tuple
    n: int
    value: float
    clt_reference: float | None
    deviation: float
    dropped: float = 0.0

    def rows(self):
        return [(self.n, "cross_ratio", self.value, 1.0, self.deviation)]


def _clt_reference(system, cocycle, g, n):
    # reference curve exp(-<g, Sigma^{-1} g>/2n) from per-step stationary moments
    ab = cocycle.abelianized()
    k = ab.spec.key_size
    if k == 0:
        return None
    vals = np.array(ab.values, dtype=float)
    pi = system.pi_float
    mean = pi @ vals
    cov = (vals - mean).T * pi @ (vals - mean)
    gab = np.array(cocycle.spec.abelianize(tuple(g)), dtype=float)
    try:
        q = float(gab @ np.linalg.solve(cov, gab))
    except np.linalg.LinAlgError:
        return None
    return math.exp(-q / (2 * n))


def cross_ratio(system, cocycle, g, n, mode="float", **kw) -> CrossRatioReport:
    """mu^n(g) / mu^n(e) with a local-CLT reference curve for lattice targets."""
    g = tuple(g)
    e = cocycle.spec.identity()
    traj, dropped = mass_trajectory(system, cocycle, [g, e], n, mode,
                                    _with_dropped=True, **kw)
    num, den = traj[n]
    if den == 0:
        first = next((i for i, row in enumerate(traj) if i >= 1 and row[1] > 0), None)
        raise ValidationError(
            f"mu^{n}(e) = 0: no valid cross ratio at n={n} (first positive n: {first})"
        )
    value = float(num / den) if mode == "rational" else num / den
    dev = abs(value - 1.0) + (dropped / float(den) if dropped else 0.0)
    return CrossRatioReport(g, n, value, _clt_reference(system, cocycle, g, n),
                            dev, dropped)


@dataclass
class WindowMassReport:
    box: tuple
    g_shift: tuple | None
    n: int
    value: float
    boundary_atoms: int
    dropped: float = 0.0

    def rows(self):
        return [(self.n, "window_mass", self.value, "", self.boundary_atoms)]


def window_mass(system, cocycle, E, n, g_shift=None, mode="float", strict=False,
                **kw) -> WindowMassReport:
    """Mass of atoms whose real embedding lands in the open box E (+ shift).

    Atoms within 1e-9 of a face are counted by strict inequality but flagged;
    in strict mode a flagged atom raises instead.
    """
    spec = cocycle.spec
    if not isinstance(spec, EmbeddedRealLattice):
        raise ValidationError("window experiments require an embedded real lattice")
    box = _as_box(E, spec.ambient_dim)
    eng = _make_engine(system, cocycle, n, mode, **kw)
    for _ in range(n):
        eng.step_once()
    val, flagged = eng.window_mass(box, tuple(g_shift) if g_shift is not None else None)
    if strict and flagged:
        raise ValidationError(f"{flagged} atoms within {BOUNDARY_ATOL} of the window boundary")
    return WindowMassReport(box, g_shift, n, float(val), flagged, getattr(eng, "dropped", 0.0))


@dataclass
class WindowPairReport:
    n: int
    pairs: list                  # (g, g1, ratio)
    max_deviation: float

    def rows(self):
        return [(self.n, f"pair_ratio {g}/{g1}", r, 1.0, abs(r - 1.0))
                for g, g1, r in self.pairs]


def window_pair_ratios(system, cocycle, E, shifts, n, mode="float", **kw) -> WindowPairReport:
    """Sampled uniformity of window-mass ratios across translate pairs.

    For every ordered pair (g, g1) of the given shifts, reports
    mu^n(E + g) / mu^n(E + g - g1); uniform convergence to 1 over all
    translates cannot be tested exhaustively, so a finite sample is reported
    with its worst deviation.
    """
    spec = cocycle.spec
    if not isinstance(spec, EmbeddedRealLattice):
        raise ValidationError("window experiments require an embedded real lattice")
    box = _as_box(E, spec.ambient_dim)
    shifts = [tuple(s) for s in shifts]
    eng = _make_engine(system, cocycle, n, mode, **kw)
    for _ in range(n):
        eng.step_once()
    needed = set(shifts)
    for g in shifts:
        for g1 in shifts:
            needed.add(spec.multiply(g, spec.inverse(g1)))
    masses = {t: float(eng.window_mass(box, t)[0]) for t in needed}
    pairs = []
    worst = 0.0
    for g in shifts:
        for g1 in shifts:
            t = spec.multiply(g, spec.inverse(g1))
            if masses[t] == 0:
                continue
            r = masses[g] / masses[t]
            pairs.append((g, g1, r))
            worst = max(worst, abs(r - 1.0))
    return WindowPairReport(n, pairs, worst)


@dataclass
class StoneReport:
    n: int
    ratio: float
    target: float
    deviation: float
    boundary_atoms: int

    def rows(self):
        return [(self.n, "stone_ratio", self.ratio, self.target, self.deviation)]


def stone_ratio(system, cocycle, E, A, n, mode="float", **kw) -> StoneReport:
    """Window-mass ratio against the Lebesgue volume ratio |E|/|A|."""
    spec = cocycle.spec
    if not isinstance(spec, EmbeddedRealLattice):
        raise ValidationError("window experiments require an embedded real lattice")
    boxE = _as_box(E, spec.ambient_dim)
    boxA = _as_box(A, spec.ambient_dim)
    eng = _make_engine(system, cocycle, n, mode, **kw)
    for _ in range(n):
        eng.step_once()
    vE, fE = eng.window_mass(boxE)
    vA, fA = eng.window_mass(boxA)
    if vA == 0:
        raise ValidationError(f"window A has zero mass at n={n}")
    target = box_volume(boxE) / box_volume(boxA)
    ratio = float(vE / vA)
    return StoneReport(n, ratio, target, abs(ratio - target), fE + fA)


# ----------------------------------------------------- condition instance checks

@dataclass
class ConditionReport:
    condition_id: str
    params: dict
    table: list                  # (n', word, value, target, deviation)
    worst_by_nprime: dict        # n' -> worst multiplicative deviation
    best_nprime: int | None
    worst_deviation: float       # at the best n'
    note: str = ""

    def rows(self):
        out = [(np_, "worst_deviation", dev, 0.0, dev) for np_, dev in
               sorted(self.worst_by_nprime.items())]
        return out


def _mult_deviation(value, target):
    if target == 0 and value == 0:
        return 0.0
    if target == 0 or value == 0:
        return math.inf
    r = value / target
    return float(max(r, 1 / r) - 1)


def _cylinders(system, nprime):
    return itertools.product(range(system.m), repeat=nprime)


def check_condition_D(system, cocycle, g, n0, n1, n, mode="float",
                      max_cylinders=200_000, **kw) -> ConditionReport:
    """Cylinder-conditioned point masses against mu^n(g), per intermediate depth.

    For every depth n' in [n0, n1] and every n'-cylinder b, the conditioned
    mass mu(b and {product_n = g}) / mu(b) is computed exactly through the
    factorization of the product over the first n' symbols, then compared
    multiplicatively with mu^n(g).  The quantifier chain over (n0, n1, n) is
    sampled on this finite grid; the best depth is reported.
    """
    if not (1 <= n0 <= n1 < n):
        raise ValidationError("need 1 <= n0 <= n1 < n")
    spec = cocycle.spec
    g = tuple(g)
    total_cyls = sum(system.m ** k for k in range(n0, n1 + 1))
    if total_cyls > max_cylinders:
        raise ResourceLimitError(f"{total_cyls} cylinders exceed the cap {max_cylinders}")
    # group targets needed per seed state, plus the unconditioned target
    needed = {}
    cyl_info = []
    for nprime in range(n0, n1 + 1):
        for word in _cylinders(system, nprime):
            psi_b = cocycle.word_value(word)
            t = spec.multiply(g, spec.inverse(psi_b))
            s_last = word[-1]
            cyl_info.append((nprime, word, s_last, t))
            needed.setdefault(s_last, set()).add(t)
    target_traj = mass_trajectory(system, cocycle, [g], n, mode, **kw)
    target = target_traj[n][0]
    target = float(target) if mode == "rational" else target
    seeded = {}
    for s_last, tset in needed.items():
        tlist = sorted(tset)
        traj = mass_trajectory(system, cocycle, tlist, n - n0, mode,
                               seed_state=s_last, **kw)
        seeded[s_last] = (dict((t, i) for i, t in enumerate(tlist)), traj)
    table = []
    worst = {}
    for nprime, word, s_last, t in cyl_info:
        idx, traj = seeded[s_last]
        val = traj[n - nprime][idx[t]]
        val = float(val) if mode == "rational" else val
        dev = _mult_deviation(val, target)
        table.append((nprime, word, val, target, dev))
        worst[nprime] = max(worst.get(nprime, 0.0), dev)
    best = min(worst, key=worst.get) if worst else None
    return ConditionReport(
        "D", {"g": g, "n0": n0, "n1": n1, "n": n}, table, worst, best,
        worst[best] if best is not None else math.inf,
    )


def check_condition_C(system, cocycle, E, g, n0, n1, n, mode="float",
                      max_cylinders=200_000, **kw) -> ConditionReport:
    """Window version of the cylinder-conditioned check."""
    if not (1 <= n0 <= n1 < n):
        raise ValidationError("need 1 <= n0 <= n1 < n")
    spec = cocycle.spec
    if not isinstance(spec, EmbeddedRealLattice):
        raise ValidationError("window experiments require an embedded real lattice")
    g = tuple(g)
    box = _as_box(E, spec.ambient_dim)
    total_cyls = sum(system.m ** k for k in range(n0, n1 + 1))
    if total_cyls > max_cylinders:
        raise ResourceLimitError(f"{total_cyls} cylinders exceed the cap {max_cylinders}")
    eng = _make_engine(system, cocycle, n, mode, **kw)
    for _ in range(n):
        eng.step_once()
    target, _ = eng.window_mass(box, g)
    target = float(target)
    # group cylinders by their last symbol: one seeded engine per state,
    # windows evaluated at the steps n - n' while passing through them
    by_state = {}
    for nprime in range(n0, n1 + 1):
        for word in _cylinders(system, nprime):
            psi_b = cocycle.word_value(word)
            # product_n in E+g  <=>  tail product in E + g - psi_b (abelian)
            shift = spec.multiply(g, spec.inverse(psi_b))
            by_state.setdefault(word[-1], []).append((nprime, word, shift))
    table = []
    worst = {}
    for s, items in by_state.items():
        eng_s = _make_engine(system, cocycle, n - n0, mode, seed_state=s, **kw)
        for j in range(1, n - n0 + 1):
            eng_s.step_once()
            if j < n - n1:
                continue
            nprime = n - j
            for np_, word, shift in items:
                if np_ != nprime:
                    continue
                val, _fl = eng_s.window_mass(box, shift)
                dev = _mult_deviation(float(val), target)
                table.append((np_, word, float(val), target, dev))
                worst[np_] = max(worst.get(np_, 0.0), dev)
    best = min(worst, key=worst.get) if worst else None
    return ConditionReport(
        "C", {"E": box, "g": g, "n0": n0, "n1": n1, "n": n}, table, worst, best,
        worst[best] if best is not None else math.inf,
    )


def check_condition_CM(system, cocycle, a_word, F, A, E, g, n, mode="float",
                       **kw) -> ConditionReport:
    """Skew-product correlation bound: exact LHS atom sums against the product RHS.

    LHS integrates, atom by atom, the overlap of the translated fibre window:
    sum_h mu(a and {product_n = h}) * vol(F intersect (A - embed(h))).
    RHS = mu(a) * vol(F) * (vol(A)/vol(E)) * mu^n(E + g).
    """
    spec = cocycle.spec
    if not isinstance(spec, EmbeddedRealLattice):
        raise ValidationError("window experiments require an embedded real lattice")
    g = tuple(g)
    boxF = _as_box(F, spec.ambient_dim)
    boxA = _as_box(A, spec.ambient_dim)
    boxE = _as_box(E, spec.ambient_dim)
    k = len(a_word)
    if not 1 <= k < n:
        raise ValidationError("cylinder length must be in [1, n)")
    mu_a = cylinder_mass(system, a_word, mode="float")
    psi_a = cocycle.word_value(a_word)
    emb_a = spec.embed(psi_a)
    eng_s = _make_engine(system, cocycle, n - k, mode, seed_state=a_word[-1], **kw)
    for _ in range(n - k):
        eng_s.step_once()
    # vectorized overlap volumes over the seeded engine's support
    if isinstance(eng_s, _DenseLatticeEngine):
        emb = eng_s._embed_grid()
        marg = eng_s.W.sum(axis=0)
        vol = np.ones(eng_s.L)
        for j, ((flo, fhi), (alo, ahi)) in enumerate(zip(boxF, boxA)):
            x = emb[j] + emb_a[j]
            vol *= np.clip(np.minimum(fhi, ahi - x) - np.maximum(flo, alo - x), 0.0, None)
        lhs = mu_a * float(marg @ vol)
    else:
        lhs = 0.0
        for (_, w_key), w in eng_s.data.items():
            h = spec.multiply(w_key, psi_a)
            x = spec.embed(h)
            v = 1.0
            for j, ((flo, fhi), (alo, ahi)) in enumerate(zip(boxF, boxA)):
                v *= max(0.0, min(fhi, ahi - x[j]) - max(flo, alo - x[j]))
            lhs += mu_a * float(w) * v
    eng = _make_engine(system, cocycle, n, mode, **kw)
    for _ in range(n):
        eng.step_once()
    muE, _fl = eng.window_mass(boxE, g)
    rhs = mu_a * box_volume(boxF) * (box_volume(boxA) / box_volume(boxE)) * float(muE)
    ratio = lhs / rhs if rhs > 0 else math.inf
    holds = lhs <= rhs * (1 + 1e-12)
    return ConditionReport(
        "CM",
        {"a": tuple(a_word), "F": boxF, "A": boxA, "E": boxE, "g": g, "n": n},
        [(n, tuple(a_word), lhs, rhs, ratio)],
        {n: ratio},
        n,
        ratio,
        note="holds" if holds else "LHS exceeds RHS",
    )


# ----------------------------------------------------- finite-group statistics

@dataclass
class MixingReport:
    ns: list
    deviations: list
    rate: float | None
    periodic: bool
    note: str = ""

    def rows(self):
        return [(n, "sup_deviation", d, 0.0, d) for n, d in zip(self.ns, self.deviations)]


def finite_group_mixing(system, cocycle, n_max, mode="float") -> MixingReport:
    """Sup-distance of the n-step law from uniform, with a fitted decay rate."""
    spec = cocycle.spec
    if not isinstance(spec, FiniteGroup):
        raise ValidationError("finite-group mixing requires a finite target")
    ap = check_aperiodicity_algebraic(system, cocycle)
    elements = spec.elements()
    uniform = 1.0 / spec.order
    traj = mass_trajectory(system, cocycle, elements, n_max, mode)
    ns = list(range(1, n_max + 1))
    devs = []
    for n in ns:
        row = traj[n]
        devs.append(max(abs(float(x) - uniform) for x in row))
    if not ap.full:
        return MixingReport(ns, devs, None, True, note="periodic cocycle: no decay fit")
    # least-squares exponential rate on a dyadic grid
    grid = sorted({min(2 ** j, n_max) for j in range(0, 30) if 2 ** j <= n_max})
    pts = [(n, devs[n - 1]) for n in grid if devs[n - 1] > 1e-300]
    rate = None
    if len(pts) >= 2:
        xs = np.array([p[0] for p in pts], dtype=float)
        ys = np.log([p[1] for p in pts])
        rate = float(np.polyfit(xs, ys, 1)[0])
    return MixingReport(ns, devs, rate, False)


@dataclass
class TailReport:
    ns: list
    tail: list          # mu(tau > n) for n = 0..n_max
    rate: float | None
    r_squared: float | None

    def rows(self):
        return [(n, "tail", t, 0.0, 0.0) for n, t in zip(self.ns, self.tail)]


def return_time_tail(system, cocycle, n_max, mode="float") -> TailReport:
    """Survival function of the first identity-return time, by absorption.

    tau(x) = min{j >= 1 : j-step product = e}; mass reaching the identity is
    removed after each step, so the remaining total is mu(tau > n).
    """
    spec = cocycle.spec
    if not isinstance(spec, FiniteGroup):
        raise ValidationError("return-time tails require a finite target")
    eng = _SparseEngine(system, cocycle, mode)
    e = spec.identity()
    one = Fraction(1) if mode == "rational" else 1.0
    tails = [one]
    for _ in range(n_max):
        eng.step_once()
        eng.data = {k: w for k, w in eng.data.items() if k[1] != e}
        tails.append(eng.total())
    ns = list(range(0, n_max + 1))
    pts = [(n, float(t)) for n, t in zip(ns, tails) if n >= 1 and t > 0]
    rate = r2 = None
    if len(pts) >= 3:
        xs = np.array([p[0] for p in pts], dtype=float)
        ys = np.log([p[1] for p in pts])
        slope, intercept = np.polyfit(xs, ys, 1)
        pred = slope * xs + intercept
        ss_res = float(np.sum((ys - pred) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        rate = float(slope)
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return TailReport(ns, tails, rate, r2)


@dataclass
class SuperadditivityReport:
    n_max: int
    constant: float
    violations: list
    holds: bool

    def rows(self):
        return [(self.n_max, "superadditivity_violations", len(self.violations), 0.0,
                 0.0 if self.holds else 1.0)]


def superadditivity_check(system, cocycle, n_max, mode="float",
                          constant=None, rel_slack=1e-9, **kw) -> SuperadditivityReport:
    """Check mu^{n+m}(e) >= D * mu^n(e) * mu^m(e) for all n, m <= n_max.

    D defaults to the inverse square of the Gibbs constant; Bernoulli systems
    satisfy the sharper D = 1, exactly in rational mode.
    """
    if constant is None:
        if system.is_bernoulli:
            constant = Fraction(1)
        else:
            constant = 1 / system.gibbs_constant ** 2
    seq = return_sequence(system, cocycle, 2 * n_max, mode, **kw)
    violations = []
    for nn in range(1, n_max + 1):
        for mm in range(nn, n_max + 1):
            lhs = seq[nn + mm]
            rhs = constant * seq[nn] * seq[mm]
            if mode == "rational":
                ok = lhs >= rhs
            else:
                ok = float(lhs) >= float(rhs) * (1 - rel_slack)
            if not ok:
                violations.append((nn, mm, float(lhs), float(rhs)))
    return SuperadditivityReport(n_max, float(constant), violations, not violations)
