"""Periodic-orbit sums, base-cylinder walk measures, convolution spectral
radii, and the convex minimization that identifies them on the abelianization.

The reference point of a base cylinder a is its periodic point, so the weight
of an n-word v starting at a collapses to the cycle weight

    prod_{j<n-1} p(v_j -> v_{j+1}) * p(v_{n-1} -> a),

which makes the normalization P_n(1) equal to the diagonal return weight
Z_a^n and the walk measure m_n equal to the normalized per-element table
Z_{a,g}^n / Z_a^n, all exactly computable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from .convolve import make_conv_engine, sparse_convolve
from .errors import ValidationError
from .groups import IntegerLattice
from .walkdist import DEFAULT_MAX_CELLS, _make_engine, return_sequence


@dataclass
class WalkMeasure:
    """Finitely supported probability on a group, with provenance."""

    spec: object
    masses: dict
    n: int | None = None
    base: int | None = None

    def total(self):
        return sum(self.masses.values())

    def support(self):
        return set(self.masses)

    def mass(self, g):
        return self.masses.get(tuple(g), 0)

    def abelianized(self) -> "WalkMeasure":
        out = {}
        for g, w in self.masses.items():
            key = self.spec.abelianize(g)
            out[key] = out.get(key, 0) + w
        return WalkMeasure(IntegerLattice(self.spec.ab_rank), out, self.n, self.base)

    def as_float(self) -> "WalkMeasure":
        return WalkMeasure(self.spec, {g: float(w) for g, w in self.masses.items()},
                           self.n, self.base)


def one_step_law(system, cocycle, mode="rational") -> WalkMeasure:
    """Law of a single increment under the stationary measure."""
    pi = system.pi if mode == "rational" else system.pi_float
    out = {}
    for s in range(system.m):
        g = cocycle.value(s)
        out[g] = out.get(g, 0) + pi[s]
    return WalkMeasure(cocycle.spec, out, n=1)


# ------------------------------------------------------------ periodic sums

def periodic_sum(system, a, n, mode="float"):
    """Diagonal return weight Z_a^n of the weight matrix (cycle weights)."""
    if n < 1:
        raise ValidationError("periodic sums need n >= 1")
    if mode == "rational":
        P = system.trans
        m = system.m
        acc = [[Fraction(1) if i == j else Fraction(0) for j in range(m)] for i in range(m)]
        for _ in range(n):
            acc = [[sum(acc[i][k] * P[k][j] for k in range(m)) for j in range(m)]
                   for i in range(m)]
        return acc[a][a]
    return float(np.linalg.matrix_power(system.trans_float, n)[a, a])


def pn_one(system, a, n, mode="float"):
    """Normalization of the base-cylinder walk measure.

    With the periodic reference point this equals Z_a^n; the identity is
    asserted in tests rather than assumed silently elsewhere.
    """
    return periodic_sum(system, a, n, mode)


def _grouped_engine(system, cocycle, a, n, mode, max_cells):
    seed = (a, cocycle.value(a))
    eng = _make_engine(system, cocycle, n, mode, max_cells=max_cells, seed_entry=seed)
    for _ in range(n - 1):
        eng.step_once()
    return eng


def grouped_periodic_sum(system, cocycle, a, n, mode="rational",
                         max_cells=DEFAULT_MAX_CELLS):
    """Per-element table Z_{a, g}^n of weighted period-n returns through a."""
    if n < 1:
        raise ValidationError("periodic sums need n >= 1")
    cocycle.check_total(system.m)
    eng = _grouped_engine(system, cocycle, a, n, mode, max_cells)
    trans = system.trans if mode == "rational" else system.trans_float
    table = eng.to_table()
    out = {}
    for (s, g), w in table.data.items():
        out[g] = out.get(g, 0) + w * trans[s][a]
    return out


def grouped_return_sequence(system, cocycle, a, n_max, mode="float",
                            max_cells=DEFAULT_MAX_CELLS):
    """Z_{a,e}^n for n = 1..n_max in one forward pass."""
    cocycle.check_total(system.m)
    e = cocycle.spec.identity()
    trans = system.trans if mode == "rational" else system.trans_float
    seed = (a, cocycle.value(a))
    eng = _make_engine(system, cocycle, n_max, mode, max_cells=max_cells, seed_entry=seed)
    out = []
    for n in range(1, n_max + 1):
        z = sum(eng.joint_mass_at(s, e) * trans[s][a] for s in range(system.m))
        out.append(z)
        if n < n_max:
            eng.step_once()
    return out


def walk_measure(system, cocycle, a, n, mode="rational",
                 max_cells=DEFAULT_MAX_CELLS) -> WalkMeasure:
    """Base-cylinder walk measure m_n = Z_{a, .}^n / Z_a^n."""
    table = grouped_periodic_sum(system, cocycle, a, n, mode, max_cells)
    total = sum(table.values())
    if total == 0:
        raise ValidationError(f"no period-{n} return words through symbol {a}")
    return WalkMeasure(cocycle.spec, {g: w / total for g, w in table.items()}, n, a)


# ------------------------------------------------------- generating period

@dataclass
class PeriodReport:
    s: int | None
    missing_by_s: dict
    return_period: int | None
    note: str = ""


def generating_period(measures, gen_set, s_max, return_horizon=16) -> PeriodReport:
    """Smallest s with supp(measure_s) covering a chosen semigroup generating set.

    ``measures`` maps s >= 1 to a WalkMeasure (callable or sequence).  The
    report also carries the return period (gcd of identity-return times) of
    the found measure, since walks may hit the identity only along a stride.
    """
    gen_set = [tuple(g) for g in gen_set]
    get = measures if callable(measures) else (lambda i: measures[i - 1])
    missing_by_s = {}
    found = None
    for s in range(1, s_max + 1):
        m = get(s)
        supp = m.support()
        missing = [g for g in gen_set if g not in supp]
        missing_by_s[s] = missing
        if not missing:
            found = s
            break
    if found is None:
        return PeriodReport(None, missing_by_s, None,
                            note=f"no s <= {s_max} covers the generating set")
    m = get(found).as_float()
    spec = m.spec
    e = spec.identity()
    conv = {e: 1.0}
    returns = []
    for k in range(1, return_horizon + 1):
        conv = sparse_convolve(conv, m.masses, spec)
        if conv.get(e, 0.0) > 0:
            returns.append(k)
    period = math.gcd(*returns) if returns else None
    return PeriodReport(found, missing_by_s, period)


# ------------------------------------------------- convolution spectral radius


@dataclass
class ConvolutionReport:
    ks: list                     # k with positive return mass
    returns: list                # the masses themselves
    kth_roots: list
    stride_ratios: list          # ((r_{k+s}/r_k))^{1/s} indexed like ks[:-1]
    stride: int
    fekete_lower: float
    estimate: float              # headline: last stride ratio
    note: str = ""

    def rows(self):
        out = []
        for i, k in enumerate(self.ks):
            sr = self.stride_ratios[i] if i < len(self.stride_ratios) else ""
            out.append((k, self.returns[i], self.kth_roots[i], sr))
        return out


def spectral_radius_convolution(measure, k_max, stride=None, mode="float",
                                max_cells=DEFAULT_MAX_CELLS) -> ConvolutionReport:
    """Convolution-power identity returns with root, ratio, and bracket views.

    Returns r_k = measure^{*k}(e) are superadditive (r_{j+k} >= r_j r_k), so
    max_p log(r_p)/p is a rigorous lower bound for log of the spectral radius;
    the stride ratio (r_{k+s}/r_k)^{1/s} is the headline estimate since its
    bias decays like 1/k instead of log(k)/k.
    """
    eng = make_conv_engine(measure.spec, measure.masses, k_max + (stride or 2),
                           mode, max_cells)
    returns_all = []
    top = k_max + (stride or 2)
    for _ in range(top):
        eng.step_once()
        returns_all.append(float(eng.identity_mass()))
    positive = [k for k in range(1, top + 1) if returns_all[k - 1] > 0]
    if not positive:
        return ConvolutionReport([], [], [], [], 0, -math.inf, math.nan,
                                 note=f"no identity returns up to k={top}")
    s = stride if stride is not None else math.gcd(*positive)
    ks = [k for k in positive if k <= k_max]
    rs = [returns_all[k - 1] for k in ks]
    roots = [r ** (1.0 / k) for k, r in zip(ks, rs)]
    ratios = []
    for k, r in zip(ks, rs):
        nxt = returns_all[k + s - 1] if k + s <= top else None
        if nxt and r > 0:
            ratios.append((nxt / r) ** (1.0 / s))
    lower = max(math.log(r) / k for k, r in zip(ks, rs))
    estimate = ratios[-1] if ratios else roots[-1]
    return ConvolutionReport(ks, rs, roots, ratios, s, math.exp(lower), estimate)


# ------------------------------------------------- moment generating function

def _atoms_arrays(mbar: WalkMeasure):
    atoms = sorted(mbar.masses)
    V = np.array(atoms, dtype=float).reshape(len(atoms), -1)
    w = np.array([float(mbar.masses[a]) for a in atoms])
    return V, w


def phi_value(mbar: WalkMeasure, x):
    """Moment generating function sum_v m(v) e^{<v, x>} with gradient and Hessian."""
    V, w = _atoms_arrays(mbar)
    x = np.asarray(x, dtype=float).reshape(-1)
    t = w * np.exp(V @ x)
    val = float(t.sum())
    grad = V.T @ t
    hess = (V.T * t) @ V
    return val, grad, hess


@dataclass
class MinimizerResult:
    x: np.ndarray
    phi: float
    grad_norm: float
    iterations: int
    attained: bool
    degenerate_directions: list = field(default_factory=list)
    note: str = ""

    def rows(self):
        return [tuple(self.x) + (self.phi, self.grad_norm)]


def minimize_phi(mbar: WalkMeasure, tol=1e-13, max_iter=200) -> MinimizerResult:
    """Damped Newton minimization of the moment generating function.

    The minimum is attained iff 0 lies in the relative interior of the convex
    hull of the support; that is certified by a small LP before iterating.
    Flat directions (support inside a hyperplane through 0) are projected out
    and reported; a support strictly inside a half-space yields a diagnostic
    instead of a result.
    """
    V, w = _atoms_arrays(mbar)
    k = V.shape[1]
    if k == 0 or V.shape[0] == 0:
        return MinimizerResult(np.zeros(k), float(w.sum()), 0.0, 0, True)
    # flat directions: phi only varies along span of the support vectors
    u_svd, sing, vt = np.linalg.svd(V, full_matrices=True)
    rank = int(np.sum(sing > 1e-12 * (sing[0] if sing.size else 1.0)))
    basis = vt[:rank].T            # k x r, orthonormal columns
    degenerate = [tuple(row) for row in vt[rank:]]
    Vr = V @ basis
    if rank > 0:
        nat = Vr.shape[0]
        # LP certificate: max delta s.t. sum lam_i v_i = 0, sum lam = 1, lam_i >= delta
        c = np.zeros(nat + 1)
        c[-1] = -1.0
        a_eq = np.zeros((rank + 1, nat + 1))
        a_eq[:rank, :nat] = Vr.T
        a_eq[rank, :nat] = 1.0
        b_eq = np.zeros(rank + 1)
        b_eq[rank] = 1.0
        a_ub = np.zeros((nat, nat + 1))
        a_ub[:, :nat] = -np.eye(nat)
        a_ub[:, -1] = 1.0
        res = linprog(c, A_ub=a_ub, b_ub=np.zeros(nat), A_eq=a_eq, b_eq=b_eq,
                      bounds=[(0, 1)] * nat + [(0, 1)], method="highs")
        if not res.success or -res.fun <= 1e-12:
            return MinimizerResult(
                np.zeros(k), math.nan, math.nan, 0, False, degenerate,
                note="support lies in a closed half-space: infimum not attained",
            )
    xr = np.zeros(rank)
    it = 0
    for it in range(1, max_iter + 1):
        t = w * np.exp(Vr @ xr)
        val = t.sum()
        grad = Vr.T @ t
        gn = float(np.linalg.norm(grad))
        if gn <= tol:
            break
        hess = (Vr.T * t) @ Vr
        try:
            d = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            d = np.linalg.solve(hess + 1e-12 * np.eye(rank), -grad)
        step = 1.0
        while step > 1e-14:
            cand = float(np.sum(w * np.exp(Vr @ (xr + step * d))))
            if cand <= val + 0.3 * step * float(grad @ d):
                break
            step *= 0.5
        xr = xr + step * d
    x = basis @ xr
    val, grad, _ = phi_value(mbar, x)
    return MinimizerResult(x, val, float(np.linalg.norm(grad)), it, True, degenerate)


# ------------------------------------------------------------- Fekete bracket

@dataclass
class FeketeBracket:
    lower: float
    estimate: float
    holds: bool
    violations: list
    upper: float = math.inf

    def contains(self, x):
        return self.lower - 1e-12 <= x <= self.upper + 1e-12

    def overlaps(self, other):
        return max(self.lower, other.lower) <= min(self.upper, other.upper) + 1e-12

    def rows(self):
        return [(0, "fekete_lower", self.lower, self.estimate, 0.0)]


def fekete_limit(a_seq, log_c, ns=None, slack=1e-9, upper=math.inf) -> FeketeBracket:
    """Limit bracket for an almost-superadditive sequence.

    Requires a_{n+m} >= a_n + a_m + log_c on the index range (violations are
    collected and reported); each index then gives the rigorous lower bound
    (a_p + log_c)/p for the limit of a_n/n, and the largest index gives the
    running estimate.  An a-priori upper bound (e.g. 0 for log-masses) closes
    the bracket from above.
    """
    if ns is None:
        ns = list(range(1, len(a_seq) + 1))
    vals = dict(zip(ns, a_seq))
    violations = []
    for n in ns:
        for m in ns:
            if n + m in vals:
                if vals[n + m] < vals[n] + vals[m] + log_c - slack:
                    violations.append((n, m, vals[n + m], vals[n] + vals[m] + log_c))
    lower = max((vals[p] + log_c) / p for p in ns)
    top = max(ns)
    return FeketeBracket(lower, vals[top] / top, not violations, violations, upper)


# --------------------------------------------------------- pressure estimates

@dataclass
class PressureReport:
    kind: str
    ns: dict                      # estimator -> list of n with positive mass
    values: dict                  # estimator -> list of (1/n) log(value)
    brackets: dict                # estimator -> FeketeBracket
    estimates: dict               # estimator -> value at largest valid n
    transitive: bool
    note: str = ""

    def rows(self):
        out = []
        for name in self.ns:
            br = self.brackets[name]
            for n, v in zip(self.ns[name], self.values[name]):
                out.append((n, name, v, br.lower))
        return out


def pressure_estimate(kind, system, cocycle, a, n_max, mode="float",
                      max_cells=DEFAULT_MAX_CELLS) -> PressureReport:
    """Growth-rate report for the chosen periodic/return sequence family.

    kind 'base' uses the plain diagonal weights (identically pressure 0 for
    stochastic weights); 'extension' pairs the identity-filtered periodic
    sums with the identity return masses, two estimators that must bracket
    the same limit; 'abelianized' filters through the abelianized cocycle.
    """
    if kind not in ("base", "extension", "abelianized"):
        raise ValidationError(f"unknown pressure kind {kind!r}")
    seqs = {}
    log_cs = {}
    if kind == "base":
        zs = [periodic_sum(system, a, n, mode) for n in range(1, n_max + 1)]
        seqs["periodic"] = zs
        log_cs["periodic"] = 0.0
    else:
        coc = cocycle if kind == "extension" else cocycle.abelianized()
        zs = grouped_return_sequence(system, coc, a, n_max, mode, max_cells)
        seqs["grouped_periodic"] = zs
        # cycles through the same base concatenate with no loss
        log_cs["grouped_periodic"] = 0.0
        if kind == "extension":
            mu = return_sequence(system, coc, n_max, mode, max_cells=max_cells)[1:]
            seqs["return_mass"] = mu
            log_cs["return_mass"] = -2.0 * math.log(float(system.gibbs_constant))
    transitive = any(float(v) > 0 for v in next(iter(seqs.values())))
    ns, values, brackets, estimates = {}, {}, {}, {}
    for name, zs in seqs.items():
        valid = [(n, float(z)) for n, z in zip(range(1, n_max + 1), zs) if float(z) > 0]
        if not valid:
            ns[name], values[name] = [], []
            brackets[name] = FeketeBracket(-math.inf, math.nan, False, [])
            estimates[name] = math.nan
            continue
        nlist = [n for n, _ in valid]
        logs = [math.log(z) for _, z in valid]
        ns[name] = nlist
        values[name] = [l / n for n, l in zip(nlist, logs)]
        # masses and cycle weights never exceed 1, so the limit is <= 0
        brackets[name] = fekete_limit(logs, log_cs[name], nlist, upper=0.0)
        estimates[name] = values[name][-1]
    note = "" if transitive else "no identity returns found: extension may not be transitive"
    return PressureReport(kind, ns, values, brackets, estimates, transitive, note)


# ------------------------------------------------------------ Kesten identity

@dataclass
class KestenReport:
    convolution: ConvolutionReport
    minimizer: MinimizerResult
    difference: float
    bracket_width: float
    consistent: bool

    def rows(self):
        return [(self.convolution.ks[-1] if self.convolution.ks else 0,
                 "kesten_difference", self.difference, self.bracket_width,
                 0.0 if self.consistent else 1.0)]


def kesten_identity_check(measure: WalkMeasure, k_max=30, stride=None,
                          mode="float", max_cells=DEFAULT_MAX_CELLS) -> KestenReport:
    """Convolution spectral radius against the abelianized minimum.

    For amenable finitely generated targets the two agree in the limit; the
    report compares the stride-ratio estimate at k_max with the minimized
    abelianized moment generating function, using the convolution bracket
    width as the self-declared accuracy.
    """
    conv = spectral_radius_convolution(measure, k_max, stride, mode, max_cells)
    mini = minimize_phi(measure.abelianized().as_float())
    diff = abs(conv.estimate - mini.phi)
    width = abs(conv.estimate - conv.fekete_lower)
    return KestenReport(conv, mini, diff, width, diff <= width + 1e-9)


# ------------------------------------------------- normalized superadditivity

@dataclass
class PhiTildeReport:
    indices: list
    n_list: list
    phi_values: list              # phi_i(x_i)
    pn_values: list               # P_{n_i}(1)
    rate_sequence: list           # (1/n_i) log phi_i(x_i)
    constant: float
    violations: list
    holds: bool

    def rows(self):
        return [(n, "phi_min", p, r, 0.0) for n, p, r in
                zip(self.n_list, self.phi_values, self.rate_sequence)]


def phi_tilde_check(system, cocycle, a, i_range, s=1, mode="float",
                    max_cells=DEFAULT_MAX_CELLS, rel_slack=1e-9) -> PhiTildeReport:
    """Superadditivity of the normalized minimized walk-measure transforms.

    For indices i in range, phi_i is the abelianized moment generating
    function of the walk measure at n_i = i*s and x_i its minimizer; the
    products P_{n_i}(1) * phi_i(x_i) must be superadditive up to the squared
    inverse Gibbs constant (exactly, with constant 1, for Bernoulli weights).
    """
    indices = sorted(int(i) for i in i_range)
    phis, pns = {}, {}
    for i in indices:
        n = i * s
        m = walk_measure(system, cocycle, a, n, mode, max_cells).as_float()
        res = minimize_phi(m.abelianized())
        if not res.attained:
            raise ValidationError(f"minimizer not attained at i={i}")
        phis[i] = res.phi
        pns[i] = float(pn_one(system, a, n, mode="float"))
    const = 1.0 if system.is_bernoulli else float(1 / system.gibbs_constant ** 2)
    tilde = {i: pns[i] * phis[i] for i in indices}
    violations = []
    for i in indices:
        for j in indices:
            if i + j in tilde:
                lhs = tilde[i + j]
                rhs = const * tilde[i] * tilde[j]
                if lhs < rhs * (1 - rel_slack):
                    violations.append((i, j, lhs, rhs))
    rates = [math.log(phis[i]) / (i * s) for i in indices]
    return PhiTildeReport(indices, [i * s for i in indices],
                          [phis[i] for i in indices], [pns[i] for i in indices],
                          rates, const, violations, not violations)
