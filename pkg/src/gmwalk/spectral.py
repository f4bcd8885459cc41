"""Twisted transition matrices over character grids, and what they imply.

A character theta of the (internal) lattice Z^d twists the transition matrix
entrywise by the phase of the destination symbol's increment:

    B_theta[s', s] = p(s -> s') * exp(i <theta, v(s')>),

consistent with increments multiplying on the left.  Its leading eigenvalue
at theta = 0 is 1 (stochasticity); strict contraction away from 0 is exactly
aperiodicity of the twisted family.

Normalization conventions used throughout:

* lattice targets integrate over the torus with plain d(theta), so the
  full-ball value at d = 1 is the inversion identity 2*pi*mu^n(0);
* embedded targets integrate along the pulled-back real dual line with
  dt/(2*pi), so window masses compare as mu^n(E) ~ u_n * vol(E).
"""

from __future__ import annotations

import cmath
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ValidationError
from .gm_system import check_symmetry
from .groups import EmbeddedRealLattice, IntegerLattice
from .walkdist import distribution, mass_trajectory, window_mass

NEAR_DEGENERATE_GAP = 1e-6


def _lattice_dim(cocycle):
    spec = cocycle.spec
    if isinstance(spec, (IntegerLattice, EmbeddedRealLattice)):
        return spec.key_size
    raise ValidationError(f"character methods need a lattice target, got {spec!r}")


def perturbed_matrix(system, cocycle, theta) -> np.ndarray:
    """Twisted transition matrix B[s', s] = p(s -> s') e^{i<theta, v(s')>}."""
    d = _lattice_dim(cocycle)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (d,):
        raise ValidationError(f"theta must have {d} components")
    m = system.m
    phases = np.array(
        [cmath.exp(1j * float(np.dot(theta, cocycle.value(s)))) for s in range(m)]
    )
    return (system.trans_float * phases[None, :]).T.astype(complex)


def leading_eigenvalue(matrix) -> tuple[complex, float]:
    """Maximal-modulus eigenvalue and the modulus ratio to the runner-up.

    Dense solve for small matrices, power iteration with one deflation step
    beyond 64 states.  A ratio within 1e-6 of 1 flags near-degeneracy.
    """
    m = matrix.shape[0]
    if m <= 64:
        eig = np.linalg.eigvals(matrix)
        order = np.argsort(-np.abs(eig))
        lam = complex(eig[order[0]])
        second = abs(eig[order[1]]) if m > 1 else 0.0
    else:
        lam, vec = _power_iteration(matrix)
        deflated = matrix - lam * np.outer(vec, vec.conj())
        lam2, _ = _power_iteration(deflated)
        second = abs(lam2)
    ratio = second / abs(lam) if lam else math.inf
    if 1 - ratio < NEAR_DEGENERATE_GAP:
        warnings.warn("near-degenerate leading eigenvalues", RuntimeWarning, stacklevel=2)
    return lam, ratio


def _power_iteration(matrix, iters=2000, tol=1e-14):
    rng = np.random.default_rng(7)
    v = rng.standard_normal(matrix.shape[0]) + 1j * rng.standard_normal(matrix.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = matrix @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v
        w /= nw
        new_lam = (w.conj() @ (matrix @ w)) / (w.conj() @ w)
        if abs(new_lam - lam) < tol:
            return complex(new_lam), w
        lam, v = new_lam, w
    return complex(lam), v


def eigenvalue_at(system, cocycle, theta):
    if system.is_bernoulli:
        # the twisted matrix has identical columns, so its only nonzero
        # eigenvalue is the trace: exact, and free of the sqrt(eps) noise a
        # generic eigensolve puts on the defective zero eigenvalue
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        lam = sum(
            float(system.pi_float[s])
            * cmath.exp(1j * float(np.dot(theta, cocycle.value(s))))
            for s in range(system.m)
        )
        return lam, 0.0
    return leading_eigenvalue(perturbed_matrix(system, cocycle, theta))


@dataclass
class ScanReport:
    resolution: int
    epsilon: float
    max_modulus: float
    argmax_theta: tuple
    passed: bool
    algebraic_full: bool | None = None

    def rows(self):
        return [(self.epsilon, "max_modulus_off_ball", self.max_modulus,
                 1.0, 1.0 - self.max_modulus)]


def aperiodicity_scan(system, cocycle, resolution=64, eps=0.1, workers=1) -> ScanReport:
    """Max twisted leading-eigenvalue modulus outside the eps-ball around 0.

    The torus grid is augmented with exact points on the eps-sphere (d <= 2),
    so the reported maximum includes the boundary of the excluded ball.
    Passes iff the maximum stays below 1 - 1e-9.
    """
    d = _lattice_dim(cocycle)
    if resolution < 16:
        raise ValidationError("resolution must be >= 16 per dimension")
    if d > 2:
        raise ValidationError("grid scans are implemented for d <= 2")
    axes = [2 * math.pi * np.arange(resolution) / resolution] * d
    pts = []
    for idx in np.ndindex(*(resolution,) * d):
        theta = np.array([axes[i][idx[i]] for i in range(d)])
        wrapped = np.where(theta > math.pi, theta - 2 * math.pi, theta)
        if np.linalg.norm(wrapped) >= eps:
            pts.append(theta)
    if d == 1:
        pts.append(np.array([eps]))
        pts.append(np.array([2 * math.pi - eps]))
    else:
        for t in np.linspace(0, 2 * math.pi, 4 * resolution, endpoint=False):
            pts.append(np.array([eps * math.cos(t), eps * math.sin(t)]) % (2 * math.pi))

    def mod_at(theta):
        lam, _ = eigenvalue_at(system, cocycle, theta)
        return abs(lam)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                mods = list(ex.map(mod_at, pts))
        else:
            mods = [mod_at(t) for t in pts]
    imax = int(np.argmax(mods))
    from .gm_system import check_aperiodicity_algebraic

    alg = None
    try:
        alg = check_aperiodicity_algebraic(system, cocycle).full
    except ValidationError:
        pass
    return ScanReport(
        resolution, eps, float(mods[imax]), tuple(float(x) for x in pts[imax]),
        mods[imax] < 1 - 1e-9, alg,
    )


def eigenvalue_grid(system, cocycle, resolution=64):
    """Rows (theta..., Re lambda, Im lambda, runner-up ratio) over the torus grid."""
    d = _lattice_dim(cocycle)
    if d > 2:
        raise ValidationError("grid scans are implemented for d <= 2")
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for idx in np.ndindex(*(resolution,) * d):
            theta = tuple(2 * math.pi * i / resolution for i in idx)
            lam, gap = eigenvalue_at(system, cocycle, theta)
            rows.append(theta + (lam.real, lam.imag, gap))
    return rows


def _charfn_matrix(system, cocycle, theta, n):
    B = perturbed_matrix(system, cocycle, theta)
    v = system.pi_float.astype(complex)
    for _ in range(n):
        v = B @ v
    return complex(v.sum())


def _charfn_table(table, cocycle, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = 0j
    for g, w in table.group_masses().items():
        out += float(w) * cmath.exp(1j * float(np.dot(theta, g)))
    return out


def characteristic_function(system, cocycle, theta, n, check=True, tol=1e-10,
                            table=None) -> complex:
    """E[character(n-step product)] via twisted matrix powers.

    With ``check`` the value is recomputed as a direct sum over the n-step
    law; disagreement beyond ``tol`` raises, as the two paths are independent.
    """
    val = _charfn_matrix(system, cocycle, theta, n)
    if check:
        if table is None:
            table = distribution(system, cocycle, n, mode="float")
        ref = _charfn_table(table, cocycle, theta)
        if abs(val - ref) > tol:
            raise ConsistencyError(
                f"characteristic function paths disagree at theta={theta}: "
                f"{val} vs {ref}"
            )
    return val


@dataclass
class FourierInversion:
    g: tuple
    n: int
    grid_size: int
    value: float
    aliasing_risk: bool
    reference: float | None = None
    deviation: float | None = None

    def rows(self):
        return [(self.n, "fourier_inverted_mass", self.value,
                 self.reference if self.reference is not None else "",
                 self.deviation if self.deviation is not None else "")]


def fourier_invert(system, cocycle, g, n, grid_size, compare=False) -> FourierInversion:
    """Point mass by trapezoid quadrature of the inversion integral.

    The integrand is a trigonometric polynomial of degree <= n*R, so the
    uniform M-point rule is exact up to floating error once M > 2nR + 1;
    smaller grids are flagged as aliasing risks.
    """
    d = _lattice_dim(cocycle)
    g = tuple(g)
    R = max(max(abs(c) for c in v) if v else 0 for v in cocycle.values)
    aliasing = grid_size <= 2 * n * R + 1
    grids = [2 * math.pi * np.arange(grid_size) / grid_size] * d
    total = 0j
    for idx in np.ndindex(*(grid_size,) * d):
        theta = np.array([grids[i][idx[i]] for i in range(d)])
        phase = cmath.exp(-1j * float(np.dot(theta, g)))
        total += phase * _charfn_matrix(system, cocycle, theta, n)
    value = (total / grid_size ** d).real
    ref = dev = None
    if compare:
        traj = mass_trajectory(system, cocycle, [g], n, mode="float")
        ref = traj[n][0]
        dev = abs(value - ref)
    return FourierInversion(g, n, grid_size, float(value), aliasing, ref, dev)


# ------------------------------------------------------------- u_n integrals

def _adaptive_gl(f, a, b, rel_tol=1e-12, max_depth=48):
    """Adaptive 15-point Gauss-Legendre bisection to a relative tolerance."""
    nodes, weights = np.polynomial.legendre.leggauss(15)

    def panel(lo, hi):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        return half * sum(w * f(mid + half * x) for x, w in zip(nodes, weights))

    scale = abs(panel(a, b)) + 1e-300

    def recurse(lo, hi, whole, depth):
        mid = 0.5 * (lo + hi)
        left = panel(lo, mid)
        right = panel(mid, hi)
        if depth >= max_depth or abs(left + right - whole) <= rel_tol * scale:
            return left + right
        return recurse(lo, mid, left, depth + 1) + recurse(mid, hi, right, depth + 1)

    return recurse(a, b, panel(a, b), 0)


def _real_leading(system, cocycle, theta, sym_tol=1e-10):
    lam, _ = eigenvalue_at(system, cocycle, theta)
    if abs(lam.imag) > sym_tol * max(1.0, abs(lam)):
        raise ConsistencyError(
            f"leading eigenvalue {lam} is not real at theta={theta}: "
            "the symmetry hypothesis fails"
        )
    return lam.real


def u_n_integral(system, cocycle, eta, n, rel_tol=1e-12) -> float:
    """Integral of the n-th power of the leading eigenvalue over the eta-ball.

    Lattice targets (d = 1) use plain d(theta); embedded targets integrate
    along the real dual line with dt/(2*pi).  Non-real eigenvalues beyond
    1e-10 raise, since reality is what the symmetry hypothesis buys.
    """
    if eta <= 0:
        raise ValidationError("eta must be positive")
    spec = cocycle.spec
    if isinstance(spec, EmbeddedRealLattice):
        if spec.ambient_dim != 1:
            raise ValidationError("embedded u_n integrals support ambient dimension 1")
        beta = np.array([row[0] for row in spec.basis])

        def f(t):
            return _real_leading(system, cocycle, (t * beta) % (2 * math.pi)) ** n

        return float(_adaptive_gl(f, -eta, eta, rel_tol) / (2 * math.pi))
    d = _lattice_dim(cocycle)
    if d == 1:
        if eta > math.pi + 1e-12:
            raise ValidationError("eta must be <= pi on the torus")

        def f(t):
            return _real_leading(system, cocycle, (t % (2 * math.pi),)) ** n

        return float(_adaptive_gl(f, -eta, eta, rel_tol))
    if d == 2:
        def radial(r):
            def angular(t):
                theta = np.array([r * math.cos(t), r * math.sin(t)]) % (2 * math.pi)
                return _real_leading(system, cocycle, theta) ** n

            return r * _adaptive_gl(angular, 0.0, 2 * math.pi, max(rel_tol, 1e-10))

        return float(_adaptive_gl(radial, 0.0, eta, max(rel_tol, 1e-10)))
    raise ValidationError("u_n integrals are implemented for d <= 2")


@dataclass
class LocalLimitReport:
    ns: list
    ratios: list
    deviations: list
    kind: str
    eta: float
    u_values: list

    def rows(self):
        out = [(n, f"local_limit_{self.kind}", r, 1.0, d)
               for n, r, d in zip(self.ns, self.ratios, self.deviations)]
        out += [(n, "u_n", u, self.eta, "") for n, u in zip(self.ns, self.u_values)]
        return out


def local_limit_check(system, cocycle, n_grid, g=None, E=None, eta=0.5) -> LocalLimitReport:
    """Normalized point or window masses against the eigenvalue integral.

    Discrete d=1 targets: mu^n(g) * 2*pi / u_n(pi) -> 1.
    Embedded windows:     mu^n(E + g) / (u_n(eta) * vol(E)) -> 1.
    """
    ns = sorted(int(n) for n in n_grid)
    spec = cocycle.spec
    ratios = []
    u_values = []
    if E is None:
        if g is None:
            raise ValidationError("need a point g or a window E")
        if not isinstance(spec, IntegerLattice) or spec.key_size != 1:
            raise ValidationError("point local limits are implemented for Z targets")
        eta = math.pi
        traj = mass_trajectory(system, cocycle, [tuple(g)], ns[-1], mode="float")
        for n in ns:
            un = u_n_integral(system, cocycle, eta, n)
            u_values.append(un)
            ratios.append(traj[n][0] * 2 * math.pi / un)
        kind = "point"
    else:
        if not isinstance(spec, EmbeddedRealLattice):
            raise ValidationError("window experiments require an embedded real lattice")
        from .walkdist import _as_box, box_volume

        box = _as_box(E, spec.ambient_dim)
        vol = box_volume(box)
        for n in ns:
            wm = window_mass(system, cocycle, box, n, g_shift=g, mode="float")
            un = u_n_integral(system, cocycle, eta, n)
            u_values.append(un)
            ratios.append(wm.value / (un * vol))
        kind = "window"
    devs = [abs(r - 1.0) for r in ratios]
    return LocalLimitReport(ns, ratios, devs, kind, eta, u_values)


@dataclass
class RealityReport:
    max_imag: float
    argmax_theta: tuple
    passed: bool
    symmetry_ok: bool | None

    def rows(self):
        return [(0, "max_imag_lambda", self.max_imag, 0.0, self.max_imag)]


def symmetry_reality_check(system, cocycle, involution=None, grid_size=128,
                           tol=1e-10) -> RealityReport:
    """Largest imaginary part of the leading eigenvalue over a torus grid."""
    d = _lattice_dim(cocycle)
    if d > 2:
        raise ValidationError("grid scans are implemented for d <= 2")
    sym_ok = None
    if involution is not None:
        sym_ok = bool(check_symmetry(system, cocycle, involution))
    worst = 0.0
    argmax = (0.0,) * d
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for idx in np.ndindex(*(grid_size,) * d):
            theta = tuple(2 * math.pi * i / grid_size for i in idx)
            lam, _ = eigenvalue_at(system, cocycle, theta)
            if abs(lam.imag) > worst:
                worst = abs(lam.imag)
                argmax = theta
    return RealityReport(worst, argmax, worst <= tol, sym_ok)
