import math
from fractions import Fraction

import numpy as np
import pytest

from gmwalk import oracle, presets, pressure
from gmwalk.errors import ValidationError
from gmwalk.groups import IntegerLattice


def test_periodic_sum_uniform_bernoulli():
    sys_, _, _ = presets.trinomial()
    for n in (1, 3, 7):
        assert pressure.periodic_sum(sys_, 0, n, mode="rational") == Fraction(1, 3)
    assert pressure.periodic_sum(sys_, 1, 1, mode="rational") == Fraction(1, 3)


def test_periodic_sum_rate_vanishes_for_stochastic_weights():
    sys_, _, _ = presets.two_state_markov()
    z = pressure.periodic_sum(sys_, 0, 400, mode="float")
    assert abs(math.log(z) / 400) < 0.01


def test_grouped_periodic_partition_identity():
    for name in ("trinomial", "cyclic3", "heisenberg_symmetric"):
        sys_, coc, _ = presets.ALL_EXAMPLES[name]()
        for n in range(1, 8):
            table = pressure.grouped_periodic_sum(sys_, coc, 0, n, mode="rational")
            assert sum(table.values()) == pressure.periodic_sum(sys_, 0, n, mode="rational")
    # exact partition up to n = 12 on the two-symbol Markov example
    sys_, coc, _ = presets.two_state_markov()
    for n in range(1, 13):
        table = pressure.grouped_periodic_sum(sys_, coc, 0, n, mode="rational")
        assert sum(table.values()) == pressure.periodic_sum(sys_, 0, n, mode="rational")


def test_grouped_periodic_trinomial_identity_return():
    sys_, coc, _ = presets.trinomial()
    table = pressure.grouped_periodic_sum(sys_, coc, 0, 2, mode="rational")
    assert table[(0,)] == Fraction(1, 9)


def test_abelianized_sums_dominate():
    sys_, coc, _ = presets.heisenberg_symmetric()
    ab = coc.abelianized()
    for n in range(2, 9, 2):
        ze = pressure.grouped_periodic_sum(sys_, coc, 0, n, mode="rational")
        za = pressure.grouped_periodic_sum(sys_, ab, 0, n, mode="rational")
        e3 = coc.spec.identity()
        e2 = ab.spec.identity()
        assert za.get(e2, 0) >= ze.get(e3, 0)


def test_pn_one_equals_periodic_sum():
    # the periodic base point collapses the normalization onto the cycle weights
    for name in ("trinomial", "two_state_markov", "cyclic2"):
        sys_, coc, _ = presets.ALL_EXAMPLES[name]()
        for n in (1, 2, 5):
            assert pressure.pn_one(sys_, 0, n, mode="rational") == \
                pressure.periodic_sum(sys_, 0, n, mode="rational")


def test_walk_measure_against_oracle():
    for name in ("trinomial", "two_state_markov", "heisenberg_asymmetric"):
        sys_, coc, _ = presets.ALL_EXAMPLES[name]()
        for n in (1, 2, 4, 6):
            ref = oracle.oracle_walk_measure(sys_, coc, 0, n)
            got = pressure.walk_measure(sys_, coc, 0, n, mode="rational")
            assert got.masses == ref.value["measure"]
            assert pressure.pn_one(sys_, 0, n, mode="rational") == ref.value["pn_one"]


def test_walk_measure_point_mass_at_step_one():
    sys_, coc, _ = presets.trinomial()
    m = pressure.walk_measure(sys_, coc, 0, 1)
    assert m.masses == {coc.value(0): Fraction(1)}


def test_walk_measure_uniform_is_conditioned_counting():
    sys_, coc, _ = presets.trinomial()
    m = pressure.walk_measure(sys_, coc, 0, 4, mode="rational")
    t = sum(m.masses.values())
    assert t == 1
    # uniform weights make the measure proportional to word counts
    counts = {}
    import itertools

    for w in itertools.product(range(3), repeat=4):
        if w[0] != 0:
            continue
        g = coc.word_value(w)
        counts[g] = counts.get(g, 0) + 1
    total = sum(counts.values())
    assert m.masses == {g: Fraction(c, total) for g, c in counts.items()}


def test_one_step_law():
    sys_, coc, _ = presets.asymmetric_z()
    law = pressure.one_step_law(sys_, coc)
    assert law.masses == {(1,): Fraction(3, 10), (-1,): Fraction(7, 10)}


def test_generating_period_with_step_laws():
    # searched over unconditioned step-n laws
    sys_, coc, _ = presets.trinomial()
    laws = lambda n: pressure.WalkMeasure(
        coc.spec,
        __import__("gmwalk.walkdist", fromlist=["distribution"])
        .distribution(sys_, coc, n, mode="rational").group_masses(), n)
    rep = pressure.generating_period(laws, [(-1,), (0,), (1,)], 5)
    assert rep.s == 1 and rep.return_period == 1
    sw, swc, _ = presets.simple_walk()
    laws2 = lambda n: pressure.WalkMeasure(
        swc.spec,
        __import__("gmwalk.walkdist", fromlist=["distribution"])
        .distribution(sw, swc, n, mode="rational").group_masses(), n)
    rep2 = pressure.generating_period(laws2, [(1,), (-1,)], 5)
    assert rep2.s == 1 and rep2.return_period == 2
    c3, c3c, _ = presets.cyclic3()
    laws3 = lambda n: pressure.WalkMeasure(
        c3c.spec,
        __import__("gmwalk.walkdist", fromlist=["distribution"])
        .distribution(c3, c3c, n, mode="rational").group_masses(), n)
    rep3 = pressure.generating_period(laws3, [(0,), (1,), (2,)], 5)
    assert rep3.s == 1


def test_generating_period_with_base_cylinder_measures():
    sys_, coc, _ = presets.heisenberg_symmetric()
    ms = lambda n: pressure.walk_measure(sys_, coc, 0, n, mode="rational")
    rep = pressure.generating_period(ms, coc.values, 6)
    # depth 1 and 2 measures miss generators; depth 3 covers all four
    assert rep.s == 3
    assert rep.missing_by_s[1] and rep.missing_by_s[2]


def test_spectral_radius_symmetric_walk_roots_increase_to_one():
    sys_, coc, _ = presets.simple_walk()
    law = pressure.one_step_law(sys_, coc, mode="float")
    rep = pressure.spectral_radius_convolution(law, 60)
    assert rep.stride == 2
    assert all(b >= a - 1e-12 for a, b in zip(rep.kth_roots, rep.kth_roots[1:]))
    assert rep.kth_roots[-1] < 1.0 <= rep.estimate + 0.05
    assert rep.fekete_lower <= 1.0


def test_spectral_radius_asymmetric_closed_form():
    sys_, coc, _ = presets.asymmetric_z()
    law = pressure.one_step_law(sys_, coc, mode="float")
    rep = pressure.spectral_radius_convolution(law, 400)
    target = 2 * math.sqrt(0.21)
    assert rep.estimate == pytest.approx(target, abs=2e-3)
    assert rep.fekete_lower <= target + 1e-12
    # superadditive returns: every k-th root sits at or below the Fekete bound
    assert all(r <= rep.fekete_lower + 1e-12 for r in rep.kth_roots)


def test_spectral_radius_rational_matches_float():
    sys_, coc, _ = presets.trinomial()
    law_r = pressure.one_step_law(sys_, coc, mode="rational")
    law_f = pressure.one_step_law(sys_, coc, mode="float")
    rr = pressure.spectral_radius_convolution(law_r, 12, mode="rational")
    rf = pressure.spectral_radius_convolution(law_f, 12, mode="float")
    for a, b in zip(rr.returns, rf.returns):
        assert float(a) == pytest.approx(b, rel=1e-12)


def test_phi_value_examples():
    m = pressure.WalkMeasure(IntegerLattice(1), {(1,): 0.3, (-1,): 0.7})
    val, grad, hess = pressure.phi_value(m, (0.0,))
    assert val == pytest.approx(1.0)
    x_star = 0.5 * math.log(7 / 3)
    val2, grad2, _ = pressure.phi_value(m, (x_star,))
    assert val2 == pytest.approx(2 * math.sqrt(0.21), rel=1e-12)
    assert abs(grad2[0]) <= 1e-12
    sym = pressure.WalkMeasure(IntegerLattice(1), {(1,): 0.5, (-1,): 0.5})
    for x in (0.3, 1.1):
        assert pressure.phi_value(sym, (x,))[0] == pytest.approx(
            pressure.phi_value(sym, (-x,))[0], rel=1e-14
        )


def test_minimize_phi_symmetric_at_origin():
    sys_, coc, _ = presets.embedded4()
    law = pressure.one_step_law(sys_, coc, mode="float").abelianized()
    res = pressure.minimize_phi(law)
    assert res.attained
    assert np.linalg.norm(res.x) <= 1e-10
    assert res.phi == pytest.approx(1.0, abs=1e-12)


def test_minimize_phi_asymmetric_closed_form():
    m = pressure.WalkMeasure(IntegerLattice(1), {(1,): 0.3, (-1,): 0.7})
    res = pressure.minimize_phi(m)
    assert res.x[0] == pytest.approx(0.5 * math.log(7 / 3), abs=1e-12)
    assert res.phi == pytest.approx(2 * math.sqrt(0.21), abs=1e-12)
    assert res.grad_norm <= 1e-12


def test_minimize_phi_heisenberg_separable():
    sys_, coc, _ = presets.heisenberg_asymmetric()
    law = pressure.one_step_law(sys_, coc, mode="float").abelianized()
    res = pressure.minimize_phi(law)
    target = 2 * math.sqrt(0.04) + 2 * math.sqrt(0.06)
    assert res.phi == pytest.approx(target, abs=1e-12)
    assert res.grad_norm <= 1e-12


def test_minimize_phi_half_space_diagnostic():
    m = pressure.WalkMeasure(IntegerLattice(1), {(1,): 0.5, (2,): 0.5})
    res = pressure.minimize_phi(m)
    assert not res.attained
    assert "half-space" in res.note


def test_minimize_phi_degenerate_direction():
    m = pressure.WalkMeasure(IntegerLattice(2), {(1, 0): 0.5, (-1, 0): 0.5})
    res = pressure.minimize_phi(m)
    assert res.attained
    assert len(res.degenerate_directions) == 1
    assert res.grad_norm <= 1e-12


def test_gradient_matches_finite_differences_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        k = int(rng.integers(1, 4))
        nat = int(rng.integers(2, 7))
        atoms = set()
        while len(atoms) < nat:
            atoms.add(tuple(int(x) for x in rng.integers(-4, 5, size=k)))
        weights = rng.dirichlet(np.ones(nat))
        m = pressure.WalkMeasure(IntegerLattice(k), dict(zip(sorted(atoms), weights)))
        x = rng.normal(scale=0.5, size=k)
        _, grad, hess = pressure.phi_value(m, x)
        h = 1e-6
        for i in range(k):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (pressure.phi_value(m, xp)[0] - pressure.phi_value(m, xm)[0]) / (2 * h)
            assert abs(fd - grad[i]) <= 1e-6 * max(1.0, abs(grad[i]))
        assert np.linalg.eigvalsh(hess).min() >= -1e-12


def test_fekete_limit_examples():
    seq = [2 * n + (-1) ** n for n in range(1, 41)]
    br = pressure.fekete_limit(seq, -3.0)
    assert br.holds
    assert br.lower <= 2.0 <= br.estimate + 0.1
    bad = [-float(n) ** 2 for n in range(1, 15)]
    br2 = pressure.fekete_limit(bad, 0.0)
    assert not br2.holds and br2.violations


def test_fekete_limit_trinomial_returns():
    from gmwalk import walkdist

    sys_, coc, _ = presets.trinomial()
    seq = walkdist.return_sequence(sys_, coc, 40, mode="rational")[1:]
    logs = [math.log(float(v)) for v in seq]
    br = pressure.fekete_limit(logs, 0.0, upper=0.0)
    assert br.holds
    assert br.lower <= 0.0
    assert br.estimate == pytest.approx(math.log(float(seq[-1])) / 40)


def test_pressure_estimate_trinomial_limit_zero():
    sys_, coc, _ = presets.trinomial()
    rep = pressure.pressure_estimate("extension", sys_, coc, 0, 400)
    assert rep.transitive
    for name, est in rep.estimates.items():
        assert abs(est) < 0.02, name
        assert rep.brackets[name].contains(0.0)


def test_pressure_estimate_finite_target():
    sys_, coc, _ = presets.cyclic3()
    rep = pressure.pressure_estimate("extension", sys_, coc, 0, 150)
    assert abs(rep.estimates["return_mass"]) < 0.01


def test_pressure_estimate_base_kind():
    sys_, coc, _ = presets.two_state_markov()
    rep = pressure.pressure_estimate("base", sys_, coc, 0, 200)
    assert abs(rep.estimates["periodic"]) < 0.02


def test_kesten_symmetric_heisenberg_consistent():
    sys_, coc, _ = presets.heisenberg_symmetric()
    law = pressure.one_step_law(sys_, coc, mode="float")
    rep = pressure.kesten_identity_check(law, k_max=30)
    assert rep.minimizer.phi == pytest.approx(1.0, abs=1e-12)
    assert rep.consistent
    assert rep.convolution.fekete_lower <= 1.0


def test_kesten_classical_integer_walk():
    sys_, coc, _ = presets.asymmetric_z()
    law = pressure.one_step_law(sys_, coc, mode="float")
    rep = pressure.kesten_identity_check(law, k_max=200)
    assert rep.consistent
    assert rep.minimizer.phi == pytest.approx(2 * math.sqrt(0.21), abs=1e-12)
    assert rep.difference <= 5e-3


def test_pressure_estimate_non_transitive_diagnostic():
    from gmwalk.gm_system import Cocycle

    sys_, _, _ = presets.simple_walk()
    drift = Cocycle(IntegerLattice(1), ((1,), (2,)))   # never returns
    rep = pressure.pressure_estimate("extension", sys_, drift, 0, 20)
    assert not rep.transitive
    assert "transitive" in rep.note


def test_generating_period_exhaustion_diagnostic():
    sys_, coc, _ = presets.asymmetric_z()
    ms = lambda n: pressure.walk_measure(sys_, coc, 0, n, mode="rational")
    rep = pressure.generating_period(ms, [(7,)], 4)
    assert rep.s is None
    assert rep.missing_by_s[4] == [(7,)]
    assert "no s <=" in rep.note


def test_phi_tilde_bernoulli_exact():
    # base symbol 1 carries increment 0, so every walk measure is symmetric
    sys_, coc, _ = presets.trinomial()
    rep = pressure.phi_tilde_check(sys_, coc, 1, range(1, 7))
    assert rep.holds and rep.constant == 1.0
    # symmetric measures: every minimized value is 1, the rate sequence is 0
    for p, r in zip(rep.phi_values, rep.rate_sequence):
        assert p == pytest.approx(1.0, abs=1e-12)
        assert abs(r) <= 1e-12


def test_phi_tilde_requires_attained_minimizers():
    # base symbol 0 carries increment -1: the depth-1 measure is a point mass,
    # whose transform has no minimum
    sys_, coc, _ = presets.trinomial()
    with pytest.raises(ValidationError):
        pressure.phi_tilde_check(sys_, coc, 0, range(1, 3))


def test_phi_tilde_base_case_matches_oracle():
    # stride 3 is the first depth whose measures straddle the origin
    sys_, coc, _ = presets.asymmetric_z()
    rep = pressure.phi_tilde_check(sys_, coc, 0, range(1, 5), s=3)
    ref = oracle.oracle_walk_measure(sys_, coc, 0, 3)
    m1 = pressure.WalkMeasure(coc.spec,
                              {g: float(w) for g, w in ref.value["measure"].items()})
    res = pressure.minimize_phi(m1.abelianized())
    assert rep.phi_values[0] == pytest.approx(res.phi, rel=1e-12)
    assert rep.pn_values[0] == pytest.approx(float(ref.value["pn_one"]), rel=1e-12)
    assert rep.holds


def test_walk_measure_validation():
    sys_, coc, _ = presets.trinomial()
    with pytest.raises(ValidationError):
        pressure.walk_measure(sys_, coc, 0, 0)
