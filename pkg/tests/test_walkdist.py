import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from gmwalk import oracle, presets, walkdist
from gmwalk.convolve import heis_z_bound
from gmwalk.errors import ResourceLimitError, ValidationError
from gmwalk.gm_system import Cocycle, GibbsMarkovSystem
from gmwalk.groups import HeisenbergZ, left_product


def test_step_zero_seed_and_mass():
    sys_, coc, _ = presets.trinomial()
    t0 = walkdist.zero_table(sys_, coc)
    assert t0.n == 0
    assert t0.mass_at((0,)) == 1
    assert t0.state_marginal(3) == list(sys_.pi)
    t1 = walkdist.step(t0, sys_, coc)
    assert t1.n == 1
    assert t1.group_masses() == {(-1,): Fraction(1, 3), (0,): Fraction(1, 3),
                                 (1,): Fraction(1, 3)}


def test_two_step_trinomial_masses():
    sys_, coc, _ = presets.trinomial()
    t = walkdist.distribution(sys_, coc, 2)
    gm = t.group_masses()
    assert gm[(0,)] == Fraction(1, 3)
    assert gm[(2,)] == gm[(-2,)] == Fraction(1, 9)
    assert gm[(1,)] == gm[(-1,)] == Fraction(2, 9)


def test_heisenberg_two_step_return():
    sys_, coc, _ = presets.heisenberg_symmetric()
    t = walkdist.distribution(sys_, coc, 2)
    assert t.mass_at((0, 0, 0)) == Fraction(1, 4)


def test_trinomial_four_step_central_mass():
    sys_, coc, _ = presets.trinomial()
    t = walkdist.distribution(sys_, coc, 4)
    assert t.mass_at((0,)) == Fraction(19, 81)


def test_asymmetric_odd_step_has_no_return():
    sys_, coc, _ = presets.asymmetric_z()
    t = walkdist.distribution(sys_, coc, 7)
    assert t.mass_at((0,)) == 0


def test_cyclic3_one_step_uniform():
    sys_, coc, _ = presets.cyclic3()
    t = walkdist.distribution(sys_, coc, 1)
    assert t.group_masses() == {(0,): Fraction(1, 3), (1,): Fraction(1, 3),
                                (2,): Fraction(1, 3)}


@pytest.mark.parametrize("name", sorted(presets.ALL_EXAMPLES))
def test_mass_conservation_and_stationary_marginal(name):
    sys_, coc, _ = presets.ALL_EXAMPLES[name]()
    t = walkdist.distribution(sys_, coc, 7)
    assert t.total() == 1
    assert t.state_marginal(sys_.m) == list(sys_.pi)
    tf = walkdist.distribution(sys_, coc, 7, mode="float")
    assert abs(tf.total() - 1.0) <= 1e-12
    for a, b in zip(tf.state_marginal(sys_.m), sys_.pi_float):
        assert abs(a - b) <= 1e-12


def test_support_stays_in_word_ball():
    sys_, coc, _ = presets.heisenberg_symmetric()
    n = 8
    t = walkdist.distribution(sys_, coc, n)
    for g in t.support():
        assert abs(g[0]) + abs(g[1]) <= n
        assert abs(g[2]) <= n * n // 4 + n


@given(
    st.lists(st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2)),
             min_size=1, max_size=4),
    st.lists(st.integers(0, 3), min_size=1, max_size=12),
)
def test_heis_z_bound_dominates_every_word(atoms, word):
    word = [i % len(atoms) for i in word]
    g = left_product((atoms[i] for i in word), HeisenbergZ())
    assert abs(g[2]) <= heis_z_bound(atoms, len(word))


def test_mixed_heisenberg_increments_conserve_mass():
    # atoms that advance y while shearing outgrow the quarter-square budget,
    # so the box must switch to the triangular one (regression: mass leaked)
    sys_ = GibbsMarkovSystem.bernoulli([Fraction(1, 2), Fraction(1, 2)])
    coc = Cocycle(HeisenbergZ(), ((1, 1, 0), (-1, -1, 0)))
    exact = walkdist.distribution(sys_, coc, 20, mode="rational")
    dense = walkdist.distribution(sys_, coc, 20, mode="float")
    assert dense.total() == pytest.approx(1.0, abs=1e-12)
    ref = {k: float(v) for k, v in exact.group_masses().items()}
    got = dense.group_masses()
    assert set(ref) == set(got)
    assert all(abs(ref[k] - got[k]) <= 1e-15 for k in ref)


def test_left_order_matches_oracle_and_reversed_differs():
    sys_, coc, _ = presets.heisenberg_asymmetric()
    disagreed = False
    for n in range(1, 5):
        fast = walkdist.distribution(sys_, coc, n)
        fwd = oracle.oracle_distribution(sys_, coc, n)
        rev = oracle.oracle_distribution_reversed(sys_, coc, n)
        assert fast.data == fwd.data
        if fast.data != rev.data:
            disagreed = True
    assert disagreed


def test_ratio_sequence_basics():
    sys_, coc, _ = presets.trinomial()
    rep = walkdist.ratio_sequence(sys_, coc, (0,), [1], mode="rational")
    # one-step and two-step central masses are both exactly 1/3
    assert rep.ratios == [1.0]
    rep2 = walkdist.ratio_sequence(sys_, coc, (0,), [100, 200])
    assert rep2.deviations[0] > rep2.deviations[1]
    assert not rep2.periodic


def test_ratio_sequence_periodic_diagnostic():
    sys_, coc, _ = presets.simple_walk()
    rep = walkdist.ratio_sequence(sys_, coc, (0,), [10, 20], stride=2)
    assert rep.periodic
    assert "period" in rep.note
    assert rep.first_valid_n == 2          # first even return
    assert all(abs(r - 1) < 0.2 for r in rep.ratios)
    # stride 1 hits the parity zeros: the ratios collapse to 0
    rep1 = walkdist.ratio_sequence(sys_, coc, (0,), [10, 20], stride=1)
    assert rep1.periodic and all(r == 0.0 for r in rep1.ratios)


def test_cyclic3_ratio_converges_exponentially():
    sys_, coc, _ = presets.cyclic3()
    rep = walkdist.ratio_sequence(sys_, coc, (1,), [5, 30])
    assert rep.deviations[-1] <= 1e-12


def test_cross_ratio_identity_and_oracle():
    sys_, coc, _ = presets.trinomial()
    rep = walkdist.cross_ratio(sys_, coc, (0,), 17, mode="rational")
    assert rep.value == 1.0
    t10 = oracle.oracle_distribution(sys_, coc, 10)
    expected = t10.mass_at((1,)) / t10.mass_at((0,))
    rep2 = walkdist.cross_ratio(sys_, coc, (1,), 10, mode="rational")
    assert rep2.value == pytest.approx(float(expected), rel=1e-15)


def test_clt_reference_curve():
    sys_, coc, _ = presets.trinomial()
    rep = walkdist.cross_ratio(sys_, coc, (5,), 100)
    # per-step variance 2/3 gives the reference exp(-18.75/n)
    assert rep.clt_reference == pytest.approx(math.exp(-18.75 / 100), rel=1e-12)


def test_window_mass_examples():
    sys_, coc, _ = presets.embedded4()
    assert walkdist.window_mass(sys_, coc, (-0.5, 0.5), 1).value == 0.0
    assert walkdist.window_mass(sys_, coc, (-1.1, 1.1), 1).value == pytest.approx(0.5)
    # two-step masses against the exact sparse enumeration
    t2 = walkdist.distribution(sys_, coc, 2)
    spec = coc.spec
    expected = sum(
        float(w) for g, w in t2.group_masses().items() if -3 < spec.embed(g)[0] < 3
    )
    got = walkdist.window_mass(sys_, coc, (-3.0, 3.0), 2).value
    assert got == pytest.approx(expected, abs=1e-14)


def test_window_requires_embedded_lattice():
    sys_, coc, _ = presets.trinomial()
    with pytest.raises(ValidationError):
        walkdist.window_mass(sys_, coc, (-1.0, 1.0), 3)


def test_window_boundary_atom_flagged_and_strict():
    sys_, coc, _ = presets.embedded4()
    # the atom embedded exactly at 1.0 sits on the face of (-1, 1)
    rep = walkdist.window_mass(sys_, coc, (-1.0, 1.0), 1)
    assert rep.boundary_atoms >= 2
    assert rep.value == 0.0          # open window: boundary atoms excluded
    with pytest.raises(ValidationError):
        walkdist.window_mass(sys_, coc, (-1.0, 1.0), 1, strict=True)


def test_window_pair_ratios_sampled_uniformity():
    sys_, coc, _ = presets.embedded4()
    shifts = [(0, 0), (1, 0), (0, 1), (-1, 1)]
    rep = walkdist.window_pair_ratios(sys_, coc, (-1.0, 1.0), shifts, 200)
    assert rep.max_deviation <= 0.1
    assert len(rep.pairs) == 16
    # a trivial second shift leaves the window in place: ratio exactly 1
    trivial = [r for g, g1, r in rep.pairs if g1 == (0, 0)]
    assert trivial and all(r == 1.0 for r in trivial)


def test_stone_ratio_trivial_and_reciprocal():
    sys_, coc, _ = presets.embedded4()
    same = walkdist.stone_ratio(sys_, coc, (-1.5, 1.5), (-1.5, 1.5), 40)
    assert same.ratio == 1.0 and same.target == 1.0
    fwd = walkdist.stone_ratio(sys_, coc, (-1.0, 1.0), (-2.0, 2.0), 60)
    rev = walkdist.stone_ratio(sys_, coc, (-2.0, 2.0), (-1.0, 1.0), 60)
    assert fwd.ratio == pytest.approx(1.0 / rev.ratio, rel=1e-12)
    assert fwd.target == pytest.approx(0.5)


def test_condition_d_iid_identity():
    # for Bernoulli weights the conditioned mass only shifts the target:
    # the depth-1 deviation must equal max_b |mu^{n-1}(g - v(b)) / mu^n(g) - 1|
    sys_, coc, _ = presets.trinomial()
    n, g = 40, (0,)
    rep = walkdist.check_condition_D(sys_, coc, g, 1, 1, n)
    traj = walkdist.mass_trajectory(sys_, coc, [(-1,), (0,), (1,)], n)
    target = traj[n][1]
    expected = max(
        max(v / target, target / v) - 1
        for v in (traj[n - 1][0], traj[n - 1][1], traj[n - 1][2])
    )
    assert rep.worst_by_nprime[1] == pytest.approx(expected, rel=1e-12)


def test_condition_d_input_validation():
    sys_, coc, _ = presets.trinomial()
    with pytest.raises(ValidationError):
        walkdist.check_condition_D(sys_, coc, (0,), 3, 2, 10)
    with pytest.raises(ResourceLimitError):
        walkdist.check_condition_D(sys_, coc, (0,), 1, 9, 12, max_cylinders=100)


def test_condition_c_saturation_and_independence():
    sys_, coc, _ = presets.embedded4()
    # a window containing the whole support makes both sides 1
    rep = walkdist.check_condition_C(sys_, coc, (-100.0, 100.0), (0, 0), 1, 1, 20)
    assert rep.worst_deviation <= 1e-12
    rep2 = walkdist.check_condition_C(sys_, coc, (-1.0, 1.0), (0, 0), 1, 1, 60)
    assert rep2.worst_deviation < 0.2


def test_condition_c_deviation_decreases_in_n():
    sys_, coc, _ = presets.embedded4()
    devs = [
        walkdist.check_condition_C(sys_, coc, (-1.0, 1.0), (0, 0), 1, 1, n).worst_deviation
        for n in (100, 150, 200)
    ]
    assert devs[0] > devs[1] > devs[2]


def test_condition_cm_saturation_and_far_window():
    sys_, coc, _ = presets.embedded4()
    rep = walkdist.check_condition_CM(
        sys_, coc, (0,), (-60.0, 60.0), (-60.0, 60.0), (-60.0, 60.0), (0, 0), 30
    )
    assert rep.note == "holds"
    far = walkdist.check_condition_CM(
        sys_, coc, (0,), (-0.5, 0.5), (500.0, 501.0), (-1.0, 1.0), (0, 0), 30
    )
    assert far.table[0][2] == 0.0            # LHS vanishes when A is unreachable
    assert far.note == "holds"


def test_condition_cm_acceptance_shape():
    sys_, coc, _ = presets.embedded4()
    for n in (50, 100):
        rep = walkdist.check_condition_CM(
            sys_, coc, (0,), (-0.5, 0.5), (-1.0, 1.0), (-1.0, 1.0), (0, 0), n
        )
        assert rep.note == "holds"


def test_condition_cm_dense_and_sparse_paths_agree():
    sys_, coc, _ = presets.embedded4()
    args = (sys_, coc, (0, 2), (-0.5, 0.5), (-1.0, 1.0), (-1.0, 1.0), (0, 0), 12)
    dense = walkdist.check_condition_CM(*args, mode="float")
    sparse = walkdist.check_condition_CM(*args, mode="rational")
    _, _, lhs_d, rhs_d, _ = dense.table[0]
    _, _, lhs_s, rhs_s, _ = sparse.table[0]
    assert lhs_d == pytest.approx(lhs_s, rel=1e-11)
    assert rhs_d == pytest.approx(rhs_s, rel=1e-11)


def test_finite_group_mixing_uniform_immediately():
    sys_, coc, _ = presets.cyclic3()
    rep = walkdist.finite_group_mixing(sys_, coc, 10)
    assert rep.deviations[0] <= 1e-15


def test_finite_group_mixing_weighted_rate():
    sys_, coc, _ = presets.cyclic2()
    rep = walkdist.finite_group_mixing(sys_, coc, 30)
    for n, d in zip(rep.ns, rep.deviations):
        assert d == pytest.approx(0.5 * 0.8 ** n, abs=1e-13)
    assert rep.rate == pytest.approx(math.log(0.8), rel=1e-6)


def test_finite_group_mixing_periodic_diagnostic():
    sys_ = GibbsMarkovSystem.bernoulli([Fraction(1, 2), Fraction(1, 2)])
    from gmwalk.groups import cyclic_group

    coc = Cocycle(cyclic_group(2), ((1,), (1,)))
    rep = walkdist.finite_group_mixing(sys_, coc, 10)
    assert rep.periodic and rep.rate is None


def test_return_time_tail_fair_coin():
    sys_, coc, _ = presets.cyclic2((Fraction(1, 2), Fraction(1, 2)))
    rep = walkdist.return_time_tail(sys_, coc, 12, mode="rational")
    assert rep.tail[0] == 1
    assert rep.tail[1] == Fraction(1, 2)
    for n in range(1, 13):
        assert rep.tail[n] == Fraction(1, 2 ** n)
    assert rep.r_squared > 0.999


def test_superadditivity_small_exact():
    sys_, coc, _ = presets.trinomial()
    rep = walkdist.superadditivity_check(sys_, coc, 12, mode="rational")
    assert rep.holds and rep.constant == 1.0
    ms, mc, _ = presets.two_state_markov()
    rep2 = walkdist.superadditivity_check(ms, mc, 12, mode="rational")
    assert rep2.holds and rep2.constant < 1.0


def test_pruning_tracks_dropped_mass():
    sys_, coc, _ = presets.trinomial()
    t = walkdist.distribution(sys_, coc, 30, mode="float", prune_eps=1e-6)
    assert t.dropped > 0
    assert abs(t.total() + t.dropped - 1.0) <= 1e-9


def test_sparse_guard_trips():
    sys_, coc, _ = presets.z2_lattice()
    with pytest.raises(ResourceLimitError) as exc:
        walkdist.distribution(sys_, coc, 40, mode="rational", max_atoms=50)
    assert exc.value.completed is not None


def test_dense_guard_trips():
    sys_, coc, _ = presets.heisenberg_symmetric()
    with pytest.raises(ResourceLimitError):
        walkdist.distribution(sys_, coc, 60, mode="float", max_cells=10_000)


def test_distribution_seeded_state():
    sys_, coc, _ = presets.two_state_markov()
    t = walkdist.distribution(sys_, coc, 1, seed_state=1)
    assert t.group_masses() == {(1,): Fraction(1, 4), (-1,): Fraction(3, 4)}


def test_distribution_csv_round_trip(tmp_path):
    sys_, coc, _ = presets.trinomial()
    t = walkdist.distribution(sys_, coc, 2)
    path = tmp_path / "dist.csv"
    walkdist.write_distribution_csv(t, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,key_0,mass"
    assert lines[1] == "2,-2,1/9"
    assert len(lines) == 6
