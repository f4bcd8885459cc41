"""Shipped example systems used across tests, docs, and example configs."""

from fractions import Fraction

from .gm_system import Cocycle, GibbsMarkovSystem, SymmetryInvolution
from .groups import (
    EmbeddedRealLattice,
    HeisenbergZ,
    IntegerLattice,
    cyclic_group,
)

SQRT2 = 2 ** 0.5


def trinomial():
    """Uniform three-symbol walk on Z with increments -1, 0, +1."""
    sys = GibbsMarkovSystem.bernoulli([Fraction(1, 3)] * 3)
    coc = Cocycle(IntegerLattice(1), ((-1,), (0,), (1,)))
    return sys, coc, SymmetryInvolution((2, 1, 0))


def simple_walk():
    """Uniform +-1 walk on Z: the period-2 negative control."""
    sys = GibbsMarkovSystem.bernoulli([Fraction(1, 2)] * 2)
    coc = Cocycle(IntegerLattice(1), ((1,), (-1,)))
    return sys, coc, SymmetryInvolution((1, 0))


def asymmetric_z():
    """Walk on Z with p(+1) = 0.3, p(-1) = 0.7."""
    sys = GibbsMarkovSystem.bernoulli([Fraction(3, 10), Fraction(7, 10)])
    coc = Cocycle(IntegerLattice(1), ((1,), (-1,)))
    return sys, coc, None


def two_state_markov():
    """Order-1 chain with rows (1/2, 1/2) and (1/4, 3/4), increments +-1."""
    sys = GibbsMarkovSystem.markov(
        [[Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 4), Fraction(3, 4)]]
    )
    coc = Cocycle(IntegerLattice(1), ((1,), (-1,)))
    return sys, coc, None


def z2_lattice():
    """Uniform three-symbol walk on Z^2 with increments (1,0), (0,1), (0,0)."""
    sys = GibbsMarkovSystem.bernoulli([Fraction(1, 3)] * 3)
    coc = Cocycle(IntegerLattice(2), ((1, 0), (0, 1), (0, 0)))
    return sys, coc, None


def cyclic3():
    """Uniform walk on Z/3 with increments 0, 1, 2."""
    sys = GibbsMarkovSystem.bernoulli([Fraction(1, 3)] * 3)
    coc = Cocycle(cyclic_group(3), ((0,), (1,), (2,)))
    return sys, coc, None


def cyclic2(weights=(Fraction(9, 10), Fraction(1, 10))):
    """Walk on Z/2 with increments 0, 1 and configurable weights."""
    sys = GibbsMarkovSystem.bernoulli(list(weights))
    coc = Cocycle(cyclic_group(2), ((0,), (1,)))
    return sys, coc, None


def embedded4():
    """Uniform four-symbol walk on the subgroup of R generated by 1 and sqrt(2).

    Internal coordinates live in Z^2; the real values +-1 and +-sqrt(2) are
    derived views of the exact lattice coordinates.
    """
    spec = EmbeddedRealLattice(((1.0,), (SQRT2,)))
    sys = GibbsMarkovSystem.bernoulli([Fraction(1, 4)] * 4)
    coc = Cocycle(spec, ((1, 0), (-1, 0), (0, 1), (0, -1)))
    return sys, coc, SymmetryInvolution((1, 0, 3, 2))


def heisenberg_symmetric():
    """Uniform walk on the discrete Heisenberg group over a, a^-1, b, b^-1."""
    sys = GibbsMarkovSystem.bernoulli([Fraction(1, 4)] * 4)
    coc = Cocycle(
        HeisenbergZ(), ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
    )
    return sys, coc, SymmetryInvolution((1, 0, 3, 2))


def heisenberg_asymmetric():
    """Heisenberg walk with weights (0.4, 0.1, 0.3, 0.2) on (a, a^-1, b, b^-1)."""
    sys = GibbsMarkovSystem.bernoulli(
        [Fraction(2, 5), Fraction(1, 10), Fraction(3, 10), Fraction(1, 5)]
    )
    coc = Cocycle(
        HeisenbergZ(), ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
    )
    return sys, coc, None


ALL_EXAMPLES = {
    "trinomial": trinomial,
    "asymmetric_z": asymmetric_z,
    "two_state_markov": two_state_markov,
    "z2_lattice": z2_lattice,
    "cyclic3": cyclic3,
    "cyclic2": cyclic2,
    "embedded4": embedded4,
    "heisenberg_symmetric": heisenberg_symmetric,
    "heisenberg_asymmetric": heisenberg_asymmetric,
}
