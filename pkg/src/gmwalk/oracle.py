"""Brute-force ground truth by exhaustive word enumeration, always exact.

Words are walked depth-first so prefixes share group products.  Weight
products are carried as integer numerators over a fixed common denominator
(weights are rationals), which keeps the inner loop on machine/big ints and
converts to Fraction only at export.  Masses are recorded at every depth, so
one traversal yields the laws of all steps up to n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ResourceLimitError, ValidationError
from .gm_system import GibbsMarkovSystem
from .walkdist import MassTable

WORD_GUARD = 100_000_000


@dataclass
class OracleResult:
    quantity: str
    n: int
    value: object          # Fraction or dict -> Fraction
    word_count: int


def _int_weights(system: GibbsMarkovSystem):
    """(pi numerators, transition numerators, pi denom, step denom)."""
    dpi = math.lcm(*(f.denominator for f in system.pi))
    dtr = math.lcm(*(f.denominator for row in system.trans for f in row))
    pi_num = [int(f * dpi) for f in system.pi]
    tr_num = [[int(f * dtr) for f in row] for row in system.trans]
    return pi_num, tr_num, dpi, dtr


def _guard(system, n):
    if system.m ** n > WORD_GUARD:
        raise ResourceLimitError(f"{system.m}**{n} words exceed the enumeration guard")


def oracle_distributions_upto(system, cocycle, n):
    """Joint (state, element) laws for every step 1..n, by full enumeration."""
    _guard(system, n)
    cocycle.check_total(system.m)
    spec = cocycle.spec
    mul = spec.multiply
    vals = cocycle.values
    pi_num, tr_num, dpi, dtr = _int_weights(system)
    m = system.m
    acc = [dict() for _ in range(n + 1)]   # acc[j]: (state, g) -> int numerator
    count = 0

    def visit(depth, last, g, wnum):
        nonlocal count
        a = acc[depth]
        key = (last, g)
        a[key] = a.get(key, 0) + wnum
        if depth == n:
            count += 1
            return
        row = tr_num[last]
        for s in range(m):
            visit(depth + 1, s, mul(vals[s], g), wnum * row[s])

    for s in range(m):
        visit(1, s, vals[s], pi_num[s])

    tables = []
    for j in range(1, n + 1):
        denom = dpi * dtr ** (j - 1)
        # depth-j entries in acc[j] carry extra transition factors beyond j-1
        # steps only when words were cut short; here every entry at depth j
        # has exactly j-1 transition factors
        data = {k: Fraction(v, denom) for k, v in acc[j].items()}
        tables.append(MassTable(j, "rational", spec, data))
    return tables


def oracle_distribution(system, cocycle, n) -> MassTable:
    """Exact law of the n-step product (increments multiplied on the left)."""
    if n < 1:
        raise ValidationError("oracle distribution needs n >= 1")
    return oracle_distributions_upto(system, cocycle, n)[-1]


def oracle_distribution_reversed(system, cocycle, n) -> MassTable:
    """Same enumeration with right-multiplied increments (order witness)."""
    _guard(system, n)
    spec = cocycle.spec
    mul = spec.multiply
    vals = cocycle.values
    pi_num, tr_num, dpi, dtr = _int_weights(system)
    m = system.m
    out = {}

    def visit(depth, last, g, wnum):
        if depth == n:
            key = (last, g)
            out[key] = out.get(key, 0) + wnum
            return
        row = tr_num[last]
        for s in range(m):
            visit(depth + 1, s, mul(g, vals[s]), wnum * row[s])

    for s in range(m):
        visit(1, s, vals[s], pi_num[s])
    denom = dpi * dtr ** (n - 1)
    data = {k: Fraction(v, denom) for k, v in out.items()}
    return MassTable(n, "rational", spec, data)


def oracle_periodic_sums(system, cocycle, a, n):
    """Exact Z_a^n and the per-element table Z_{a,g}^n over periodic words.

    Periodic words of length n starting at symbol a are weighted by the
    product of transition weights around the cycle (the exact cylinder weight
    of the periodic point for these locally constant potentials).
    """
    _guard(system, n - 1)
    if n < 1:
        raise ValidationError("periodic sums need n >= 1")
    spec = cocycle.spec
    mul = spec.multiply
    vals = cocycle.values
    _, tr_num, _, dtr = _int_weights(system)
    m = system.m
    table = {}
    count = 0

    def visit(depth, last, g, wnum):
        nonlocal count
        if depth == n:
            key = g
            w = wnum * tr_num[last][a]
            table[key] = table.get(key, 0) + w
            count += 1
            return
        row = tr_num[last]
        for s in range(m):
            visit(depth + 1, s, mul(vals[s], g), wnum * row[s])

    visit(1, a, vals[a], 1)
    denom = dtr ** n
    tab = {g: Fraction(v, denom) for g, v in table.items()}
    z_a = sum(tab.values(), Fraction(0))
    return OracleResult("periodic_sums", n, {"Z_a": z_a, "table": tab}, count)


def oracle_walk_measure(system, cocycle, a, n):
    """Exact base-cylinder walk measure and its normalization.

    The reference point is the periodic point of the base cylinder, so the
    weight of an n-word v starting at a is mu([v]) * p(last(v) -> a) / pi(a);
    the normalization P_n(1) is the total of those weights.
    """
    _guard(system, n - 1)
    if n < 1:
        raise ValidationError("walk measures need n >= 1")
    spec = cocycle.spec
    mul = spec.multiply
    vals = cocycle.values
    pi_num, tr_num, dpi, dtr = _int_weights(system)
    m = system.m
    table = {}
    count = 0

    def visit(depth, last, g, wnum):
        nonlocal count
        if depth == n:
            w = wnum * tr_num[last][a]
            table[g] = table.get(g, 0) + w
            count += 1
            return
        row = tr_num[last]
        for s in range(m):
            visit(depth + 1, s, mul(vals[s], g), wnum * row[s])

    visit(1, a, vals[a], pi_num[a])
    denom = dpi * dtr ** n
    weights = {g: Fraction(v, denom) / system.pi[a] for g, v in table.items()}
    pn_one = sum(weights.values(), Fraction(0))
    measure = {g: w / pn_one for g, w in weights.items()}
    return OracleResult(
        "walk_measure", n, {"pn_one": pn_one, "measure": measure}, count
    )
