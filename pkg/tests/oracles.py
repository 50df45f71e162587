"""Exact reference values by brute-force enumeration with rational arithmetic.

Deliberately shares no code with the package: the population is enumerated
as (kind, W, Z) atoms with Fraction weights and every moment is a plain
weighted sum over atoms.
"""

from __future__ import annotations

from fractions import Fraction as F
from math import comb


def _binom_pmf(j, w):
    return [comb(j, k) * w ** k * (1 - w) ** (j - k) for k in range(j + 1)]


def atoms(mu, p, gamma, j, w, s_fc=F(0), s_l=F(0), s_d=F(0)):
    """Yield (weight, x, y, z, v) atoms of the joint distribution."""
    q = mu * p
    kinds = [
        # (mass, x, y, treated response as a function of w)
        ((1 - s_fc - s_l - s_d) * q, 1, 1, lambda b: b + 1),
        (s_fc * q, 0, 1, lambda b: b),
        (s_l * q, 1, 1, lambda b: b),
        (s_d * q, 1, 1, lambda b: min(b + 1, j)),
        (mu - (1 - s_fc) * q, 1, 0, lambda b: b + 1),
        (1 - mu - s_fc * q, 0, 0, lambda b: b),
    ]
    pmf = _binom_pmf(j, w)
    for mass, x, y, treated in kinds:
        if mass == 0:
            continue
        for b, pb in enumerate(pmf):
            yield mass * pb * gamma, x, y, 1, treated(b)
            yield mass * pb * (1 - gamma), x, y, 0, b


def conditional_moments(at, pred):
    w = sum(a[0] for a in at if pred(a))
    m1 = sum(a[0] * a[4] for a in at if pred(a)) / w
    m2 = sum(a[0] * a[4] ** 2 for a in at if pred(a)) / w
    return m1, m2 - m1 ** 2


def population(mu, p, gamma=F(1, 2), j=4, w=F(2, 5), **shares):
    at = list(atoms(mu, p, gamma, j, w, **shares))
    assert sum(a[0] for a in at) == 1
    cell = {}
    for z in (0, 1):
        for y in (0, 1):
            if sum(a[0] for a in at if a[2] == y) > 0:
                cell[(z, y)] = conditional_moments(at, lambda a, z=z, y=y: a[3] == z and a[2] == y)
    arm = {z: conditional_moments(at, lambda a, z=z: a[3] == z) for z in (0, 1)}
    ey = sum(a[0] for a in at if a[2] == 1)
    ex = sum(a[0] for a in at if a[1] == 1)
    return at, cell, arm, ey, ex


def identification_value(mu, p, **kw):
    _, cell, _, ey, _ = population(mu, p, **kw)
    return ey + (1 - ey) * (cell[(1, 0)][0] - cell[(0, 0)][0])


def asy_var_combined_printed(mu, p, gamma=F(1, 2), j=4, w=F(2, 5)):
    """Printed closed form for the combined estimator (no violations)."""
    _, cell, _, _, _ = population(mu, p, gamma, j, w)
    q = mu * p
    return (1 - mu) ** 2 / (1 - q) * q + (1 - q) * (cell[(1, 0)][1] / gamma + cell[(0, 0)][1] / (1 - gamma))


def asy_var_standard_total(mu, p, gamma=F(1, 2), j=4, w=F(2, 5)):
    """Difference in arm means: Var(V | Z=1)/gamma + Var(V | Z=0)/(1-gamma)."""
    _, _, arm, _, _ = population(mu, p, gamma, j, w)
    return arm[1][1] / gamma + arm[0][1] / (1 - gamma)
