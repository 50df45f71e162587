"""Scalar statistical kernels shared by the estimators, tests and simulators.

Only the standard library is used here. The normal CDF is built on
``math.erfc`` and the quantile on :class:`statistics.NormalDist`, whose
inverse uses Wichura's AS241 rational approximation (full double precision).
"""

from __future__ import annotations

import math
from statistics import NormalDist
from typing import Iterable

from .errors import EmptyInput, InsufficientData, OutOfDomain

_SQRT2 = math.sqrt(2.0)
_STD_NORMAL = NormalDist()


class Probability(float):
    """A float constrained to the closed unit interval.

    >>> Probability(0.25)
    0.25
    >>> Probability(1.5)
    Traceback (most recent call last):
    ...
    listcombine.errors.OutOfDomain: probability must lie in [0, 1], got 1.5
    """

    __slots__ = ()

    def __new__(cls, value: float) -> "Probability":
        v = float(value)
        if math.isnan(v) or v < 0.0 or v > 1.0:
            raise OutOfDomain(f"probability must lie in [0, 1], got {value!r}")
        return super().__new__(cls, v)


def _clip_unit(x: float) -> Probability:
    # guards against 1 ulp of overshoot in sums of probabilities
    return Probability(min(1.0, max(0.0, x)))


def mean(xs: Iterable[float]) -> float:
    values = [float(x) for x in xs]
    if not values:
        raise EmptyInput("mean of an empty sequence")
    if not all(math.isfinite(v) for v in values):
        raise OutOfDomain("mean requires finite values")
    return math.fsum(values) / len(values)


def sample_variance(xs: Iterable[float]) -> float:
    """Unbiased (n - 1 denominator) sample variance."""
    values = [float(x) for x in xs]
    if len(values) < 2:
        raise InsufficientData("sample variance needs at least two values")
    m = mean(values)
    return math.fsum((v - m) ** 2 for v in values) / (len(values) - 1)


def std_normal_cdf(x: float) -> Probability:
    if not math.isfinite(x):
        if math.isnan(x):
            raise OutOfDomain("std_normal_cdf of NaN")
        return Probability(1.0 if x > 0 else 0.0)
    return _clip_unit(0.5 * math.erfc(-x / _SQRT2))


def std_normal_quantile(q: float) -> float:
    if not 0.0 < q < 1.0:
        raise OutOfDomain(f"normal quantile needs 0 < q < 1, got {q!r}")
    return _STD_NORMAL.inv_cdf(q)


def two_sided_normal_p(z: float) -> float:
    """2 * Phi(-|z|), computed without cancellation in the tail."""
    return min(1.0, math.erfc(abs(z) / _SQRT2))


def chi_square_sf(x: float, df: int) -> Probability:
    """Upper tail of the chi-square distribution with integer ``df``.

    This is the regularized upper incomplete gamma ``Q(df/2, x/2)``. For
    integer and half-integer shape it has a finite closed form:

    * even df = 2k:     Q(k, y) = exp(-y) * sum_{i<k} y^i / i!
    * odd  df = 2k + 1: Q(k + 1/2, y) = erfc(sqrt y)
                          + exp(-y) * sum_{i<k} y^(i + 1/2) / Gamma(i + 3/2)

    Terms are accumulated in log space so large ``x`` or ``df`` cannot overflow.
    """
    if int(df) != df or df < 1:
        raise OutOfDomain(f"df must be a positive integer, got {df!r}")
    df = int(df)
    if math.isnan(x) or x < 0:
        raise OutOfDomain(f"chi-square statistic must be >= 0, got {x!r}")
    if x == 0:
        return Probability(1.0)
    if math.isinf(x):
        return Probability(0.0)
    y = 0.5 * x
    if y == 0.0:
        # subnormal x underflows
        return Probability(1.0)
    log_y = math.log(y)
    k, odd = divmod(df, 2)
    if odd:
        total = math.erfc(math.sqrt(y))
        terms = (-y + (i + 0.5) * log_y - math.lgamma(i + 1.5) for i in range(k))
    else:
        total = 0.0
        terms = (-y + i * log_y - math.lgamma(i + 1.0) for i in range(k))
    total += math.fsum(math.exp(t) for t in terms)
    return _clip_unit(total)


def two_prop_power(
    p1: float,
    p0: float,
    n1: int,
    n0: int,
    alpha: float = 0.05,
    *,
    continuity: bool = False,
    pooled_null: bool = False,
) -> Probability:
    """Normal-approximation power of the two-sided two-sample proportion test.

    Parameters
    ----------
    p1, p0 : float
        Success probabilities in the first (treated) and second (control) group.
    n1, n0 : int
        Group sizes.
    alpha : float
        Two-sided test level.
    continuity : bool
        Apply the Yates-type correction ``(1/n1 + 1/n0) / 2`` to the
        rejection threshold.
    pooled_null : bool
        Standardise the critical value with the pooled-proportion variance
        under the null (the form used by R's ``power.prop.test``). The
        default uses the unpooled variance throughout, which is the
        statistic that Placebo Test II actually computes.

    Returns
    -------
    Probability
    """
    p1 = Probability(p1)
    p0 = Probability(p0)
    alpha = Probability(alpha)
    if n1 < 1 or n0 < 1:
        raise OutOfDomain("group sizes must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise OutOfDomain("alpha must lie strictly inside (0, 1)")
    z = std_normal_quantile(1.0 - alpha / 2.0)
    diff = abs(p1 - p0)
    se_alt = math.sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0)
    if pooled_null:
        pbar = (n1 * p1 + n0 * p0) / (n1 + n0)
        se_null = math.sqrt(pbar * (1 - pbar) * (1 / n1 + 1 / n0))
    else:
        se_null = se_alt
    cc = 0.5 * (1 / n1 + 1 / n0) if continuity else 0.0
    threshold = z * se_null + cc
    if se_alt == 0.0:
        # both groups deterministic: the observed difference equals diff exactly
        if diff == 0.0:
            return Probability(alpha)
        return Probability(1.0 if diff > threshold else 0.0)
    upper = std_normal_cdf((diff - threshold) / se_alt)
    lower = std_normal_cdf((-diff - threshold) / se_alt)
    return _clip_unit(upper + lower)
