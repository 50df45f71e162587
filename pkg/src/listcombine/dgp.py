"""Population model behind the simulator and the analytic variance formulas.

The population is a finite mixture of respondent *kinds*. ``mu * p`` is the
mass of the "Yes" stratum (direct answer 1). Violation shares are fractions
of that stratum, so they change who answers "Yes" but not how many:

====================  ===  ===  ===========================  ==================
kind                  X    Y    mass                         V under treatment
====================  ===  ===  ===========================  ==================
confessor             1    1    (1 - s_fc - s_l - s_d) mu p  W + 1
false confessor       0    1    s_fc mu p                    W
liar                  1    1    s_l mu p                     W
design-affected       1    1    s_d mu p                     min(W + 1, J)
withholder            1    0    mu - (1 - s_fc) mu p         W + 1
non-engager           0    0    1 - mu - s_fc mu p           W
====================  ===  ===  ===========================  ==================

Every kind reports ``V = W`` under control. ``W ~ Binomial(J, w)``, with the
success probability shifted by ``w_shift`` for X = 1 kinds when a correlated
baseline is requested. Treatment ``Z ~ Bernoulli(gamma)`` is independent of
everything, so cell moments do not depend on ``z`` except through the
treatment response.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from .errors import InvalidParams

KINDS = ("confessor", "false_confessor", "liar", "design_affected", "withholder", "non_engager")
VIOLATIONS = {
    "false-confessor": "share_false_confessors",
    "liar": "share_liars",
    "design-affected": "share_design_affected",
}


@dataclass(frozen=True)
class DgpParams:
    mu: float
    p_truthful: float
    gamma: float = 0.5
    j_items: int = 4
    w_success: float = 0.4
    share_false_confessors: float = 0.0
    share_liars: float = 0.0
    share_design_affected: float = 0.0
    n: int = 1000
    n_yes: int | None = None
    w_shift: float = 0.0

    def __post_init__(self):
        for name in ("mu", "p_truthful", "gamma", "w_success",
                     "share_false_confessors", "share_liars", "share_design_affected"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise InvalidParams(f"{name} must lie in [0, 1], got {v!r}")
        if int(self.j_items) != self.j_items or self.j_items < 1:
            raise InvalidParams(f"j_items must be a positive integer, got {self.j_items!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParams(f"n must be a positive integer, got {self.n!r}")
        if self.n_yes is not None and not (0 <= self.n_yes <= self.n):
            raise InvalidParams(f"n_yes must lie in [0, n], got {self.n_yes!r}")
        if self.violation_total > 1.0 + 1e-12:
            raise InvalidParams("violation shares of the Yes stratum sum to more than 1")
        if not 0.0 <= self.w_success + self.w_shift <= 1.0:
            raise InvalidParams("w_success + w_shift must lie in [0, 1]")
        if self.mass["non_engager"] < -1e-12:
            raise InvalidParams(
                "false confessors outnumber the people who could supply them "
                f"(need share_false_confessors * mu * p <= 1 - mu)"
            )

    @property
    def violation_total(self) -> float:
        return self.share_false_confessors + self.share_liars + self.share_design_affected

    @property
    def has_violations(self) -> bool:
        return self.violation_total > 0.0

    @property
    def yes_rate(self) -> float:
        return self.mu * self.p_truthful

    @property
    def mass(self) -> dict[str, float]:
        q = self.yes_rate
        return {
            "confessor": (1.0 - self.violation_total) * q,
            "false_confessor": self.share_false_confessors * q,
            "liar": self.share_liars * q,
            "design_affected": self.share_design_affected * q,
            "withholder": self.mu - (1.0 - self.share_false_confessors) * q,
            "non_engager": 1.0 - self.mu - self.share_false_confessors * q,
        }

    def with_(self, **changes) -> "DgpParams":
        return replace(self, **changes)


X_OF = {"confessor": 1, "false_confessor": 0, "liar": 1, "design_affected": 1, "withholder": 1, "non_engager": 0}
Y_OF = {"confessor": 1, "false_confessor": 1, "liar": 1, "design_affected": 1, "withholder": 0, "non_engager": 0}


def kind_w_success(params: DgpParams, kind: str) -> float:
    return params.w_success + (params.w_shift if X_OF[kind] else 0.0)


def _binomial_moments(j: int, w: float) -> tuple[float, float, float]:
    """E[W], E[W^2] and P(W = J) for W ~ Binomial(J, w)."""
    m1 = j * w
    return m1, j * w * (1.0 - w) + m1 * m1, w ** j


def kind_moments(params: DgpParams, kind: str, z: int) -> tuple[float, float]:
    """First and second moments of V for one kind under treatment arm ``z``."""
    j = params.j_items
    ew, ew2, p_top = _binomial_moments(j, kind_w_success(params, kind))
    if z == 0 or kind in ("false_confessor", "liar", "non_engager"):
        return ew, ew2
    if kind == "design_affected":
        # min(W + 1, J) equals W + 1 except at the ceiling W = J
        return ew + 1.0 - p_top, ew2 + 2.0 * ew + 1.0 - p_top * (2 * j + 1)
    return ew + 1.0, ew2 + 2.0 * ew + 1.0


class CellMoments(NamedTuple):
    mass: float   # P(Y = y)
    mean: float   # E[V | Z = z, Y = y]
    var: float    # Var[V | Z = z, Y = y]


def population_moments(params: DgpParams) -> dict[tuple[int, int], CellMoments]:
    """Closed-form ``E[V | Z, Y]`` and ``Var[V | Z, Y]`` for every cell."""
    mass = params.mass
    out = {}
    for y in (0, 1):
        kinds = [k for k in KINDS if Y_OF[k] == y and mass[k] > 0.0]
        total = math.fsum(mass[k] for k in kinds)
        for z in (0, 1):
            if total <= 0.0:
                out[(z, y)] = CellMoments(0.0, math.nan, math.nan)
                continue
            m1 = math.fsum(mass[k] * kind_moments(params, k, z)[0] for k in kinds) / total
            m2 = math.fsum(mass[k] * kind_moments(params, k, z)[1] for k in kinds) / total
            out[(z, y)] = CellMoments(total, m1, max(0.0, m2 - m1 * m1))
    return out


def identification_oracle(params: DgpParams) -> float:
    """Population value of ``E[Y] + E[1 - Y] (E[V|Z=1,Y=0] - E[V|Z=0,Y=0])``.

    Equals ``mu`` when the design assumptions hold. False confessors inflate
    it by ``share_false_confessors * mu * p``; liars and design effects only
    touch the Yes stratum and leave it unchanged.
    """
    mom = population_moments(params)
    q = mom[(0, 1)].mass
    if mom[(0, 0)].mass <= 0.0:
        return q
    return q + (1.0 - q) * (mom[(1, 0)].mean - mom[(0, 0)].mean)


def placebo_one_estimand(params: DgpParams) -> float:
    """Population ``E[V|Z=1,Y=1] - E[V|Z=0,Y=1]``; 1 under the null."""
    mom = population_moments(params)
    if mom[(0, 1)].mass <= 0.0:
        raise InvalidParams("the Yes stratum is empty")
    return mom[(1, 1)].mean - mom[(0, 1)].mean
