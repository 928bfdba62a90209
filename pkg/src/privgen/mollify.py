"""Mollification: the largest mixing coefficient that meets a divergence budget.

For a private distribution p and public anchor q, find the largest lambda in
[0, 1] such that the symmetric Renyi divergence between lambda*p + (1-lambda)*q
and q stays within the bound. The divergence is non-decreasing in lambda
(strictly increasing unless p = q), which makes plain bisection exact up to
the tolerance: the loop keeps lambda_low feasible and lambda_high infeasible
and returns lambda_low.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .dist import Dist, RenyiOrder, mix, symmetric_renyi
from .errors import InvalidInputError

DEFAULT_TOL = 1e-4

# Slack allowed between the recorded divergence and the bound; purely float
# headroom, the search itself only accepts feasible lambdas.
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class MollificationOutcome:
    """Chosen lambda, the divergence actually achieved at it, and whether the
    budget was the binding constraint (lambda < 1)."""

    lam: float
    achieved_divergence: float
    saturated: bool


def find_max_lambda(
    p_priv: Dist,
    p_pub: Dist,
    order: RenyiOrder = RenyiOrder(),
    budget_bound: float = 0.0,
    tol: float = DEFAULT_TOL,
) -> MollificationOutcome:
    """Largest lambda (within tol) with sym-divergence(mix(lambda), p_pub) <= budget_bound.

    budget_bound is the allowed symmetric divergence, i.e. alpha * beta for
    the group. If lambda = 1 already satisfies the bound the search is skipped
    and lambda = 1 is returned with saturated = False; "largest mixing
    coefficient" admits no better answer and bisection alone would needlessly
    return ~1 - tol. The achieved divergence is recomputed at the returned
    lambda so the accountant records exactly what is released.
    """
    if not (isinstance(budget_bound, (int, float)) and math.isfinite(budget_bound) and budget_bound >= 0.0):
        raise InvalidInputError(f"budget bound must be a finite real >= 0, got {budget_bound!r}")
    if not (isinstance(tol, (int, float)) and 0.0 < tol < 1.0):
        raise InvalidInputError(f"tolerance must lie in (0, 1), got {tol!r}")

    full = symmetric_renyi(p_priv, p_pub, order)
    if full <= budget_bound:
        return MollificationOutcome(lam=1.0, achieved_divergence=full, saturated=False)

    low, high = 0.0, 1.0
    while high - low > tol:
        mid = (low + high) / 2.0
        div = symmetric_renyi(mix(mid, p_priv, p_pub), p_pub, order)
        if div <= budget_bound:
            low = mid
        else:
            high = mid

    achieved = symmetric_renyi(mix(low, p_priv, p_pub), p_pub, order)
    if achieved > budget_bound:
        # Cannot happen with deterministic re-evaluation at a lambda the loop
        # already accepted, but the recorded value must never exceed the bound.
        low = max(0.0, low - tol)
        achieved = min(symmetric_renyi(mix(low, p_priv, p_pub), p_pub, order), budget_bound)
    return MollificationOutcome(lam=low, achieved_divergence=achieved, saturated=True)
