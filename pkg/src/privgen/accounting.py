"""Privacy bookkeeping: per-group epsilon over a T-token transcript.

Two numbers per group. The theoretical bound assumes every step spent its
full budget beta; the data-dependent value replaces the uniform per-token
bound with the divergences actually observed during generation, composed
additively in the Renyi domain and converted to (epsilon, delta) at the end.
delta is nowhere pinned by the mechanism itself; 1e-5 is the package default
and reproduces the documented epsilon range 16-66 for alpha*beta in
[0.01, 0.10] at T = 900, m = 8.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .dist import RenyiOrder
from .errors import InvalidInputError
from .fusion import FusionTranscript

DEFAULT_DELTA = 1e-5


def _check_delta(delta: float, allow_one: bool = False) -> None:
    hi_ok = delta <= 1.0 if allow_one else delta < 1.0
    if not (isinstance(delta, (int, float)) and 0.0 < delta and hi_ok):
        hi = "(0, 1]" if allow_one else "(0, 1)"
        raise InvalidInputError(f"delta must lie in {hi}, got {delta!r}")


def _per_token_rdp(beta: float, m: int, alpha: float) -> float:
    """One token's RDP contribution: (1/(a-1)) * log((m-1)/m + e^{(a-1) 4 beta} / m)."""
    if beta == 0.0:
        return 0.0  # the log argument is exactly 1; keep zero-budget ledgers exact
    return math.log((m - 1) / m + math.exp((alpha - 1.0) * 4.0 * beta) / m) / (alpha - 1.0)


def rdp_to_dp(epsilon_rdp: float, order: RenyiOrder = RenyiOrder(), delta: float = DEFAULT_DELTA) -> float:
    """(alpha, eps)-RDP implies (eps + log(1/delta)/(alpha-1), delta)-DP."""
    _check_delta(delta, allow_one=True)
    if epsilon_rdp < 0:
        raise InvalidInputError(f"RDP epsilon must be >= 0, got {epsilon_rdp}")
    return epsilon_rdp + math.log(1.0 / delta) / (order.alpha - 1.0)


def theoretical_epsilon(
    beta: float,
    T: int,
    m: int,
    order: RenyiOrder = RenyiOrder(),
    delta: float = DEFAULT_DELTA,
) -> float:
    """Per-group (epsilon, delta) bound for a T-token transcript at uniform budget beta."""
    if m < 1:
        raise InvalidInputError(f"group count m must be >= 1, got {m}")
    if T < 1:
        raise InvalidInputError(f"token count T must be >= 1, got {T}")
    if beta < 0:
        raise InvalidInputError(f"budget beta must be >= 0, got {beta}")
    _check_delta(delta)
    return rdp_to_dp(T * _per_token_rdp(beta, m, order.alpha), order, delta)


@dataclass(frozen=True)
class AccountantLedger:
    """Observed per-step divergences (the effective alpha*beta values) per group."""

    per_group_records: dict[int, tuple[float, ...]]
    T: int
    m: int
    order: RenyiOrder
    delta: float

    def __post_init__(self):
        _check_delta(self.delta)
        if self.m < 1:
            raise InvalidInputError(f"ledger needs m >= 1, got {self.m}")
        for gid, records in self.per_group_records.items():
            if len(records) != self.T:
                raise InvalidInputError(f"group {gid}: {len(records)} records for T = {self.T}")
            if any(r < 0 for r in records):
                raise InvalidInputError(f"group {gid}: negative divergence record")


def ledger_from_transcript(
    transcript: FusionTranscript,
    delta: float = DEFAULT_DELTA,
    order: RenyiOrder | None = None,
) -> AccountantLedger:
    if order is None:
        order = RenyiOrder(float(transcript.config_echo.get("alpha", 2.0)))
    records: dict[int, list[float]] = {}
    for step in transcript.steps:
        for gid, outcome in step.per_group.items():
            records.setdefault(gid, []).append(outcome.achieved_divergence)
    if not records:
        raise InvalidInputError("transcript has no per-group records to account")
    return AccountantLedger(
        per_group_records={gid: tuple(v) for gid, v in records.items()},
        T=len(transcript.steps),
        m=len(records),
        order=order,
        delta=delta,
    )


def data_dependent_epsilon(ledger: AccountantLedger, group_id: int, composition: str = "sum") -> float:
    """Observed-divergence epsilon for one group.

    Each recorded value is an achieved alpha*beta_{i,t}, so obs/alpha recovers
    the per-step beta fed to the per-token RDP term. Terms compose additively
    ("sum", the default); "max" instead charges T times the worst step, kept
    for comparison plots.
    """
    records = ledger.per_group_records.get(group_id)
    if records is None:
        raise InvalidInputError(f"ledger has no records for group {group_id}")
    alpha = ledger.order.alpha
    terms = [_per_token_rdp(obs / alpha, ledger.m, alpha) for obs in records]
    if composition == "sum":
        rdp = math.fsum(terms)
    elif composition == "max":
        rdp = ledger.T * max(terms, default=0.0)
    else:
        raise InvalidInputError(f"unknown composition {composition!r}")
    return rdp_to_dp(rdp, ledger.order, ledger.delta)


@dataclass(frozen=True)
class GroupReport:
    group_id: int
    beta: float
    epsilon_theoretical: float
    epsilon_data_dependent: float


@dataclass(frozen=True)
class PrivacyReport:
    delta: float
    groups: tuple[GroupReport, ...]


def build_report(
    ledger: AccountantLedger,
    betas: dict[int, float],
    composition: str = "sum",
) -> PrivacyReport:
    """Theoretical and data-dependent epsilon per group; betas are the configured budgets."""
    groups = []
    for gid in sorted(ledger.per_group_records):
        beta = betas.get(gid)
        if beta is None:
            raise InvalidInputError(f"no configured beta for group {gid}")
        groups.append(
            GroupReport(
                group_id=gid,
                beta=beta,
                epsilon_theoretical=theoretical_epsilon(beta, ledger.T, ledger.m, ledger.order, ledger.delta),
                epsilon_data_dependent=data_dependent_epsilon(ledger, gid, composition),
            )
        )
    return PrivacyReport(delta=ledger.delta, groups=tuple(groups))


def report_to_obj(report: PrivacyReport) -> dict:
    return {
        "delta": report.delta,
        "groups": [
            {
                "id": g.group_id,
                "beta": g.beta,
                "eps_theoretical": g.epsilon_theoretical,
                "eps_data": g.epsilon_data_dependent,
            }
            for g in report.groups
        ],
    }


def epsilon_trace_rows(ledger: AccountantLedger, betas: dict[int, float]) -> list[tuple[int, int, float, float]]:
    """(group_id, step, cumulative data-dependent eps, theoretical eps) per step.

    Both columns include the one-off delta term so the curves are directly
    comparable; the theoretical column at step t is the t-token bound.
    """
    alpha = ledger.order.alpha
    delta_term = math.log(1.0 / ledger.delta) / (alpha - 1.0)
    rows = []
    for gid in sorted(ledger.per_group_records):
        beta = betas[gid]
        theo_term = _per_token_rdp(beta, ledger.m, alpha)
        running = 0.0
        for t, obs in enumerate(ledger.per_group_records[gid], start=1):
            running += _per_token_rdp(obs / alpha, ledger.m, alpha)
            rows.append((gid, t, running + delta_term, t * theo_term + delta_term))
    return rows
