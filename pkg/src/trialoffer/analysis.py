"""Numeric certificates for the market's structural guarantees.

Covers the efficiency bracket between the optima with and without
continuation, its closed-form factor for polynomial continuation, the gain
from position bias under quality ranking, the one-step benefit of the
social-influence signal, and the summary tables of the simulation study
(efficiency improvements and the downloads-versus-quality scatter).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import Market, SocialState, _appeals, _reduced_arrays
from .policies import (
    BRUTE_FORCE_MAX_PRODUCTS,
    PolicyKind,
    brute_force_ranking,
    performance_ranking,
    performance_ranking_with_continuation,
)
from .simulation import SimConfig, SimResult

__all__ = [
    "BOUND_SLACK",
    "GAIN_SLACK",
    "SCATTER_COLUMNS",
    "BoundCertificate",
    "ImprovementRow",
    "download_quality_scatter",
    "efficiency_bounds",
    "improvement_table",
    "polynomial_bound_factor",
    "position_bias_gain",
    "si_one_step_gain",
]

BOUND_SLACK = 1e-9  # float slack on the efficiency bracket inequalities
GAIN_SLACK = 1e-12  # float slack on the >= 0 guarantee checks

SCATTER_COLUMNS = ("product_id", "quality", "quality_rank", "replication", "downloads")


@dataclass(frozen=True)
class BoundCertificate:
    """Checked bracket lambda(opt) <= lambda_bar(opt_c) <= lambda(opt) * factor."""

    lambda_opt: float
    lambda_bar_opt: float
    upper_factor: float
    lower_ok: bool
    upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def efficiency_bounds(market: Market, method: str = "auto") -> BoundCertificate:
    """Certify the efficiency bracket between the two optimal rankings.

    Computes the optimal expected purchases ignoring continuation and the
    optimal expected purchases with continuation, and checks that the
    latter lies between the former and the former divided by (1 - max c_i).
    ``method`` picks the optimizer: "brute" (exact, n <= 10), "parametric",
    or "auto" (brute when small enough).
    """
    if method not in ("auto", "brute", "parametric"):
        raise ValueError(f"method must be auto, brute or parametric, got {method!r}")
    plain = market.without_continuation()
    if method == "brute" or (method == "auto" and market.n <= BRUTE_FORCE_MAX_PRODUCTS):
        lam_opt = brute_force_ranking(plain, objective="lambda").objective
        lam_bar_opt = brute_force_ranking(market, objective="lambda-bar").objective
    else:
        lam_opt = performance_ranking(plain).objective
        lam_bar_opt = performance_ranking_with_continuation(market).objective
    c_max = float(np.max(market.continuation_values()))
    if c_max >= 1.0:
        raise ValueError("a continuation probability of 1 makes the upper bound empty")
    factor = 1.0 / (1.0 - c_max)
    return BoundCertificate(
        lambda_opt=lam_opt,
        lambda_bar_opt=lam_bar_opt,
        upper_factor=factor,
        lower_ok=lam_bar_opt >= lam_opt - BOUND_SLACK,
        upper_ok=lam_bar_opt <= lam_opt * factor + BOUND_SLACK,
    )


def polynomial_bound_factor(rho: float, r: float) -> float:
    """Worst-case efficiency ratio 1 / (1 - rho * r^r / (r+1)^(r+1)).

    The polynomial continuation rho * q^r * (1 - q) peaks at q = r / (r+1),
    where it equals rho * r^r / (r+1)^(r+1); this caps max_i c_i for any
    quality vector.  r^r is taken as 1 at r = 0, where the factor becomes
    1 / (1 - rho) and diverges to infinity at rho = 1.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if r < 0.0:
        raise ValueError(f"r must be >= 0, got {r}")
    peak = rho * r**r / (r + 1.0) ** (r + 1.0)
    if peak >= 1.0:
        return float("inf")
    return 1.0 / (1.0 - peak)


def _quality_ranked_reduced(market: Market, state: SocialState | None):
    """Reduced-market vectors arranged best reduced-quality first.

    Ordering by the reduced quality is what the alignment arguments need;
    for polynomial continuation with rho in (0, 1) it coincides with the
    plain quality order.
    """
    if np.any(np.diff(market.visibility) > 0.0):
        raise ValueError("visibilities must be non-increasing by position")
    cont = market.continuation_values()
    qbar, abar = _reduced_arrays(market.quality, _appeals(market, state), cont)
    order = np.argsort(-qbar, kind="stable")
    return market.visibility, qbar[order], abar[order], cont[order]


def position_bias_gain(market: Market) -> float:
    """Extra expected purchases from a visibility profile, under quality ranking.

    Returns the expected purchases with the market's (non-increasing)
    visibilities minus the value with all-equal visibilities, both under
    the quality ranking; non-negative up to float noise.
    """
    v, qbar, abar, _ = _quality_ranked_reduced(market, None)
    biased = float(np.sum(v * abar * qbar) / np.sum(v * abar))
    flat = float(np.sum(abar * qbar) / np.sum(abar))
    return biased - flat


def si_one_step_gain(market: Market, state: SocialState | None = None) -> float:
    """One-step change of the expected purchase rate under quality ranking.

    Evaluates the exact conditional expectation of the next participant's
    purchase rate: with probability p(buy j) the download count of j rises
    by one (lifting its reduced appeal by 1 - c_j), otherwise nothing
    changes.  The returned difference from the current rate is non-negative
    up to float noise, which is the social-influence benefit.
    """
    v, qbar, abar, cont = _quality_ranked_reduced(market, state)
    s = float(np.sum(v * abar))
    num = float(np.sum(v * abar * qbar))
    lam = num / s
    bump = v * (1.0 - cont)
    buy_prob = v * abar * qbar / s
    lam_after = (num + bump * qbar) / (s + bump)
    expected_next = float(np.sum(buy_prob * lam_after)) + (1.0 - lam) * lam
    return expected_next - lam


@dataclass(frozen=True)
class ImprovementRow:
    """One cell of the efficiency-improvement table."""

    rho: float
    r: float
    policy: PolicyKind
    efficiency_with: float
    efficiency_without: float
    improvement_pct: float


def improvement_table(
    pairs: list[tuple[SimConfig, SimResult, SimConfig, SimResult]],
) -> list[ImprovementRow]:
    """Percent efficiency improvement of continuation over the plain market.

    Each entry pairs a run with polynomial continuation against the
    matching run without continuation (same instance, policy, steps and
    replication count).  Efficiency is the mean total downloads per
    replication.
    """
    rows = []
    for cfg_with, res_with, cfg_without, res_without in pairs:
        if cfg_with.policy is not cfg_without.policy:
            raise ValueError(
                f"paired runs use different policies: "
                f"{cfg_with.policy.label} vs {cfg_without.policy.label}"
            )
        if cfg_with.steps != cfg_without.steps:
            raise ValueError("paired runs disagree on steps")
        if cfg_with.replications != cfg_without.replications:
            raise ValueError("paired runs disagree on replications")
        mw, mo = cfg_with.market, cfg_without.market
        if not (
            np.array_equal(mw.quality, mo.quality)
            and np.array_equal(mw.appeal, mo.appeal)
            and np.array_equal(mw.visibility, mo.visibility)
        ):
            raise ValueError("paired runs use different market instances")
        if cfg_with.market.continuation.kind != "polynomial":
            raise ValueError("the with-continuation run must use a polynomial spec")
        if not cfg_without.market.continuation.is_none:
            raise ValueError("the baseline run must have no continuation")
        eff_with = res_with.efficiency
        eff_without = res_without.efficiency
        if eff_without <= 0.0:
            raise ValueError("baseline efficiency is zero; improvement undefined")
        rows.append(
            ImprovementRow(
                rho=cfg_with.market.continuation.rho,
                r=cfg_with.market.continuation.r,
                policy=cfg_with.policy,
                efficiency_with=eff_with,
                efficiency_without=eff_without,
                improvement_pct=100.0 * (eff_with - eff_without) / eff_without,
            )
        )
    return rows


def download_quality_scatter(result: SimResult, market: Market) -> list[tuple]:
    """Long-format downloads-versus-quality table, one row per (product, replication).

    Rows carry (product_id, quality, quality_rank, replication, downloads)
    with 1-based ids, quality_rank 1 for the lowest quality, and are sorted
    by ascending quality then replication, ready for scatter plotting.
    """
    n = market.n
    if result.per_replication[0].downloads.shape[0] != n:
        raise ValueError("result and market disagree on the number of products")
    by_quality = np.argsort(market.quality, kind="stable")
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[by_quality] = np.arange(1, n + 1)
    rows = []
    for product in by_quality:
        for rep in result.per_replication:
            rows.append(
                (
                    int(product) + 1,
                    float(market.quality[product]),
                    int(rank_of[product]),
                    rep.replication,
                    int(rep.downloads[product]),
                )
            )
    return rows
