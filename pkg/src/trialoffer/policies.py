"""Ranking policies and the expected-purchases optimizer.

Four policies are supported: performance (P-rank, maximizes expected
purchases at the current social state), quality (Q-rank, best quality in
the most visible position), popularity (D-rank, most downloaded first) and
random (R-rank, a fresh uniform order each period).

The performance ranking is computed by a parametric ascent on the
fractional objective: for a trial value lam, the permutation maximizing
sum_i v_{sigma_i} a_i (q_i - lam) is a sort (pair the largest visibility
with the largest a_i (q_i - lam)), and the achieved expected purchases
weakly exceed lam.  Repeating until no improvement terminates finitely and
at the global optimum.  A factorial brute-force enumeration acts as the
oracle for small instances.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .market import (
    Market,
    Ranking,
    SocialState,
    _appeals,
    _reduced_arrays,
    expected_purchases,
    expected_purchases_with_continuation,
)

__all__ = [
    "BRUTE_FORCE_MAX_PRODUCTS",
    "OptimizerReport",
    "PolicyKind",
    "brute_force_ranking",
    "compute_ranking",
    "performance_ranking",
    "performance_ranking_with_continuation",
    "popularity_ranking",
    "quality_ranking",
    "random_ranking",
]

BRUTE_FORCE_MAX_PRODUCTS = 10
_BRUTE_CHUNK = 40320  # evaluate at most 8! permutations per vectorized block


class PolicyKind(enum.Enum):
    PERFORMANCE = "performance"
    QUALITY = "quality"
    POPULARITY = "popularity"
    RANDOM = "random"

    @property
    def label(self) -> str:
        """Short display name (P-rank, Q-rank, D-rank, R-rank)."""
        return {
            PolicyKind.PERFORMANCE: "P-rank",
            PolicyKind.QUALITY: "Q-rank",
            PolicyKind.POPULARITY: "D-rank",
            PolicyKind.RANDOM: "R-rank",
        }[self]

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        key = name.strip().lower()
        aliases = {
            "p-rank": cls.PERFORMANCE,
            "q-rank": cls.QUALITY,
            "d-rank": cls.POPULARITY,
            "r-rank": cls.RANDOM,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown ranking policy {name!r}") from None


@dataclass(frozen=True)
class OptimizerReport:
    """Result of a ranking optimization: the ranking, its objective value,
    how many candidate evaluations were made, and by which method."""

    ranking: Ranking
    objective: float
    iterations: int
    method: str  # "parametric" or "brute-force"


def _position_order(market: Market) -> np.ndarray:
    """Positions from most to least visible; identity for sorted profiles."""
    return np.argsort(-market.visibility, kind="stable")


def _assign(product_order: np.ndarray, position_order: np.ndarray) -> np.ndarray:
    """Pair the k-th best product with the k-th most visible position."""
    sigma = np.empty(len(product_order), dtype=np.int64)
    sigma[product_order] = position_order
    return sigma


def _quality_positions(quality, pos_order) -> np.ndarray:
    return _assign(np.argsort(-quality, kind="stable"), pos_order)


def _popularity_positions(downloads, appeal, pos_order) -> np.ndarray:
    order = np.lexsort((np.arange(len(appeal)), -appeal, -downloads))
    return _assign(order, pos_order)


def quality_ranking(market: Market) -> Ranking:
    """Best quality into the most visible position; ties by product index."""
    return Ranking(positions=_quality_positions(market.quality, _position_order(market)))


def popularity_ranking(market: Market, state: SocialState | None = None) -> Ranking:
    """Most downloaded first; ties by appeal, then by product index."""
    d = np.zeros(market.n, dtype=np.int64) if state is None else state.downloads
    return Ranking(
        positions=_popularity_positions(d, market.appeal, _position_order(market))
    )


def random_ranking(n: int, rng: np.random.Generator) -> Ranking:
    """Uniform random order drawn from the supplied stream."""
    if n < 1:
        raise ValueError(f"need at least one product, got n={n}")
    return Ranking(positions=rng.permutation(n))


def _parametric_positions(visibility, quality, appeal, pos_order, start_order):
    """Maximize sum v_{sigma_i} a_i q_i / sum v_{sigma_i} a_i over rankings.

    ``start_order`` seeds the ascent (products best first).  Ties in the
    sort keys break by product index (stable sorts).  Returns the optimal
    position vector and the number of candidate rankings evaluated.
    """

    def value(sigma):
        w = visibility[sigma] * appeal
        return float(np.sum(w * quality) / np.sum(w))

    best_sigma = _assign(start_order, pos_order)
    best_val = value(best_sigma)
    iterations = 1
    while True:
        keys = appeal * (quality - best_val)
        sigma = _assign(np.argsort(-keys, kind="stable"), pos_order)
        val = value(sigma)
        iterations += 1
        if val > best_val:
            best_val = val
            best_sigma = sigma
        else:
            return best_sigma, iterations


def performance_ranking(market: Market, state: SocialState | None = None) -> OptimizerReport:
    """Ranking maximizing expected purchases at the current social state.

    Only for markets without continuation; use
    :func:`performance_ranking_with_continuation` otherwise.
    """
    if not market.continuation.is_none:
        raise ValueError(
            "market has a continuation model; use "
            "performance_ranking_with_continuation"
        )
    a = _appeals(market, state)
    sigma, iterations = _parametric_positions(
        market.visibility,
        market.quality,
        a,
        _position_order(market),
        np.argsort(-market.quality, kind="stable"),
    )
    ranking = Ranking(positions=sigma)
    return OptimizerReport(
        ranking=ranking,
        objective=expected_purchases(market, ranking, state),
        iterations=iterations,
        method="parametric",
    )


def performance_ranking_with_continuation(
    market: Market, state: SocialState | None = None
) -> OptimizerReport:
    """Ranking maximizing expected purchases including continuation re-draws.

    Works on the reduced instance (quality q/(1-c), appeal a(1-c), social
    state folded into the appeals first); the reported objective is the
    original market's expected purchases with continuation.
    """
    a = _appeals(market, state)
    qbar, abar = _reduced_arrays(market.quality, a, market.continuation_values())
    sigma, iterations = _parametric_positions(
        market.visibility,
        qbar,
        abar,
        _position_order(market),
        np.argsort(-qbar, kind="stable"),
    )
    ranking = Ranking(positions=sigma)
    return OptimizerReport(
        ranking=ranking,
        objective=expected_purchases_with_continuation(market, ranking, state),
        iterations=iterations,
        method="parametric",
    )


def _brute_force_values(market, appeal, cont, sigmas, objective):
    """Objective values for a block of position vectors, row-wise.

    The row arithmetic mirrors the scalar evaluation functions so that the
    winning row re-evaluates to the exact same float.
    """
    w = market.visibility[sigmas] * appeal
    if objective == "lambda":
        return np.sum(w * market.quality, axis=1) / np.sum(w, axis=1)
    p = w / np.sum(w, axis=1)[:, None]
    return np.sum(p * market.quality, axis=1) / (1.0 - np.sum(p * cont, axis=1))


def brute_force_ranking(
    market: Market,
    state: SocialState | None = None,
    objective: str = "lambda",
) -> OptimizerReport:
    """Exhaustive search over all n! rankings; the optimizer's oracle.

    ``objective`` selects plain expected purchases ("lambda") or expected
    purchases with continuation ("lambda-bar").  Ties go to the
    lexicographically smallest position vector.  Refused for n > 10.
    """
    if objective not in ("lambda", "lambda-bar"):
        raise ValueError(f"objective must be 'lambda' or 'lambda-bar', got {objective!r}")
    n = market.n
    if n > BRUTE_FORCE_MAX_PRODUCTS:
        raise ValueError(
            f"brute force is limited to n <= {BRUTE_FORCE_MAX_PRODUCTS}, got n={n}"
        )
    a = _appeals(market, state)
    cont = market.continuation_values()
    best_sigma = None
    best_val = -math.inf
    perms = itertools.permutations(range(n))
    while True:
        block = list(itertools.islice(perms, _BRUTE_CHUNK))
        if not block:
            break
        sigmas = np.array(block, dtype=np.int64)
        vals = _brute_force_values(market, a, cont, sigmas, objective)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_sigma = sigmas[k]
    ranking = Ranking(positions=best_sigma)
    if objective == "lambda":
        obj = expected_purchases(market, ranking, state)
    else:
        obj = expected_purchases_with_continuation(market, ranking, state)
    return OptimizerReport(
        ranking=ranking,
        objective=obj,
        iterations=math.factorial(n),
        method="brute-force",
    )


def compute_ranking(
    policy: PolicyKind,
    market: Market,
    state: SocialState | None = None,
    rng: np.random.Generator | None = None,
) -> Ranking:
    """Dispatch a policy to the ranking it proposes at the given state."""
    if policy is PolicyKind.QUALITY:
        return quality_ranking(market)
    if policy is PolicyKind.POPULARITY:
        return popularity_ranking(market, state)
    if policy is PolicyKind.RANDOM:
        if rng is None:
            raise ValueError("the random policy needs an explicit random stream")
        return random_ranking(market.n, rng)
    return performance_ranking_with_continuation(market, state).ranking
