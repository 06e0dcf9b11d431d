"""Core model of a trial-offer market with continuation.

A market consists of n products, each with an appeal A_i > 0 (how likely it
is to be tried) and a quality q_i in [0, 1] (probability a trial turns into
a purchase), displayed in a list whose positions carry visibility weights
v_p > 0.  A participant tries product i with probability proportional to
v_{sigma_i} * a_i, where a_i is the appeal boosted by the social-influence
signal (download count).  After declining a product the participant keeps
shopping with probability c_i, the continuation probability.

This module holds the instance types, every closed-form quantity of the
static market (trial probabilities, expected purchases with and without
continuation, effective sampling rates, the next-purchase law) and the
reduction that maps a market with continuation onto a plain one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ContinuationSpec",
    "Market",
    "Ranking",
    "SocialState",
    "continuation_probability",
    "effective_sample_probabilities",
    "expected_purchases",
    "expected_purchases_with_continuation",
    "fold_social_state",
    "lambda_fixed_point",
    "next_purchase_distribution",
    "reduce_market",
    "try_probabilities",
]

FIXED_POINT_MAX_ITERATIONS = 10**6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=a.dtype, copy=True)
    a.setflags(write=False)
    return a


def continuation_probability(q: float, rho: float, r: float) -> float:
    """Polynomial continuation probability rho * q**r * (1 - q).

    rho scales the overall tendency to keep shopping, r shifts where the
    peak sits (at q = r / (r + 1)).  q**r is taken as 1 at q = 0, r = 0,
    so r = 0 yields the quality-independent family rho * (1 - q).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quality must lie in [0, 1], got {q}")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if r < 0.0:
        raise ValueError(f"r must be >= 0, got {r}")
    return rho * q**r * (1.0 - q)


@dataclass(frozen=True)
class ContinuationSpec:
    """How the continuation probability c_i is derived from quality.

    Three kinds:
      * ``none``        -- no continuation, c_i = 0 everywhere
      * ``polynomial``  -- c_i = rho * q_i**r * (1 - q_i)
      * ``explicit``    -- a caller-supplied vector, each entry in [0, 1)
    """

    kind: str = "none"
    rho: float = 0.0
    r: float = 0.0
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "polynomial", "explicit"):
            raise ValueError(f"unknown continuation kind {self.kind!r}")
        if self.kind == "polynomial":
            if not 0.0 <= self.rho <= 1.0:
                raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
            if self.r < 0.0:
                raise ValueError(f"r must be >= 0, got {self.r}")
        if self.kind == "explicit":
            if self.values is None:
                raise ValueError("explicit continuation requires a value vector")
            vals = np.asarray(self.values, dtype=float)
            if vals.ndim != 1 or vals.size == 0:
                raise ValueError("explicit continuation vector must be 1-D and non-empty")
            if np.any(vals < 0.0) or np.any(vals >= 1.0):
                raise ValueError("explicit continuation values must lie in [0, 1)")
            object.__setattr__(self, "values", _readonly(vals))
        elif self.values is not None:
            raise ValueError(f"continuation kind {self.kind!r} takes no value vector")

    @classmethod
    def none(cls) -> "ContinuationSpec":
        return cls(kind="none")

    @classmethod
    def polynomial(cls, rho: float, r: float) -> "ContinuationSpec":
        return cls(kind="polynomial", rho=rho, r=r)

    @classmethod
    def explicit(cls, values) -> "ContinuationSpec":
        return cls(kind="explicit", values=np.asarray(values, dtype=float))

    @property
    def is_none(self) -> bool:
        return self.kind == "none"

    def probabilities(self, quality: np.ndarray) -> np.ndarray:
        """Continuation probability for each product of the given quality vector."""
        quality = np.asarray(quality, dtype=float)
        if self.kind == "none":
            return np.zeros_like(quality)
        if self.kind == "polynomial":
            # 0**0 evaluates to 1.0, which is exactly the r = 0 convention.
            return self.rho * quality**self.r * (1.0 - quality)
        if len(self.values) != len(quality):
            raise ValueError(
                f"explicit continuation vector has length {len(self.values)}, "
                f"market has {len(quality)} products"
            )
        return np.array(self.values, copy=True)


@dataclass(frozen=True)
class Market:
    """A static trial-offer market instance.

    quality[i]    purchase probability of product i given a trial, in [0, 1]
    appeal[i]     inherent trial weight of product i, > 0
    visibility[p] trial weight of list position p, > 0, non-increasing
    continuation  how c_i is derived from quality

    ``reduced`` tags markets produced by :func:`reduce_market`; on those the
    quality entries are expected purchase counts per trial and may exceed 1.
    ``allow_unsorted_visibility`` admits visibility vectors that are not
    non-increasing, for position-bias experiments; such markets are rejected
    by checks whose hypotheses need the sorted profile.
    """

    quality: np.ndarray
    appeal: np.ndarray
    visibility: np.ndarray
    continuation: ContinuationSpec = field(default_factory=ContinuationSpec.none)
    reduced: bool = False
    allow_unsorted_visibility: bool = False

    def __post_init__(self):
        q = np.asarray(self.quality, dtype=float)
        a = np.asarray(self.appeal, dtype=float)
        v = np.asarray(self.visibility, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("quality must be a non-empty 1-D vector")
        if a.shape != q.shape or v.shape != q.shape:
            raise ValueError(
                f"quality, appeal and visibility must share one length, got "
                f"{q.shape[0]}, {a.shape[0]}, {v.shape[0]}"
            )
        if np.any(q < 0.0) or (not self.reduced and np.any(q > 1.0)):
            raise ValueError("quality entries must lie in [0, 1]")
        if np.any(a <= 0.0):
            raise ValueError("appeal entries must be > 0")
        if np.any(v <= 0.0):
            raise ValueError("visibility entries must be > 0")
        if not self.allow_unsorted_visibility and np.any(np.diff(v) > 0.0):
            raise ValueError(
                "visibility must be non-increasing by position "
                "(pass allow_unsorted_visibility=True to override)"
            )
        if self.continuation.kind == "explicit" and len(self.continuation.values) != q.size:
            raise ValueError(
                f"explicit continuation vector has length "
                f"{len(self.continuation.values)}, market has {q.size} products"
            )
        object.__setattr__(self, "quality", _readonly(q))
        object.__setattr__(self, "appeal", _readonly(a))
        object.__setattr__(self, "visibility", _readonly(v))

    @property
    def n(self) -> int:
        return self.quality.shape[0]

    def continuation_values(self) -> np.ndarray:
        """The per-product continuation probabilities c_i."""
        return self.continuation.probabilities(self.quality)

    def without_continuation(self) -> "Market":
        """The same instance with continuation switched off."""
        if self.continuation.is_none:
            return self
        return dataclasses.replace(self, continuation=ContinuationSpec.none())


@dataclass(frozen=True)
class Ranking:
    """A bijection between products and list positions.

    positions[i] is the position of product i (the ranking proper) and
    products[p] is the product displayed at position p (the list, its
    inverse).  Both are 0-based internally; :meth:`product_list` renders
    the 1-based list order used in printed output.
    """

    positions: np.ndarray
    products: np.ndarray | None = None

    def __post_init__(self):
        sigma = np.asarray(self.positions, dtype=np.int64)
        n = sigma.shape[0]
        if sigma.ndim != 1 or n == 0:
            raise ValueError("positions must be a non-empty 1-D vector")
        if not np.array_equal(np.sort(sigma), np.arange(n)):
            raise ValueError("positions must be a permutation of 0..n-1")
        pi = np.empty(n, dtype=np.int64)
        pi[sigma] = np.arange(n)
        if self.products is not None and not np.array_equal(
            np.asarray(self.products, dtype=np.int64), pi
        ):
            raise ValueError("products is not the inverse of positions")
        object.__setattr__(self, "positions", _readonly(sigma))
        object.__setattr__(self, "products", _readonly(pi))

    @classmethod
    def identity(cls, n: int) -> "Ranking":
        return cls(positions=np.arange(n))

    @classmethod
    def from_product_order(cls, products) -> "Ranking":
        """Build from the list order: products[p] is shown at position p."""
        pi = np.asarray(products, dtype=np.int64)
        n = pi.shape[0]
        if not np.array_equal(np.sort(pi), np.arange(n)):
            raise ValueError("product order must be a permutation of 0..n-1")
        sigma = np.empty(n, dtype=np.int64)
        sigma[pi] = np.arange(n)
        return cls(positions=sigma)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def product_list(self) -> list[int]:
        """List order as 1-based product ids, top position first."""
        return [int(p) + 1 for p in self.products]


@dataclass(frozen=True)
class SocialState:
    """Download counts accumulated after ``step`` participants."""

    downloads: np.ndarray
    step: int = 0

    def __post_init__(self):
        d = np.asarray(self.downloads, dtype=np.int64)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("downloads must be a non-empty 1-D vector")
        if np.any(d < 0):
            raise ValueError("download counts must be >= 0")
        if int(d.sum()) > self.step:
            raise ValueError(
                f"{int(d.sum())} downloads recorded after only {self.step} "
                "participants (at most one purchase each)"
            )
        object.__setattr__(self, "downloads", _readonly(d))

    @classmethod
    def initial(cls, n: int) -> "SocialState":
        return cls(downloads=np.zeros(n, dtype=np.int64), step=0)


def _check_compatible(market: Market, ranking: Ranking, state: SocialState | None):
    if ranking.n != market.n:
        raise ValueError(f"ranking has {ranking.n} entries, market has {market.n} products")
    if state is not None and state.downloads.shape[0] != market.n:
        raise ValueError(
            f"social state has {state.downloads.shape[0]} entries, "
            f"market has {market.n} products"
        )


def _appeals(market: Market, state: SocialState | None) -> np.ndarray:
    if state is None:
        return np.asarray(market.appeal)
    return market.appeal + state.downloads


def _trial_weights(market, ranking, state) -> np.ndarray:
    """Unnormalized trial weights v_{sigma_i} * (A_i + d_i)."""
    _check_compatible(market, ranking, state)
    return market.visibility[ranking.positions] * _appeals(market, state)


def fold_social_state(market: Market, state: SocialState | None) -> Market:
    """Absorb the download counts into the appeal vector.

    The dynamic market at a given step behaves exactly like a static market
    with appeals A_i + d_i; this returns that static instance.
    """
    if state is None:
        return market
    if state.downloads.shape[0] != market.n:
        raise ValueError(
            f"social state has {state.downloads.shape[0]} entries, "
            f"market has {market.n} products"
        )
    return dataclasses.replace(market, appeal=market.appeal + state.downloads)


def try_probabilities(
    market: Market, ranking: Ranking, state: SocialState | None = None
) -> np.ndarray:
    """Probability of trying each product in a single draw.

    Entry i equals v_{sigma_i} (A_i + d_i) / sum_j v_{sigma_j} (A_j + d_j);
    the output is a point on the probability simplex.
    """
    w = _trial_weights(market, ranking, state)
    return w / np.sum(w)


def expected_purchases(
    market: Market, ranking: Ranking, state: SocialState | None = None
) -> float:
    """Expected purchases per participant when everyone tries exactly once.

    This is sum_i p_i(sigma, d) q_i, the market efficiency of the plain
    model; any continuation attached to the market is ignored.
    """
    w = _trial_weights(market, ranking, state)
    return float(np.sum(w * market.quality) / np.sum(w))


def expected_purchases_with_continuation(
    market: Market, ranking: Ranking, state: SocialState | None = None
) -> float:
    """Expected purchases per participant when declining may lead to a re-draw.

    Closed form sum_i p_i q_i / (1 - sum_i p_i c_i), the fixed point of
    lam -> sum_i p_i (q_i + c_i lam).  Requires sum_i p_i c_i < 1, which
    every valid continuation spec guarantees.
    """
    if market.continuation.is_none:
        return expected_purchases(market, ranking, state)
    p = try_probabilities(market, ranking, state)
    c = market.continuation_values()
    escape = 1.0 - np.sum(p * c)
    if escape <= 0.0:
        raise ValueError(
            "expected continuation per trial is >= 1; the session never ends"
        )
    return float(np.sum(p * market.quality) / escape)


def lambda_fixed_point(
    market: Market,
    ranking: Ranking,
    state: SocialState | None = None,
    tol: float = 1e-12,
) -> float:
    """Expected purchases with continuation, by fixed-point iteration.

    Iterates lam <- sum_i p_i (q_i + c_i lam) from lam = 0 until successive
    values differ by less than ``tol``.  The map contracts with factor
    sum_i p_i c_i < 1, so this converges; it serves as an independent check
    of the closed form in :func:`expected_purchases_with_continuation`.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be > 0, got {tol}")
    p = try_probabilities(market, ranking, state)
    c = market.continuation_values()
    q = market.quality
    lam = 0.0
    for _ in range(FIXED_POINT_MAX_ITERATIONS):
        nxt = float(np.sum(p * (q + c * lam)))
        if abs(nxt - lam) < tol:
            return nxt
        lam = nxt
    raise RuntimeError(
        f"fixed-point iteration did not converge within "
        f"{FIXED_POINT_MAX_ITERATIONS} steps "
        f"(contraction rate {float(np.sum(p * c))})"
    )


def _reduced_arrays(quality, appeal, cont):
    """Transformed quality q/(1-c) and appeal a*(1-c) of the reduced market."""
    if np.any(cont >= 1.0):
        raise ValueError(
            "cannot reduce a market with a continuation probability >= 1"
        )
    keep = 1.0 - cont
    return quality / keep, appeal * keep


def reduce_market(market: Market) -> Market:
    """Map a market with continuation onto an equivalent plain market.

    The reduced market uses quality q_i / (1 - c_i) and appeal a_i (1 - c_i)
    with the same visibilities; its expected purchases under any ranking
    equal the original market's expected purchases with continuation.  The
    transformed qualities may exceed 1 (they count expected purchases per
    trial), so the result is tagged ``reduced``.
    """
    cont = market.continuation_values()
    qbar, abar = _reduced_arrays(market.quality, market.appeal, cont)
    return dataclasses.replace(
        market,
        quality=qbar,
        appeal=abar,
        continuation=ContinuationSpec.none(),
        reduced=True,
    )


def effective_sample_probabilities(
    market: Market, ranking: Ranking, state: SocialState | None = None
) -> np.ndarray:
    """Expected number of trials of each product per participant session.

    Entry i is p_i / (1 - sum_j p_j c_j): the chance of sampling product i
    in any number of steps, counting re-draws.  Entries can sum to more
    than 1, and weighting them by quality recovers the expected purchases
    with continuation.
    """
    p = try_probabilities(market, ranking, state)
    c = market.continuation_values()
    escape = 1.0 - np.sum(p * c)
    if escape <= 0.0:
        raise ValueError(
            "expected continuation per trial is >= 1; the session never ends"
        )
    return p / escape


def next_purchase_distribution(
    market: Market, ranking: Ranking, state: SocialState | None = None
) -> np.ndarray:
    """Distribution of which product the next purchase lands on.

    Proportional to v_{sigma_i} a_i q_i, independent of the continuation
    probabilities: continuation changes how long the wait is, not what is
    eventually bought.
    """
    w = _trial_weights(market, ranking, state) * market.quality
    total = np.sum(w)
    if total <= 0.0:
        raise ValueError("no product has positive quality; no purchase ever occurs")
    return w / total
