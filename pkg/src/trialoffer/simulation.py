"""Agent-based Monte Carlo simulation of the dynamic market.

Each of N participants runs one session: try a product, buy it with its
quality probability, otherwise keep shopping with probability
c_i / (1 - q_i), which makes c_i the per-try probability of declining and
continuing, exactly as in the analytical model.  Purchases feed the
social-influence signal (when enabled), and the display ranking is
recomputed by the configured policy every ``rerank_period`` participants,
never mid-session.

Everything is reproducible: replication w draws from streams seeded by
SeedSequence([base_seed, w, lane]) (lane 0 for session draws, lane 1 for
policy randomness), so results are independent of scheduling and identical
across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import session_block
from .market import Market, Ranking, SocialState, _reduced_arrays
from .policies import (
    PolicyKind,
    _parametric_positions,
    _popularity_positions,
    _quality_positions,
    quality_ranking,
)

__all__ = [
    "ReplicationResult",
    "SessionOutcome",
    "SimConfig",
    "SimResult",
    "first_purchase_frequencies",
    "run_replications",
    "run_session",
    "run_simulation",
]


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation experiment cell."""

    market: Market
    policy: PolicyKind
    steps: int
    rerank_period: int = 50
    replications: int = 1
    base_seed: int = 0
    max_session_tries: int = 10_000
    social_influence: bool = True
    trajectory_interval: int | None = None  # defaults to steps // 200

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.rerank_period < 1:
            raise ValueError(f"rerank_period must be >= 1, got {self.rerank_period}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.max_session_tries < 1:
            raise ValueError(
                f"max_session_tries must be >= 1, got {self.max_session_tries}"
            )
        if self.base_seed < 0 or self.base_seed >= 2**64:
            raise ValueError(
                f"base_seed must be an unsigned 64-bit integer, got {self.base_seed}"
            )
        if self.trajectory_interval is not None and self.trajectory_interval < 1:
            raise ValueError(
                f"trajectory_interval must be >= 1, got {self.trajectory_interval}"
            )

    @property
    def effective_trajectory_interval(self) -> int:
        if self.trajectory_interval is not None:
            return self.trajectory_interval
        return max(1, self.steps // 200)


@dataclass(frozen=True)
class SessionOutcome:
    purchased: int | None
    tries: int
    truncated: bool


@dataclass(frozen=True)
class ReplicationResult:
    """Raw outcome of a single replication."""

    replication: int
    downloads: np.ndarray  # final per-product purchase counts
    trajectory_steps: np.ndarray  # participant counts at the sample points
    trajectory_downloads: np.ndarray  # cumulative purchases at those points
    tries_total: int
    truncated_sessions: int

    @property
    def total_downloads(self) -> int:
        return int(self.downloads.sum())


@dataclass(frozen=True)
class SimResult:
    """One or more replications of a cell, with aggregate views.

    ``downloads_final`` and ``downloads_trajectory`` are means over the
    replications (for a single replication they coincide with its counts);
    the exact per-replication integers live in ``per_replication``.
    """

    policy: PolicyKind
    steps: int
    seed_used: int
    per_replication: tuple[ReplicationResult, ...] = field(repr=False)

    @property
    def replications(self) -> int:
        return len(self.per_replication)

    @property
    def downloads_final(self) -> np.ndarray:
        return np.mean([r.downloads for r in self.per_replication], axis=0)

    @property
    def trajectory_steps(self) -> np.ndarray:
        return self.per_replication[0].trajectory_steps

    @property
    def downloads_trajectory(self) -> np.ndarray:
        return np.mean([r.trajectory_downloads for r in self.per_replication], axis=0)

    @property
    def tries_total(self) -> int:
        return sum(r.tries_total for r in self.per_replication)

    @property
    def truncated_sessions(self) -> int:
        return sum(r.truncated_sessions for r in self.per_replication)

    @property
    def efficiency(self) -> float:
        """Mean total downloads per replication, the market-efficiency measure."""
        return float(np.mean([r.total_downloads for r in self.per_replication]))


def _session_continuation(market: Market) -> np.ndarray:
    """Continuation probabilities, checked to be realizable in a session.

    A session continues only after a decline, so c_i must not exceed the
    decline probability 1 - q_i.  The polynomial family satisfies this by
    construction; explicit vectors beyond it describe markets whose closed
    forms exist but whose one-purchase sessions do not.
    """
    cont = market.continuation_values()
    if np.any(cont > 1.0 - market.quality + 1e-12):
        raise ValueError(
            "continuation exceeds the decline probability (c_i > 1 - q_i) "
            "for some product; such a market cannot be simulated"
        )
    return cont


def _session_stream(base_seed: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, replication, 0]))


def _policy_stream(base_seed: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, replication, 1]))


def run_session(
    market: Market,
    ranking: Ranking,
    state: SocialState | None = None,
    rng: np.random.Generator | None = None,
    max_tries: int = 10_000,
) -> SessionOutcome:
    """Run one participant session against a frozen social state.

    The state only changes on a purchase, which ends the session, so the
    trial weights stay fixed throughout.
    """
    if rng is None:
        raise ValueError("run_session needs an explicit random stream")
    if max_tries < 1:
        raise ValueError(f"max_tries must be >= 1, got {max_tries}")
    if state is None:
        state = SocialState.initial(market.n)
    if ranking.n != market.n or state.downloads.shape[0] != market.n:
        raise ValueError("ranking/state size does not match the market")
    purchased, tries, truncated = session_block(
        rng,
        1,
        market.visibility[ranking.positions],
        np.asarray(market.appeal),
        np.array(state.downloads, dtype=np.int64),
        np.asarray(market.quality),
        _session_continuation(market),
        False,
        max_tries,
    )
    product = int(purchased[0])
    return SessionOutcome(
        purchased=product if product >= 0 else None,
        tries=int(tries[0]),
        truncated=bool(truncated),
    )


def _trajectory_points(steps: int, interval: int) -> np.ndarray:
    pts = np.arange(interval, steps + 1, interval, dtype=np.int64)
    if pts.size == 0 or pts[-1] != steps:
        pts = np.append(pts, steps)
    return pts


def run_simulation(cfg: SimConfig, replication_index: int = 0) -> SimResult:
    """Run a single replication; deterministic in (base_seed, replication_index)."""
    rep = _run_replication(cfg, replication_index)
    return SimResult(
        policy=cfg.policy,
        steps=cfg.steps,
        seed_used=cfg.base_seed,
        per_replication=(rep,),
    )


def _positions_supplier(cfg: SimConfig, downloads, policy_rng):
    """Per-block position vectors for the configured policy.

    Shares the array-level policy implementations with the public ranking
    functions; static work (visibility order, reduced quality) is hoisted
    out of the per-block path.
    """
    market = cfg.market
    quality = np.asarray(market.quality)
    appeal = np.asarray(market.appeal)
    visibility = np.asarray(market.visibility)
    pos_order = np.argsort(-visibility, kind="stable")
    if cfg.policy is PolicyKind.QUALITY:
        sigma = _quality_positions(quality, pos_order)
        return lambda: sigma
    if cfg.policy is PolicyKind.POPULARITY:
        return lambda: _popularity_positions(downloads, appeal, pos_order)
    if cfg.policy is PolicyKind.RANDOM:
        return lambda: policy_rng.permutation(market.n)
    qbar, _ = _reduced_arrays(quality, appeal, market.continuation_values())
    keep = 1.0 - market.continuation_values()
    start_order = np.argsort(-qbar, kind="stable")

    def performance():
        abar = (appeal + downloads) * keep
        sigma, _ = _parametric_positions(visibility, qbar, abar, pos_order, start_order)
        return sigma

    return performance


def _run_replication(cfg: SimConfig, replication_index: int) -> ReplicationResult:
    market = cfg.market
    n = market.n
    session_rng = _session_stream(cfg.base_seed, replication_index)
    policy_rng = _policy_stream(cfg.base_seed, replication_index)
    quality = np.asarray(market.quality)
    appeal = np.asarray(market.appeal)
    visibility = np.asarray(market.visibility)
    cont = _session_continuation(market)
    downloads = np.zeros(n, dtype=np.int64)
    next_positions = _positions_supplier(cfg, downloads, policy_rng)
    # the quality ranking never changes, so its re-rank boundaries are no-ops
    # and the whole run can go through the kernel in one block
    period = cfg.steps if cfg.policy is PolicyKind.QUALITY else cfg.rerank_period
    purchased_all = np.empty(cfg.steps, dtype=np.int64)
    tries_total = 0
    truncated = 0
    done = 0
    while done < cfg.steps:
        block = min(period, cfg.steps - done)
        purchased, tries, trunc = session_block(
            session_rng,
            block,
            visibility[next_positions()],
            appeal,
            downloads,
            quality,
            cont,
            cfg.social_influence,
            cfg.max_session_tries,
        )
        purchased_all[done : done + block] = purchased
        tries_total += int(tries.sum())
        truncated += int(trunc)
        done += block
    bought = purchased_all[purchased_all >= 0]
    final = np.bincount(bought, minlength=n).astype(np.int64)
    points = _trajectory_points(cfg.steps, cfg.effective_trajectory_interval)
    cumulative = np.cumsum(purchased_all >= 0)
    return ReplicationResult(
        replication=replication_index,
        downloads=final,
        trajectory_steps=points,
        trajectory_downloads=cumulative[points - 1].astype(np.int64),
        tries_total=tries_total,
        truncated_sessions=truncated,
    )


def run_replications(cfg: SimConfig) -> SimResult:
    """Run all configured replications on independent streams."""
    reps = tuple(_run_replication(cfg, w) for w in range(cfg.replications))
    return SimResult(
        policy=cfg.policy,
        steps=cfg.steps,
        seed_used=cfg.base_seed,
        per_replication=reps,
    )


def first_purchase_frequencies(cfg: SimConfig, sessions: int) -> np.ndarray:
    """Monte Carlo law of which product a session's purchase lands on.

    Runs independent sessions under the quality ranking with the social
    state frozen at zero and tallies the purchased product, normalized over
    the sessions that did purchase.  Converges to the closed-form
    next-purchase distribution.
    """
    if cfg.policy is not PolicyKind.QUALITY:
        raise ValueError("first-purchase frequencies are defined under the quality policy")
    if sessions < 1:
        raise ValueError(f"sessions must be >= 1, got {sessions}")
    market = cfg.market
    ranking = quality_ranking(market)
    rng = _session_stream(cfg.base_seed, 0)
    purchased, _, _ = session_block(
        rng,
        sessions,
        market.visibility[ranking.positions],
        np.asarray(market.appeal),
        np.zeros(market.n, dtype=np.int64),
        np.asarray(market.quality),
        _session_continuation(market),
        False,
        cfg.max_session_tries,
    )
    bought = purchased[purchased >= 0]
    if bought.size == 0:
        raise ValueError("no session ended in a purchase; frequencies undefined")
    return np.bincount(bought, minlength=market.n) / bought.size
