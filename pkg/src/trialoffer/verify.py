"""Randomized property suite behind the ``verify`` subcommand.

Every structural guarantee of the library is re-checked here on freshly
drawn instances: the reduction identity, the fixed-point oracle for the
closed form, optimizer-versus-enumeration exactness, the efficiency
bracket, order preservation of the quality ranking, the position-bias and
social-influence gains, and the Monte Carlo next-purchase law.  All
randomness comes from one seeded generator, so a run is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import (
    GAIN_SLACK,
    efficiency_bounds,
    polynomial_bound_factor,
    position_bias_gain,
    si_one_step_gain,
)
from .instances import demo_market, random_market
from .market import (
    ContinuationSpec,
    Ranking,
    SocialState,
    expected_purchases,
    expected_purchases_with_continuation,
    lambda_fixed_point,
    next_purchase_distribution,
    reduce_market,
)
from .policies import (
    brute_force_ranking,
    performance_ranking,
    performance_ranking_with_continuation,
    quality_ranking,
)
from .simulation import PolicyKind, SimConfig, first_purchase_frequencies

__all__ = ["CheckResult", "run_checks"]

IDENTITY_TOL = 1e-12
ITERATIVE_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_state(rng, n) -> SocialState:
    d = rng.integers(0, 50, n)
    return SocialState(downloads=d, step=int(d.sum()))


def check_reduction_identity(rng, instances, reduce_fn=reduce_market) -> CheckResult:
    """Expected purchases of the reduced market must equal the original's
    expected purchases with continuation, for any ranking."""
    worst = 0.0
    for _ in range(instances):
        m = random_market(rng)
        rk = Ranking(positions=rng.permutation(m.n))
        lam_reduced = expected_purchases(reduce_fn(m), rk)
        lam_bar = expected_purchases_with_continuation(m, rk)
        worst = max(worst, abs(lam_reduced - lam_bar))
    return CheckResult(
        name="reduction-identity",
        passed=worst <= IDENTITY_TOL,
        detail=(
            f"{instances} instances, max |lambda(reduced) - lambda-bar(original)| "
            f"= {worst:.3e} (tol {IDENTITY_TOL:.0e})"
        ),
    )


def check_fixed_point(rng, instances) -> CheckResult:
    """Closed-form expected purchases with continuation must match the
    contraction iteration."""
    worst = 0.0
    for _ in range(instances):
        m = random_market(rng)
        rk = Ranking(positions=rng.permutation(m.n))
        closed = expected_purchases_with_continuation(m, rk)
        iterated = lambda_fixed_point(m, rk, tol=1e-14)
        worst = max(worst, abs(closed - iterated))
    return CheckResult(
        name="fixed-point-oracle",
        passed=worst <= ITERATIVE_TOL,
        detail=(
            f"{instances} instances, max |closed - iterated| = {worst:.3e} "
            f"(tol {ITERATIVE_TOL:.0e})"
        ),
    )


def check_optimizer_exactness(rng, instances) -> CheckResult:
    """The parametric optimizer must tie the brute-force maximum exactly,
    for both objectives."""
    failures = 0
    for i in range(instances):
        m = random_market(rng, n_min=1, n_max=8)
        state = _random_state(rng, m.n) if i % 2 else None
        plain = m.without_continuation()
        if (
            performance_ranking(plain, state).objective
            != brute_force_ranking(plain, state, "lambda").objective
        ):
            failures += 1
        if (
            performance_ranking_with_continuation(m, state).objective
            != brute_force_ranking(m, state, "lambda-bar").objective
        ):
            failures += 1
    return CheckResult(
        name="optimizer-exactness",
        passed=failures == 0,
        detail=(
            f"{instances} instances (n <= 8), both objectives, "
            f"{failures} deviations from the brute-force maximum"
        ),
    )


def check_bounds(rng, instances) -> CheckResult:
    """Efficiency bracket and its polynomial worst-case factor.

    The bracket itself holds for any continuation vector, so every fourth
    instance uses an explicit spec; the closed-form cap is polynomial-only.
    """
    failures = 0
    for i in range(instances):
        family = "explicit" if i % 4 == 3 else "polynomial"
        m = random_market(rng, n_min=1, n_max=6, continuation=family)
        cert = efficiency_bounds(m, method="brute")
        ok = cert.ok
        if m.continuation.kind == "polynomial":
            cap = polynomial_bound_factor(m.continuation.rho, m.continuation.r)
            ok = ok and cert.upper_factor <= cap + IDENTITY_TOL
        if not ok:
            failures += 1
    return CheckResult(
        name="efficiency-bounds",
        passed=failures == 0,
        detail=(
            f"{instances} instances (brute-force optima, n <= 6), "
            f"{failures} violated certificates"
        ),
    )


def check_order_preservation(rng, instances) -> CheckResult:
    """Quality ranking must be unchanged by the reduction for polynomial
    continuation with rho in (0, 1)."""
    failures = 0
    for _ in range(instances):
        m = random_market(rng, continuation="polynomial", rho_range=(0.01, 0.99))
        before = quality_ranking(m).positions
        after = quality_ranking(reduce_market(m)).positions
        if not np.array_equal(before, after):
            failures += 1
    return CheckResult(
        name="order-preservation",
        passed=failures == 0,
        detail=f"{instances} instances with rho in (0, 1), {failures} permutation changes",
    )


def check_position_bias(rng, instances) -> CheckResult:
    """Sorted visibilities never hurt the quality ranking.

    Holds for any continuation vector; explicit specs are mixed in."""
    worst = np.inf
    for i in range(instances):
        family = "explicit" if i % 4 == 3 else "polynomial"
        worst = min(worst, position_bias_gain(random_market(rng, continuation=family)))
    return CheckResult(
        name="position-bias-gain",
        passed=worst >= -GAIN_SLACK,
        detail=f"{instances} instances, min gain = {worst:.3e} (slack {GAIN_SLACK:.0e})",
    )


def check_si_gain(rng, instances) -> CheckResult:
    """The expected purchase rate never drops after one more participant.

    Holds for any continuation vector; explicit specs are mixed in."""
    worst = np.inf
    for i in range(instances):
        family = "explicit" if i % 4 == 3 else "polynomial"
        m = random_market(rng, continuation=family)
        worst = min(worst, si_one_step_gain(m, _random_state(rng, m.n)))
    return CheckResult(
        name="social-influence-gain",
        passed=worst >= -GAIN_SLACK,
        detail=f"{instances} instances with random downloads, min gain = {worst:.3e}",
    )


def check_next_purchase(rng, sessions=100_000) -> CheckResult:
    """Monte Carlo first-purchase frequencies must match the closed-form
    law, with and without continuation."""
    seed = int(rng.integers(0, 2**32))
    worst_sigmas = 0.0
    for cont in (ContinuationSpec.polynomial(0.8, 0.7), ContinuationSpec.none()):
        m = demo_market(cont)
        law = next_purchase_distribution(m, quality_ranking(m))
        cfg = SimConfig(market=m, policy=PolicyKind.QUALITY, steps=1, base_seed=seed)
        freq = first_purchase_frequencies(cfg, sessions)
        se = np.sqrt(law * (1.0 - law) / sessions)
        worst_sigmas = max(worst_sigmas, float(np.max(np.abs(freq - law) / se)))
    return CheckResult(
        name="next-purchase-law",
        passed=worst_sigmas <= 3.0,
        detail=(
            f"{sessions} sessions, continuation on and off, "
            f"max deviation = {worst_sigmas:.2f} standard errors (limit 3)"
        ),
    )


def run_checks(
    instances: int = 500,
    seed: int = 0,
    sessions: int = 100_000,
    reduce_fn=reduce_market,
) -> list[CheckResult]:
    """Run the whole suite on ``instances`` random instances per check."""
    if instances < 1:
        raise ValueError(f"instances must be >= 1, got {instances}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    return [
        check_reduction_identity(rng, instances, reduce_fn=reduce_fn),
        check_fixed_point(rng, instances),
        check_optimizer_exactness(rng, instances),
        check_bounds(rng, instances),
        check_order_preservation(rng, instances),
        check_position_bias(rng, instances),
        check_si_gain(rng, instances),
        check_next_purchase(rng, sessions=sessions),
    ]
