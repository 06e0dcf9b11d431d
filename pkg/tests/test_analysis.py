"""Structural guarantees: bounds, position bias, social-influence gain,
and the experiment summary tables."""

import dataclasses
import math

import numpy as np
import pytest

from trialoffer import (
    ContinuationSpec,
    Market,
    PolicyKind,
    SimConfig,
    SocialState,
    download_quality_scatter,
    efficiency_bounds,
    improvement_table,
    polynomial_bound_factor,
    position_bias_gain,
    run_replications,
    si_one_step_gain,
)
from trialoffer.analysis import SCATTER_COLUMNS
from trialoffer.instances import demo_market, random_market


class TestEfficiencyBounds:
    def test_no_continuation_is_tight(self):
        cert = efficiency_bounds(demo_market())
        assert cert.lambda_opt == cert.lambda_bar_opt
        assert cert.upper_factor == 1.0
        assert cert.ok

    def test_strong_continuation_certificate(self):
        cert = efficiency_bounds(demo_market(ContinuationSpec.polynomial(1.0, 1.0)))
        assert cert.ok
        assert cert.upper_factor <= 4 / 3 + 1e-12
        assert cert.lambda_bar_opt >= cert.lambda_opt

    def test_methods_agree_on_small_instances(self):
        m = demo_market(ContinuationSpec.polynomial(0.8, 0.7))
        brute = efficiency_bounds(m, method="brute")
        fast = efficiency_bounds(m, method="parametric")
        assert brute.lambda_opt == fast.lambda_opt
        assert brute.lambda_bar_opt == fast.lambda_bar_opt

    def test_parametric_path_for_large_markets(self):
        rng = np.random.default_rng(3)
        m = random_market(rng, n_min=15, n_max=15)
        cert = efficiency_bounds(m)  # auto falls back to parametric
        assert cert.ok

    def test_method_validation(self):
        with pytest.raises(ValueError, match="method"):
            efficiency_bounds(demo_market(), method="magic")

    def test_brute_size_guard(self):
        rng = np.random.default_rng(6)
        m = random_market(rng, n_min=11, n_max=11)
        with pytest.raises(ValueError, match="n <= 10"):
            efficiency_bounds(m, method="brute")

    def test_random_sweep(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            m = random_market(rng, n_min=1, n_max=6)
            cert = efficiency_bounds(m, method="brute")
            assert cert.ok, cert


class TestPolynomialBoundFactor:
    def test_no_continuation(self):
        assert polynomial_bound_factor(0.0, 1.7) == 1.0

    def test_linear_family_peak(self):
        # peak of q(1-q) is 1/4, so the factor is exactly 4/3
        assert polynomial_bound_factor(1.0, 1.0) == 4 / 3

    def test_quality_independent_family(self):
        assert polynomial_bound_factor(0.9, 0.0) == pytest.approx(10.0, abs=1e-12)

    def test_divergence_at_the_boundary(self):
        assert polynomial_bound_factor(1.0, 0.0) == math.inf

    def test_domain(self):
        with pytest.raises(ValueError):
            polynomial_bound_factor(1.2, 1.0)
        with pytest.raises(ValueError):
            polynomial_bound_factor(0.5, -1.0)

    def test_dominates_instance_factor(self):
        rng = np.random.default_rng(23)
        for _ in range(80):
            m = random_market(rng, n_min=1, n_max=6)
            cert = efficiency_bounds(m, method="brute")
            cap = polynomial_bound_factor(m.continuation.rho, m.continuation.r)
            assert cert.upper_factor <= cap + 1e-12


class TestPositionBiasGain:
    def test_flat_visibility_is_neutral(self):
        m = Market(
            quality=np.array([0.9, 0.4, 0.1]),
            appeal=np.array([0.5, 1.0, 2.0]),
            visibility=np.ones(3),
            continuation=ContinuationSpec.polynomial(0.6, 1.0),
        )
        assert abs(position_bias_gain(m)) <= 1e-12

    def test_constant_quality_is_neutral(self):
        m = Market(
            quality=np.full(3, 0.4),
            appeal=np.array([0.5, 1.0, 2.0]),
            visibility=np.array([1.0, 0.6, 0.2]),
            continuation=ContinuationSpec.polynomial(0.6, 1.0),
        )
        assert abs(position_bias_gain(m)) <= 1e-12

    def test_positive_on_the_demo_instance(self):
        assert position_bias_gain(demo_market(ContinuationSpec.polynomial(0.8, 0.7))) > 0.0

    def test_rejects_unsorted_visibility(self):
        m = Market(
            quality=np.array([0.5, 0.6]),
            appeal=np.array([1.0, 1.0]),
            visibility=np.array([0.5, 1.0]),
            allow_unsorted_visibility=True,
        )
        with pytest.raises(ValueError, match="non-increasing"):
            position_bias_gain(m)

    def test_nonnegative_sweep(self):
        rng = np.random.default_rng(31)
        worst = min(position_bias_gain(random_market(rng)) for _ in range(120))
        assert worst >= -1e-12

    def test_against_expected_purchase_oracle(self):
        """The gain must equal the difference of the closed-form expected
        purchases under the market's visibilities and under flat ones."""
        import dataclasses

        from trialoffer import expected_purchases_with_continuation, quality_ranking

        rng = np.random.default_rng(53)
        for _ in range(60):
            m = random_market(rng, n_min=2, continuation="polynomial",
                              rho_range=(0.01, 0.99))
            rk = quality_ranking(m)
            flat = dataclasses.replace(m, visibility=np.ones(m.n))
            oracle = expected_purchases_with_continuation(
                m, rk
            ) - expected_purchases_with_continuation(flat, rk)
            assert position_bias_gain(m) == pytest.approx(oracle, abs=1e-12)


class TestSiOneStepGain:
    def test_monopoly_is_stationary(self):
        m = Market(
            quality=np.array([0.7]),
            appeal=np.array([2.0]),
            visibility=np.array([1.0]),
            continuation=ContinuationSpec.polynomial(0.5, 1.0),
        )
        assert abs(si_one_step_gain(m)) <= 1e-12

    def test_constant_quality_is_stationary(self):
        m = Market(
            quality=np.full(4, 0.3),
            appeal=np.array([1.0, 2.0, 0.5, 1.5]),
            visibility=np.array([1.0, 0.7, 0.4, 0.2]),
            continuation=ContinuationSpec.polynomial(0.9, 2.0),
        )
        assert abs(si_one_step_gain(m)) <= 1e-12

    def test_nonnegative_sweep_with_downloads(self):
        rng = np.random.default_rng(37)
        worst = np.inf
        for _ in range(120):
            m = random_market(rng)
            d = rng.integers(0, 40, m.n)
            s = SocialState(downloads=d, step=int(d.sum()))
            worst = min(worst, si_one_step_gain(m, s))
        assert worst >= -1e-12

    def test_structure_independent(self):
        m = demo_market(ContinuationSpec.explicit([0.05, 0.6, 0.35]))
        assert si_one_step_gain(m) >= -1e-12

    def test_against_enumeration_oracle(self):
        """Independent route: enumerate the next participant's outcomes
        (buy product j with the session purchase probability, or nothing)
        and recompute the closed-form rate for each posterior state."""
        import dataclasses

        from trialoffer import (
            effective_sample_probabilities,
            expected_purchases_with_continuation,
            fold_social_state,
            quality_ranking,
        )

        rng = np.random.default_rng(59)
        for _ in range(60):
            m = random_market(rng, n_min=1, continuation="polynomial",
                              rho_range=(0.01, 0.99))
            d = rng.integers(0, 25, m.n)
            s = SocialState(downloads=d, step=int(d.sum()))
            folded = fold_social_state(m, s)
            rk = quality_ranking(m)  # static under the quality policy
            lam = expected_purchases_with_continuation(folded, rk)
            buy = effective_sample_probabilities(folded, rk) * m.quality
            expected_next = (1.0 - lam) * lam
            for j in range(m.n):
                bumped = dataclasses.replace(folded, appeal=folded.appeal + np.eye(m.n)[j])
                expected_next += buy[j] * expected_purchases_with_continuation(bumped, rk)
            assert si_one_step_gain(m, s) == pytest.approx(expected_next - lam, abs=1e-12)


def _paired_results(policy=PolicyKind.QUALITY, rho=0.5, r=1.0, seed=11):
    base = demo_market()
    with_cont = demo_market(ContinuationSpec.polynomial(rho, r))
    cfg_with = SimConfig(market=with_cont, policy=policy, steps=400, replications=3, base_seed=seed)
    cfg_without = SimConfig(market=base, policy=policy, steps=400, replications=3, base_seed=seed)
    return cfg_with, run_replications(cfg_with), cfg_without, run_replications(cfg_without)


class TestImprovementTable:
    def test_zero_improvement_for_identical_results(self):
        cfg_with, res_with, cfg_without, _ = _paired_results()
        rows = improvement_table([(cfg_with, res_with, cfg_without, res_with)])
        assert rows[0].improvement_pct == 0.0
        assert rows[0].rho == 0.5 and rows[0].r == 1.0

    def test_improvement_formula(self):
        pair = _paired_results()
        row = improvement_table([pair])[0]
        expected = 100.0 * (pair[1].efficiency - pair[3].efficiency) / pair[3].efficiency
        assert row.improvement_pct == pytest.approx(expected, abs=1e-12)
        assert row.policy is PolicyKind.QUALITY

    def test_mismatched_policy_rejected(self):
        cfg_with, res_with, cfg_without, res_without = _paired_results()
        bad = dataclasses.replace(cfg_without, policy=PolicyKind.RANDOM)
        with pytest.raises(ValueError, match="policies"):
            improvement_table([(cfg_with, res_with, bad, res_without)])

    def test_mismatched_market_rejected(self):
        cfg_with, res_with, cfg_without, res_without = _paired_results()
        other = dataclasses.replace(
            cfg_without,
            market=dataclasses.replace(cfg_without.market, appeal=np.array([1.0, 1.0, 1.0])),
        )
        with pytest.raises(ValueError, match="instance"):
            improvement_table([(cfg_with, res_with, other, res_without)])

    def test_baseline_must_lack_continuation(self):
        cfg_with, res_with, _, _ = _paired_results()
        with pytest.raises(ValueError, match="baseline"):
            improvement_table([(cfg_with, res_with, cfg_with, res_with)])

    def test_with_run_must_be_polynomial(self):
        cfg_with, res_with, cfg_without, res_without = _paired_results()
        with pytest.raises(ValueError, match="polynomial"):
            improvement_table([(cfg_without, res_without, cfg_without, res_without)])


class TestDownloadQualityScatter:
    def test_single_cell_shape(self):
        m = Market(quality=np.array([0.5]), appeal=np.array([1.0]), visibility=np.array([1.0]))
        cfg = SimConfig(market=m, policy=PolicyKind.QUALITY, steps=10, base_seed=1)
        rows = download_quality_scatter(run_replications(cfg), m)
        assert len(rows) == 1
        assert rows[0][0] == 1 and rows[0][2] == 1

    def test_row_count_and_order(self):
        m = demo_market()
        cfg = SimConfig(market=m, policy=PolicyKind.QUALITY, steps=50, replications=4, base_seed=2)
        rows = download_quality_scatter(run_replications(cfg), m)
        assert len(rows) == m.n * 4
        assert len(SCATTER_COLUMNS) == len(rows[0]) == 5
        qualities = [row[1] for row in rows]
        assert qualities == sorted(qualities)
        # quality ranks ascend 1..n, repeated per replication
        assert [row[2] for row in rows[:4]] == [1, 1, 1, 1]
        assert rows[-1][2] == m.n

    def test_downloads_column_matches_replications(self):
        m = demo_market()
        cfg = SimConfig(market=m, policy=PolicyKind.QUALITY, steps=80, replications=2, base_seed=3)
        res = run_replications(cfg)
        rows = download_quality_scatter(res, m)
        for product_id, _, _, rep, downloads in rows:
            assert downloads == res.per_replication[rep].downloads[product_id - 1]

    def test_size_mismatch_rejected(self):
        m = demo_market()
        cfg = SimConfig(market=m, policy=PolicyKind.QUALITY, steps=10, base_seed=1)
        res = run_replications(cfg)
        other = Market(
            quality=np.array([0.5]), appeal=np.array([1.0]), visibility=np.array([1.0])
        )
        with pytest.raises(ValueError, match="products"):
            download_quality_scatter(res, other)
