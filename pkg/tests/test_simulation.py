"""Simulation engine: sessions, replications, determinism, consistency."""

import numpy as np
import pytest

from trialoffer import (
    ContinuationSpec,
    Market,
    PolicyKind,
    Ranking,
    SimConfig,
    SocialState,
    expected_purchases,
    expected_purchases_with_continuation,
    first_purchase_frequencies,
    next_purchase_distribution,
    quality_ranking,
    run_replications,
    run_session,
    run_simulation,
)
from trialoffer.instances import demo_market
from trialoffer.kernel import session_block, session_block_py


def single(q, cont=None):
    return Market(
        quality=np.array([q]),
        appeal=np.array([1.0]),
        visibility=np.array([1.0]),
        continuation=cont or ContinuationSpec.none(),
    )


def config(market, policy=PolicyKind.QUALITY, **kw):
    kw.setdefault("steps", 1000)
    kw.setdefault("base_seed", 42)
    return SimConfig(market=market, policy=policy, **kw)


class TestSimConfigValidation:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("steps", 0),
            ("rerank_period", 0),
            ("replications", 0),
            ("max_session_tries", 0),
            ("trajectory_interval", 0),
            ("base_seed", -1),
        ],
    )
    def test_rejects_bad_values(self, field, value):
        kwargs = dict(market=demo_market(), policy=PolicyKind.QUALITY, steps=10)
        kwargs[field] = value
        with pytest.raises(ValueError, match=field):
            SimConfig(**kwargs)

    def test_trajectory_interval_default(self):
        cfg = config(demo_market(), steps=20_000)
        assert cfg.effective_trajectory_interval == 100
        assert config(demo_market(), steps=50).effective_trajectory_interval == 1


class TestRunSession:
    def test_certain_purchase(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            out = run_session(single(1.0), Ranking.identity(1), rng=rng)
            assert out.purchased == 0 and out.tries == 1 and not out.truncated

    def test_certain_exit(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            out = run_session(single(0.0), Ranking.identity(1), rng=rng)
            assert out.purchased is None and out.tries == 1 and not out.truncated

    def test_session_purchase_rate_matches_continuation_value(self):
        """q=0.5 with c=0.25 purchases with probability 0.5/(1-0.25) = 2/3."""
        m = single(0.5, ContinuationSpec.polynomial(1.0, 1.0))
        rk = Ranking.identity(1)
        rng = np.random.default_rng(314)
        n = 30_000
        hits = sum(run_session(m, rk, rng=rng).purchased is not None for _ in range(n))
        se = np.sqrt((2 / 3) * (1 / 3) / n)
        assert hits / n == pytest.approx(2 / 3, abs=3 * se)

    def test_truncation_reported(self):
        m = single(0.0, ContinuationSpec.explicit([0.99]))
        out = run_session(m, Ranking.identity(1), rng=np.random.default_rng(1), max_tries=1)
        assert out.purchased is None and out.truncated and out.tries == 1

    def test_needs_stream(self):
        with pytest.raises(ValueError, match="stream"):
            run_session(single(0.5), Ranking.identity(1))

    def test_rejects_unsimulable_continuation(self):
        m = single(0.9, ContinuationSpec.explicit([0.5]))
        with pytest.raises(ValueError, match="cannot be simulated"):
            run_session(m, Ranking.identity(1), rng=np.random.default_rng(0))


class TestKernelEquivalence:
    def test_jit_matches_interpreted(self):
        """The compiled and interpreted session loops consume the same
        stream and produce identical outcomes."""
        m = demo_market(ContinuationSpec.polynomial(0.8, 0.7))
        args = (
            np.asarray(m.visibility),
            np.asarray(m.appeal),
            np.zeros(3, dtype=np.int64),
            np.asarray(m.quality),
            m.continuation_values(),
            True,
            10_000,
        )
        d1 = args[2].copy()
        d2 = args[2].copy()
        p1, t1, tr1 = session_block(
            np.random.default_rng(9), 500, args[0], args[1], d1, *args[3:5], True, 10_000
        )
        p2, t2, tr2 = session_block_py(
            np.random.default_rng(9), 500, args[0], args[1], d2, *args[3:5], True, 10_000
        )
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(t1, t2)
        assert tr1 == tr2
        np.testing.assert_array_equal(d1, d2)


class TestPolicyDispatch:
    def test_supplier_matches_public_policies(self):
        """The engine's hot path must propose the same rankings as the
        public policy functions at every social state."""
        from trialoffer import performance_ranking_with_continuation, popularity_ranking
        from trialoffer.simulation import _positions_supplier

        m = demo_market(ContinuationSpec.polynomial(0.5, 1.0))
        downloads = np.zeros(3, dtype=np.int64)
        suppliers = {
            policy: _positions_supplier(
                SimConfig(market=m, policy=policy, steps=10, base_seed=0),
                downloads,
                np.random.default_rng(33),
            )
            for policy in (PolicyKind.QUALITY, PolicyKind.POPULARITY, PolicyKind.PERFORMANCE)
        }
        for d in ([0, 0, 0], [5, 2, 9], [100, 3, 40]):
            downloads[:] = d  # mutate in place, as the kernel does
            state = SocialState(downloads=downloads.copy(), step=int(sum(d)))
            np.testing.assert_array_equal(
                suppliers[PolicyKind.QUALITY](), quality_ranking(m).positions
            )
            np.testing.assert_array_equal(
                suppliers[PolicyKind.POPULARITY](), popularity_ranking(m, state).positions
            )
            np.testing.assert_array_equal(
                suppliers[PolicyKind.PERFORMANCE](),
                performance_ranking_with_continuation(m, state).ranking.positions,
            )

    def test_random_supplier_consumes_the_policy_stream(self):
        from trialoffer import random_ranking
        from trialoffer.simulation import _positions_supplier

        m = demo_market()
        supplier = _positions_supplier(
            SimConfig(market=m, policy=PolicyKind.RANDOM, steps=10, base_seed=0),
            np.zeros(3, dtype=np.int64),
            np.random.default_rng(77),
        )
        reference = np.random.default_rng(77)
        for _ in range(5):
            np.testing.assert_array_equal(
                supplier(), random_ranking(3, reference).positions
            )


class TestRunSimulation:
    def test_deterministic(self):
        cfg = config(demo_market(ContinuationSpec.polynomial(0.5, 1.0)), PolicyKind.POPULARITY)
        a = run_simulation(cfg, 0).per_replication[0]
        b = run_simulation(cfg, 0).per_replication[0]
        np.testing.assert_array_equal(a.downloads, b.downloads)
        np.testing.assert_array_equal(a.trajectory_downloads, b.trajectory_downloads)
        assert a.tries_total == b.tries_total

    def test_replication_index_changes_stream(self):
        cfg = config(demo_market(), PolicyKind.RANDOM)
        a = run_simulation(cfg, 0).per_replication[0]
        b = run_simulation(cfg, 1).per_replication[0]
        assert not np.array_equal(a.downloads, b.downloads)

    def test_static_rate_matches_expected_purchases(self):
        """Independent condition, fixed quality ranking: downloads/steps
        estimates the closed-form expected purchases."""
        m = demo_market()
        cfg = config(m, steps=4000, replications=30, social_influence=False, base_seed=7)
        res = run_replications(cfg)
        lam = expected_purchases(m, quality_ranking(m))
        se = np.sqrt(lam * (1 - lam) / (cfg.steps * cfg.replications))
        assert res.efficiency / cfg.steps == pytest.approx(lam, abs=3 * se)

    def test_static_rate_with_continuation(self):
        m = demo_market(ContinuationSpec.polynomial(0.8, 0.7))
        cfg = config(m, steps=4000, replications=30, social_influence=False, base_seed=8)
        res = run_replications(cfg)
        lam = expected_purchases_with_continuation(m, quality_ranking(m))
        se = np.sqrt(lam * (1 - lam) / (cfg.steps * cfg.replications))
        assert res.efficiency / cfg.steps == pytest.approx(lam, abs=3 * se)

    def test_conservation(self):
        cfg = config(
            demo_market(ContinuationSpec.polynomial(0.9, 0.0)),
            PolicyKind.PERFORMANCE,
            steps=2000,
        )
        rep = run_simulation(cfg, 0).per_replication[0]
        assert rep.downloads.sum() <= cfg.steps
        assert rep.tries_total >= cfg.steps
        assert rep.downloads.sum() == rep.trajectory_downloads[-1]
        assert np.all(np.diff(rep.trajectory_downloads) >= 0)
        assert rep.trajectory_steps[-1] == cfg.steps

    def test_social_influence_feeds_back(self):
        m = demo_market()
        on = run_simulation(config(m, steps=3000, social_influence=True), 0)
        off = run_simulation(config(m, steps=3000, social_influence=False), 0)
        # with feedback the winner concentrates harder
        assert on.per_replication[0].downloads.max() > off.per_replication[0].downloads.max()


class TestRunReplications:
    def test_single_replication_equals_run_simulation(self):
        cfg = config(demo_market(), PolicyKind.RANDOM, replications=1)
        a = run_replications(cfg).per_replication[0]
        b = run_simulation(cfg, 0).per_replication[0]
        np.testing.assert_array_equal(a.downloads, b.downloads)
        assert a.tries_total == b.tries_total

    def test_replications_are_slices_of_the_same_streams(self):
        """Each replication depends only on (base_seed, index), so the batch
        equals the one-at-a-time runs no matter how work is scheduled."""
        cfg = config(demo_market(), PolicyKind.POPULARITY, replications=4)
        batch = run_replications(cfg)
        for w, rep in enumerate(batch.per_replication):
            solo = run_simulation(cfg, w).per_replication[0]
            np.testing.assert_array_equal(rep.downloads, solo.downloads)
            np.testing.assert_array_equal(rep.trajectory_downloads, solo.trajectory_downloads)

    def test_zero_quality_product_never_sells(self):
        m = Market(
            quality=np.array([1.0, 0.0]),
            appeal=np.array([1.0, 1.0]),
            visibility=np.array([1.0, 0.5]),
        )
        res = run_replications(config(m, replications=3, steps=500))
        for rep in res.per_replication:
            assert rep.downloads[1] == 0
            assert rep.downloads[0] == rep.downloads.sum() > 0

    def test_mean_stability_as_replications_grow(self):
        m = demo_market()
        small = run_replications(config(m, steps=1000, replications=10, base_seed=3))
        large = run_replications(config(m, steps=1000, replications=20, base_seed=3))
        sd = np.std([r.total_downloads for r in large.per_replication])
        assert small.efficiency == pytest.approx(large.efficiency, abs=4 * sd / np.sqrt(10))

    def test_truncation_absent_for_polynomial_family(self):
        for r in (0.0, 1.0, 2.0):
            m = demo_market(ContinuationSpec.polynomial(0.9, r))
            res = run_replications(config(m, steps=2000, replications=5))
            assert res.truncated_sessions == 0


class TestFirstPurchaseFrequencies:
    def test_single_product(self):
        cfg = config(single(0.4), steps=1)
        np.testing.assert_allclose(first_purchase_frequencies(cfg, 5000), [1.0])

    def test_symmetric_market(self):
        m = Market(
            quality=np.array([0.5, 0.5]),
            appeal=np.array([1.0, 1.0]),
            visibility=np.array([1.0, 1.0]),
        )
        freq = first_purchase_frequencies(config(m, steps=1), 40_000)
        se = np.sqrt(0.25 / 40_000)
        assert freq[0] == pytest.approx(0.5, abs=3 * se)

    def test_matches_next_purchase_law(self):
        m = demo_market(ContinuationSpec.polynomial(0.8, 0.7))
        law = next_purchase_distribution(m, quality_ranking(m))
        freq = first_purchase_frequencies(config(m, steps=1, base_seed=5), 100_000)
        se = np.sqrt(law * (1 - law) / 100_000)
        np.testing.assert_array_less(np.abs(freq - law), 3 * se + 1e-12)

    def test_requires_quality_policy(self):
        with pytest.raises(ValueError, match="quality"):
            first_purchase_frequencies(config(single(0.5), PolicyKind.RANDOM, steps=1), 10)

    def test_rejects_never_selling_market(self):
        with pytest.raises(ValueError, match="purchase"):
            first_purchase_frequencies(config(single(0.0), steps=1), 100)
