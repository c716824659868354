import numpy as np
import pytest

from iota_sim.errors import InsufficientHorizonError, InvalidConfigError
from iota_sim.incentives import (
    DecayPolicy,
    ScoreLedger,
    decay_weight,
    expected_active_scores,
    incentive,
    incentive_shares,
    stability_sweep,
)

HOUR = 3600.0


class TestDecay:
    def test_step_function(self):
        policy = DecayPolicy(gamma=10.0)
        assert decay_weight(0.0, policy) == 1.0
        assert decay_weight(9.999, policy) == 1.0
        assert decay_weight(10.0, policy) == 1.0  # boundary is inclusive
        assert decay_weight(10.001, policy) == 0.0

    def test_invalid_inputs(self):
        with pytest.raises(InvalidConfigError):
            DecayPolicy(gamma=0.0)
        with pytest.raises(InvalidConfigError):
            decay_weight(-1.0, DecayPolicy(gamma=1.0))


class TestIncentive:
    def test_window_sum_example(self):
        # A score of 5 at half a window old counts; a score of 3 at two
        # windows old has decayed away.
        policy = DecayPolicy(gamma=10.0)
        ledger = ScoreLedger()
        ledger.post("m", 0, 3.0, assigned_at=0.0)
        ledger.post("m", 1, 5.0, assigned_at=15.0)
        assert incentive(ledger, "m", now=20.0, policy=policy) == 5.0

    def test_other_miners_excluded(self):
        policy = DecayPolicy(gamma=100.0)
        ledger = ScoreLedger()
        ledger.post("a", 0, 2.0, 0.0)
        ledger.post("b", 0, 7.0, 0.0)
        assert incentive(ledger, "a", 50.0, policy) == 2.0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            gamma = float(rng.uniform(0.5, 20.0))
            policy = DecayPolicy(gamma=gamma)
            ledger = ScoreLedger()
            n = int(rng.integers(1, 30))
            miners = [f"m{i}" for i in range(int(rng.integers(1, 4)))]
            for _ in range(n):
                ledger.post(
                    str(rng.choice(miners)),
                    0,
                    float(rng.uniform(0.0, 10.0)),
                    float(rng.uniform(0.0, 50.0)),
                )
            now = float(rng.uniform(0.0, 60.0))
            for m in miners:
                expected = sum(
                    e.value
                    for e in ledger.entries
                    if e.miner_id == m and 0.0 <= now - e.assigned_at <= gamma
                )
                assert incentive(ledger, m, now, policy) == pytest.approx(expected)

    def test_shares_normalize(self):
        policy = DecayPolicy(gamma=10.0)
        ledger = ScoreLedger()
        ledger.post("a", 0, 1.0, 0.0)
        ledger.post("b", 0, 3.0, 0.0)
        shares = incentive_shares(ledger, 5.0, policy)
        assert shares == {"a": pytest.approx(0.25), "b": pytest.approx(0.75)}

    def test_shares_all_decayed(self):
        policy = DecayPolicy(gamma=1.0)
        ledger = ScoreLedger()
        ledger.post("a", 0, 1.0, 0.0)
        assert incentive_shares(ledger, 10.0, policy) == {"a": 0.0}


class TestSweep:
    def test_expected_active_scores(self):
        assert expected_active_scores(10 * HOUR, 0.5 * HOUR) == 20.0
        with pytest.raises(InvalidConfigError):
            expected_active_scores(HOUR, 0.0)

    def test_measured_counts_match_gamma_over_ts(self):
        cells = stability_sweep(
            gammas=[10 * HOUR, 2 * HOUR, 1 * HOUR],
            t_syncs=[0.5 * HOUR, 1 * HOUR],
            horizon=300 * HOUR,
            seed=0,
        )
        for cell in cells:
            assert abs(cell.n_scores_measured - cell.n_scores_expected) <= 1.0

    def test_cv_non_increasing_in_gamma(self):
        gammas = [1 * HOUR, 2 * HOUR, 5 * HOUR, 10 * HOUR]
        cells = stability_sweep(
            gammas=gammas,
            t_syncs=[0.25 * HOUR, 0.5 * HOUR, 1 * HOUR],
            horizon=300 * HOUR,
            seed=0,
            score_noise=0.2,
        )
        by_ts = {}
        for c in cells:
            by_ts.setdefault(c.t_sync, {})[c.gamma] = c.cv
        for t_sync, cvs in by_ts.items():
            ordered = [cvs[g] for g in gammas]
            assert all(b <= a + 1e-12 for a, b in zip(ordered, ordered[1:]))

    def test_cv_scales_like_inverse_sqrt_window(self):
        # With i.i.d. noisy unit scores the window sum of n live scores has
        # CV proportional to 1/sqrt(n); doubling gamma should cut CV by
        # roughly sqrt(2).
        cells = stability_sweep(
            gammas=[2 * HOUR, 10 * HOUR],
            t_syncs=[0.5 * HOUR],
            horizon=400 * HOUR,
            seed=3,
            score_noise=0.2,
        )
        cv = {c.gamma: c.cv for c in cells}
        ratio = cv[10 * HOUR] / cv[2 * HOUR]
        assert ratio == pytest.approx(np.sqrt(2.0 / 10.0), rel=0.4)

    def test_horizon_guard(self):
        with pytest.raises(InsufficientHorizonError):
            stability_sweep([10 * HOUR], [HOUR], horizon=20 * HOUR, seed=0)

    def test_deterministic(self):
        kwargs = dict(
            gammas=[2 * HOUR], t_syncs=[HOUR], horizon=50 * HOUR, seed=5, score_noise=0.1
        )
        a = stability_sweep(**kwargs)
        b = stability_sweep(**kwargs)
        assert a == b
