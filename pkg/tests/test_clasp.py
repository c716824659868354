import numpy as np
import pytest

from iota_sim.clasp import (
    CLEAN_LOSS_MEAN,
    CLEAN_LOSS_STD,
    MALICIOUS_INFLATION,
    PathwayRecord,
    average_losses,
    flag_outliers,
    run_toy_experiment,
    sample_pathway,
    toy_loss,
)
from iota_sim.errors import InvalidArgumentError, NoActiveMinersError
from iota_sim.simkernel import RngStream


class TestPathwaySampling:
    def test_one_miner_per_layer(self):
        rosters = [["a0", "a1"], ["b0"], ["c0", "c1", "c2"]]
        path = sample_pathway(rosters, RngStream(0, "routes"))
        assert len(path) == 3
        for miner, roster in zip(path, rosters):
            assert miner in roster

    def test_empty_layer(self):
        with pytest.raises(NoActiveMinersError):
            sample_pathway([["a"], []], RngStream(0, "routes"))

    def test_uniform_per_layer(self):
        rosters = [[f"L{l}M{m}" for m in range(5)] for l in range(5)]
        rng = RngStream(0, "uniformity")
        counts = {m: 0 for roster in rosters for m in roster}
        n = 100000
        for _ in range(n):
            for m in sample_pathway(rosters, rng):
                counts[m] += 1
        for c in counts.values():
            assert abs(c - n // 5) < 500


class TestToyLoss:
    def test_clean_and_malicious_means(self):
        rng = RngStream(0, "losses")
        clean = [toy_loss(("a", "b"), set(), rng) for _ in range(20000)]
        dirty = [toy_loss(("a", "m"), {"m"}, rng) for _ in range(20000)]
        assert np.mean(clean) == pytest.approx(CLEAN_LOSS_MEAN, abs=0.01)
        assert np.std(clean) == pytest.approx(CLEAN_LOSS_STD, abs=0.01)
        assert np.mean(dirty) == pytest.approx(CLEAN_LOSS_MEAN * MALICIOUS_INFLATION, abs=0.01)

    def test_never_negative(self):
        rng = RngStream(1, "losses")
        assert all(toy_loss(("a",), set(), rng) >= 0.0 for _ in range(1000))


class TestAverages:
    def test_hand_computed(self):
        records = [
            PathwayRecord(0, ("a", "b"), 4.0),
            PathwayRecord(1, ("a", "c"), 6.0),
            PathwayRecord(2, ("a", "b"), 2.0),
        ]
        avg = average_losses(records)
        assert avg["a"] == (pytest.approx(4.0), 3)
        assert avg["b"] == (pytest.approx(3.0), 2)
        assert avg["c"] == (pytest.approx(6.0), 1)

    def test_decomposition_identity(self):
        # Each record contributes its loss once per layer, so the
        # count-weighted sum of per-miner averages is L times the total loss.
        rng = RngStream(2, "decomp")
        rosters = [[f"L{l}M{m}" for m in range(4)] for l in range(3)]
        records = [
            PathwayRecord(k, sample_pathway(rosters, rng), float(rng.uniform(0.0, 10.0)))
            for k in range(500)
        ]
        avg = average_losses(records)
        weighted = sum(a * c for a, c in avg.values())
        total = sum(r.loss for r in records)
        assert weighted == pytest.approx(3 * total)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            average_losses([])


class TestFlagging:
    def test_outlier_flagged(self):
        layer_of = {"a": 0, "b": 0, "c": 1, "d": 1}
        records = []
        for k in range(100):
            loss = 10.0 if k % 2 == 0 else 1.0
            path = ("a", "c") if k % 2 == 0 else ("b", "d")
            records.append(PathwayRecord(k, path, loss))
        report = flag_outliers(records, layer_of, z_threshold=0.9)
        assert report.flagged == {"a", "c"}

    def test_no_flags_when_uniform(self):
        layer_of = {"a": 0, "b": 0, "c": 0}
        records = [PathwayRecord(k, (m,), 5.0) for k, m in enumerate("abc")]
        report = flag_outliers(records, layer_of)
        assert report.flagged == frozenset()
        assert all(s.z == 0.0 for s in report.stats)

    def test_order_invariance(self):
        records, report = run_toy_experiment(3, 3, ["L1M1"], 2000, seed=4)
        shuffled = list(records)
        np.random.default_rng(0).shuffle(shuffled)
        layer_of = {s.miner_id: s.layer for s in report.stats}
        again = flag_outliers(shuffled, layer_of, report.z_threshold)
        assert again.flagged == report.flagged


class TestToyExperiment:
    def test_flags_exactly_the_malicious_set(self):
        malicious = ["L1M0", "L3M4"]
        _, report = run_toy_experiment(5, 5, malicious, 10000, seed=0)
        assert report.flagged == frozenset(malicious)

    def test_malicious_average_near_inflated_mean(self):
        _, report = run_toy_experiment(5, 5, ["L1M0", "L3M4"], 100000, seed=0)
        stats = report.by_miner()
        target = CLEAN_LOSS_MEAN * MALICIOUS_INFLATION
        for m in ("L1M0", "L3M4"):
            assert abs(stats[m].avg_loss - target) / target < 0.01

    def test_colocated_honest_miners_depressed(self):
        # Honest miners sharing a layer with a malicious one route fewer
        # samples through it, so their average loss sits below the average
        # of honest miners on clean layers.
        _, report = run_toy_experiment(5, 5, ["L1M0"], 100000, seed=0)
        colocated = [s.avg_loss for s in report.stats if s.layer == 1 and s.miner_id != "L1M0"]
        clean = [s.avg_loss for s in report.stats if s.layer not in (1,)]
        assert max(colocated) < min(clean)

    def test_unknown_malicious_id_rejected(self):
        with pytest.raises(InvalidArgumentError):
            run_toy_experiment(2, 2, ["L9M9"], 100, seed=0)

    def test_deterministic(self):
        a, _ = run_toy_experiment(3, 3, [], 100, seed=5)
        b, _ = run_toy_experiment(3, 3, [], 100, seed=5)
        assert a == b
