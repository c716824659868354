import numpy as np
import pytest

from iota_sim.errors import (
    InvalidConfigError,
    NoActiveMinersError,
    ProtocolViolationError,
)
from iota_sim.model import TrainConfig, reference_train
from iota_sim.orchestrator import (
    EpochState,
    HonestyProfile,
    Stage,
    StageEvent,
    ScenarioConfig,
    advance_stage,
    effective_batch,
    merge_ready,
    register_miner,
    run_scenario,
)

HONEST = HonestyProfile()


def _config(**overrides):
    base = dict(
        dims=(4, 16, 2),
        miners=((HONEST,), (HONEST,)),
        seed=0,
        epochs=2,
        b_min=1,
        batch_size=8,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


class TestRegistration:
    def test_least_populated_layer(self):
        rosters = [[0, 0], [0], [0, 0]]
        rec = register_miner(rosters, HONEST)
        assert rec.layer == 1
        assert not rec.active
        assert len(rosters[1]) == 2

    def test_tie_breaks_to_lowest_layer(self):
        rosters = [[0], [0], [0]]
        assert register_miner(rosters, HONEST).layer == 0


class TestProfiles:
    def test_parse_round_trip(self):
        for spec in ("honest", "dropout:0.25", "deceptive:1.5", "lazy:0.3"):
            assert HonestyProfile.parse(spec).spec() == spec

    def test_parse_defaults(self):
        assert HonestyProfile.parse("dropout").p_fail == 1.0
        assert HonestyProfile.parse("lazy").skip_probability == 0.5

    def test_rejects_unknown(self):
        with pytest.raises(InvalidConfigError):
            HonestyProfile.parse("sneaky:0.5")
        with pytest.raises(InvalidConfigError):
            HonestyProfile(kind="dropout", p_fail=1.5)


class TestBatchAccounting:
    def test_effective_batch_example(self):
        assert effective_batch([5, 3, 7], b_min=4) == 12

    def test_all_below_threshold(self):
        assert effective_batch([1, 2, 3], b_min=4) == 0

    def test_merge_ready_fraction(self):
        assert merge_ready([4, 4, 1], b_min=2, trigger_fraction=0.6)
        assert not merge_ready([4, 1, 1], b_min=2, trigger_fraction=0.6)

    def test_merge_ready_guards(self):
        with pytest.raises(NoActiveMinersError):
            merge_ready([], 1, 0.66)
        with pytest.raises(InvalidConfigError):
            merge_ready([1], 1, 0.0)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10000):
            counts = rng.integers(0, 20, size=rng.integers(1, 12)).tolist()
            b_min = int(rng.integers(0, 20))
            expected = sum(b for b in counts if b >= b_min)
            assert effective_batch(counts, b_min) == expected


class TestStageMachine:
    def test_cycle_without_compressed_stages(self):
        state = EpochState()
        state = advance_stage(state, StageEvent.MERGE_READY)
        assert state.stage is Stage.FULL_SYNC
        state = advance_stage(state, StageEvent.SHARDS_MERGED)
        assert state.stage is Stage.VALIDATION
        assert state.epoch_n == 1
        state = advance_stage(state, StageEvent.SCORES_POSTED)
        assert state.stage is Stage.TRAINING

    def test_cycle_with_two_compressed_stages(self):
        state = EpochState(compressed_stages_per_epoch=2)
        state = advance_stage(state, StageEvent.MERGE_READY)
        assert state.stage is Stage.COMPRESSED_SHARING
        state = advance_stage(state, StageEvent.SHARDS_MERGED)
        assert state.stage is Stage.COMPRESSED_SHARING
        assert state.compressed_done == 1
        state = advance_stage(state, StageEvent.SHARDS_MERGED)
        assert state.stage is Stage.FULL_SYNC

    def test_illegal_events(self):
        with pytest.raises(ProtocolViolationError):
            advance_stage(EpochState(), StageEvent.SHARDS_MERGED)
        with pytest.raises(ProtocolViolationError):
            advance_stage(EpochState(stage=Stage.VALIDATION), StageEvent.MERGE_READY)


class TestConfig:
    def test_roster_shape_checked(self):
        with pytest.raises(InvalidConfigError):
            ScenarioConfig(dims=(4, 8, 2), miners=((HONEST,),))

    def test_from_dict_round_trip(self):
        cfg = _config(miners=((HONEST, HonestyProfile.parse("lazy:0.3")), (HONEST,)))
        assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        raw = _config().to_dict()
        raw["turbo"] = True
        with pytest.raises(InvalidConfigError):
            ScenarioConfig.from_dict(raw)


class TestScenarios:
    def test_faultless_swarm_equals_reference(self):
        cfg = _config(epochs=3)
        report = run_scenario(cfg)
        steps = len(report.losses)
        oracle = reference_train(
            TrainConfig(dims=cfg.dims, seed=cfg.seed, steps=steps, lr=cfg.lr,
                        batch_size=cfg.batch_size, noise_std=cfg.noise_std)
        )
        assert np.max(np.abs(report.loss_curve() - oracle)) < 1e-12

    def test_rerun_is_identical(self):
        cfg = _config(miners=((HONEST, HonestyProfile.parse("lazy:0.4")), (HONEST,)))
        a = run_scenario(cfg)
        b = run_scenario(cfg)
        assert a.losses == b.losses
        assert a.transfers == b.transfers
        assert a.scores == b.scores
        assert a.incentives == b.incentives

    def test_permanent_dropout_contributes_nothing(self):
        cfg = _config(
            miners=((HONEST, HonestyProfile.parse("dropout:1.0")), (HONEST,)),
            b_min=2,
            trigger_fraction=0.5,
        )
        report = run_scenario(cfg)
        for _, b_eff, total in report.b_eff:
            assert b_eff == total  # the dropped miner never trains a batch
        assert report.incentives["m0.1"] == 0.0

    def test_honest_miners_earn_scores(self):
        report = run_scenario(_config(epochs=3))
        assert all(r["passed"] for r in report.scores)
        assert all(r["score"] > 0 for r in report.scores)
        assert all(v > 0 for v in report.incentives.values())

    def test_joiner_adopts_synced_weights(self):
        cfg = _config(
            epochs=3,
            joins=((1, HONEST),),
            trigger_fraction=0.5,
        )
        report = run_scenario(cfg)
        joiner = [m for m in report.miner_layers if m not in ("m0.0", "m1.0")]
        assert len(joiner) == 1
        # The joiner was registered and later validated or at least idle;
        # the run itself must stay deterministic and protocol-legal.
        again = run_scenario(cfg)
        assert report.losses == again.losses

    def test_compressed_stages_run(self):
        cfg = _config(compressed_stages_per_epoch=2, compression_ratio=8.0)
        report = run_scenario(cfg)
        assert len(report.b_eff) == cfg.epochs
        assert report.final_time > 0.0

    def test_transfers_accounted(self):
        report = run_scenario(_config())
        assert report.transfers
        total_up = sum(u for u, _ in report.transfers.values())
        assert total_up > 0
