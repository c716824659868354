"""Hub of the hub-and-spoke protocol.

Registers miners, assigns layers, drives the stage cycle
(Training -> compressed sharing x c -> full sync -> validation), decides
merge triggering from the minimum-batch threshold and the participation
fraction, and runs whole scenarios end to end on the simulation kernel.
"""

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import butterfly, clasp, validator as validation
from .errors import (
    InvalidConfigError,
    NoActiveMinersError,
    ProtocolViolationError,
)
from .incentives import DecayPolicy, ScoreLedger, incentive
from .model import (
    LayerWeights,
    TrainConfig,
    apply_update,
    batch_stream,
    compute_loss,
    init_model,
    layer_backward,
    layer_forward,
    serialize_weights,
)
from .simkernel import (
    BlobStore,
    NetworkModel,
    RngStream,
    VirtualClock,
    transfer_duration,
)

__all__ = [
    "HonestyProfile",
    "MinerRecord",
    "Stage",
    "StageEvent",
    "EpochState",
    "ScenarioConfig",
    "ScenarioReport",
    "register_miner",
    "effective_batch",
    "merge_ready",
    "advance_stage",
    "run_scenario",
]


@dataclass(frozen=True)
class HonestyProfile:
    """Behavioral profile of a miner.

    honest    -- follows the protocol exactly.
    dropout   -- fails each stage independently with probability p_fail.
    deceptive -- scales its forward activations by tamper_scale and
                 corrupts its shard reductions with noise of relative
                 magnitude tamper_scale during merges.
    lazy      -- skips each sample with probability skip_probability.
    """

    kind: str = "honest"
    p_fail: float = 0.0
    tamper_scale: float = 1.0
    skip_probability: float = 0.0

    def __post_init__(self):
        if self.kind not in ("honest", "dropout", "deceptive", "lazy"):
            raise InvalidConfigError(f"unknown profile kind {self.kind!r}")
        if not (0.0 <= self.p_fail <= 1.0 and 0.0 <= self.skip_probability <= 1.0):
            raise InvalidConfigError("probabilities must be in [0, 1]")
        if self.tamper_scale <= 0.0:
            raise InvalidConfigError("tamper_scale must be > 0")

    @classmethod
    def parse(cls, spec) -> "HonestyProfile":
        """Parse "honest", "dropout:0.5", "deceptive:2.0" or "lazy:0.3"."""
        if isinstance(spec, HonestyProfile):
            return spec
        kind, _, arg = str(spec).partition(":")
        if kind == "honest":
            return cls()
        if kind == "dropout":
            return cls(kind="dropout", p_fail=float(arg) if arg else 1.0)
        if kind == "deceptive":
            return cls(kind="deceptive", tamper_scale=float(arg) if arg else 2.0)
        if kind == "lazy":
            return cls(kind="lazy", skip_probability=float(arg) if arg else 0.5)
        raise InvalidConfigError(f"unknown profile spec {spec!r}")

    def spec(self) -> str:
        if self.kind == "dropout":
            return f"dropout:{self.p_fail}"
        if self.kind == "deceptive":
            return f"deceptive:{self.tamper_scale}"
        if self.kind == "lazy":
            return f"lazy:{self.skip_probability}"
        return "honest"


@dataclass
class MinerRecord:
    miner_id: str
    layer: int
    profile: HonestyProfile
    batches_done: int = 0
    registered_at: float = 0.0
    active: bool = True


def register_miner(
    rosters, profile: HonestyProfile, now: float = 0.0, miner_id: str | None = None
) -> MinerRecord:
    """Permissionless registration onto the least-populated layer.

    Ties break toward the lowest layer index. The new miner stays inactive
    until the next full synchronization completes.
    """
    populations = [len(r) for r in rosters]
    layer = int(np.argmin(populations))
    if miner_id is None:
        miner_id = f"m{layer}.{populations[layer]}"
    record = MinerRecord(
        miner_id=miner_id,
        layer=layer,
        profile=profile,
        registered_at=now,
        active=False,
    )
    rosters[layer].append(record)
    return record


def effective_batch(batch_counts, b_min: int) -> int:
    """Sum of batch counts meeting the threshold; stragglers contribute 0."""
    if b_min < 0:
        raise InvalidConfigError(f"b_min must be >= 0, got {b_min}")
    return sum(b for b in batch_counts if b >= b_min)


def merge_ready(batch_counts, b_min: int, trigger_fraction: float) -> bool:
    """True once enough miners have trained for at least b_min batches."""
    if not 0.0 < trigger_fraction <= 1.0:
        raise InvalidConfigError(f"trigger_fraction must be in (0, 1], got {trigger_fraction}")
    counts = list(batch_counts)
    if not counts:
        raise NoActiveMinersError("no active miners")
    qualifying = sum(1 for b in counts if b >= b_min)
    return qualifying / len(counts) >= trigger_fraction


class Stage(enum.Enum):
    TRAINING = "training"
    COMPRESSED_SHARING = "compressed_sharing"
    FULL_SYNC = "full_sync"
    VALIDATION = "validation"


class StageEvent(enum.Enum):
    MERGE_READY = "merge_ready"
    SHARDS_MERGED = "shards_merged"
    SCORES_POSTED = "scores_posted"


@dataclass(frozen=True)
class EpochState:
    epoch_n: int = 0
    stage: Stage = Stage.TRAINING
    compressed_stages_per_epoch: int = 0
    compressed_done: int = 0
    b_min: int = 1
    trigger_fraction: float = 0.66


def advance_stage(state: EpochState, event: StageEvent) -> EpochState:
    """Stage machine of the epoch cycle; the epoch index increments when a
    full synchronization completes."""
    if state.stage is Stage.TRAINING and event is StageEvent.MERGE_READY:
        if state.compressed_stages_per_epoch > 0:
            return replace(state, stage=Stage.COMPRESSED_SHARING, compressed_done=0)
        return replace(state, stage=Stage.FULL_SYNC, compressed_done=0)
    if state.stage is Stage.COMPRESSED_SHARING and event is StageEvent.SHARDS_MERGED:
        done = state.compressed_done + 1
        if done < state.compressed_stages_per_epoch:
            return replace(state, compressed_done=done)
        return replace(state, stage=Stage.FULL_SYNC, compressed_done=done)
    if state.stage is Stage.FULL_SYNC and event is StageEvent.SHARDS_MERGED:
        return replace(state, stage=Stage.VALIDATION, epoch_n=state.epoch_n + 1)
    if state.stage is Stage.VALIDATION and event is StageEvent.SCORES_POSTED:
        return replace(state, stage=Stage.TRAINING, compressed_done=0)
    raise ProtocolViolationError(f"event {event.value} is illegal in stage {state.stage.value}")


@dataclass(frozen=True)
class ScenarioConfig:
    dims: tuple
    miners: tuple  # per layer: tuple of HonestyProfile
    seed: int = 0
    epochs: int = 3
    b_min: int = 1
    trigger_fraction: float = 0.66
    compressed_stages_per_epoch: int = 0
    lr: float = 0.05
    batch_size: int = 8
    noise_std: float = 0.01
    bandwidth_mbps: float = 100.0
    compression_ratio: float = 1.0
    batch_seconds: float = 1.0
    gamma_seconds: float = 36000.0
    replay_fraction: float = 1.0
    cosine_threshold: float = 0.999
    magnitude_low: float = 0.999
    magnitude_high: float = 1.001
    max_rel_deviation: float = 1e-9
    z_threshold: float = 2.5
    max_batches_per_stage: int = 10000
    joins: tuple = ()  # (epoch, HonestyProfile)

    def __post_init__(self):
        if len(self.dims) < 2:
            raise InvalidConfigError(f"need at least 2 layer sizes, got {self.dims}")
        if len(self.miners) != len(self.dims) - 1:
            raise InvalidConfigError(
                f"{len(self.dims) - 1} layers but {len(self.miners)} miner rosters"
            )
        if any(len(r) < 1 for r in self.miners):
            raise InvalidConfigError("every layer needs at least one miner")
        if self.epochs < 1:
            raise InvalidConfigError("epochs must be >= 1")

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            dims=tuple(self.dims),
            seed=self.seed,
            steps=0,
            lr=self.lr,
            batch_size=self.batch_size,
            noise_std=self.noise_std,
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        raw = dict(raw)
        if "dims" not in raw or "miners" not in raw:
            raise InvalidConfigError("config needs 'dims' and 'miners'")
        raw["dims"] = tuple(int(d) for d in raw["dims"])
        raw["miners"] = tuple(
            tuple(HonestyProfile.parse(p) for p in roster) for roster in raw["miners"]
        )
        raw["joins"] = tuple(
            (int(j["epoch"]), HonestyProfile.parse(j["profile"])) for j in raw.get("joins", ())
        )
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "miners": [[p.spec() for p in roster] for roster in self.miners],
            "joins": [{"epoch": e, "profile": p.spec()} for e, p in self.joins],
            **{
                f: getattr(self, f)
                for f in self.__dataclass_fields__
                if f not in ("dims", "miners", "joins")
            },
        }


@dataclass
class ScenarioReport:
    config: ScenarioConfig
    losses: list = field(default_factory=list)  # (step, epoch, loss)
    b_eff: list = field(default_factory=list)  # (epoch, b_eff, total_batches)
    transfers: dict = field(default_factory=dict)  # actor -> (uploaded, downloaded)
    scores: list = field(default_factory=list)  # dict rows
    pathway_records: list = field(default_factory=list)
    flags: frozenset = frozenset()
    incentives: dict = field(default_factory=dict)
    miner_layers: dict = field(default_factory=dict)
    final_time: float = 0.0

    def loss_curve(self) -> np.ndarray:
        return np.array([loss for _, _, loss in self.losses])


def _flatten(w: LayerWeights) -> np.ndarray:
    return np.concatenate([w.matrix.ravel(), w.bias])


def _unflatten(payload: np.ndarray, like: LayerWeights) -> LayerWeights:
    n_mat = like.matrix.size
    return LayerWeights(
        matrix=payload[:n_mat].reshape(like.matrix.shape).copy(),
        bias=payload[n_mat : n_mat + like.bias.size].copy(),
        layer_index=like.layer_index,
    )


class _ScenarioRun:
    """Mutable machinery for one deterministic scenario execution."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.root = RngStream(config.seed, "scenario")
        self.clock = VirtualClock()
        self.network = NetworkModel(config.bandwidth_mbps * 1e6, 1.0)
        self.store = BlobStore(clock=self.clock, network=self.network)
        self.global_layers = init_model(config.seed, list(config.dims))
        self.stream = batch_stream(config.train_config())
        self.ledger = ScoreLedger()
        self.decay = DecayPolicy(gamma=config.gamma_seconds)
        self.policy = validation.ReplayPolicy(
            cosine_threshold=config.cosine_threshold,
            magnitude_low=config.magnitude_low,
            magnitude_high=config.magnitude_high,
            max_rel_deviation=config.max_rel_deviation,
            replay_fraction=config.replay_fraction,
        )
        self.activations: dict = {}  # blob key -> float64 vector
        self.traces: dict = {}  # (epoch, miner_id) -> MinerTrace
        self.report = ScenarioReport(config=config)
        self.state = EpochState(
            b_min=config.b_min,
            trigger_fraction=config.trigger_fraction,
            compressed_stages_per_epoch=config.compressed_stages_per_epoch,
        )
        self.step = 0
        self.sample_counter = 0

        self.rosters: list = [[] for _ in range(config.n_layers)]
        self.local: dict = {}  # miner_id -> LayerWeights (float64)
        for layer, roster in enumerate(config.miners):
            for i, profile in enumerate(roster):
                rec = MinerRecord(
                    miner_id=f"m{layer}.{i}", layer=layer, profile=profile, active=True
                )
                self.rosters[layer].append(rec)
                self.local[rec.miner_id] = self.global_layers[layer].copy()
        self.pending_joins = sorted(config.joins, key=lambda ep: ep[0])

    # -- rosters ---------------------------------------------------------

    def miners(self, layer: int | None = None, active_only: bool = True):
        rosters = self.rosters if layer is None else [self.rosters[layer]]
        return [m for r in rosters for m in r if m.active or not active_only]

    def _register_pending(self, epoch: int) -> None:
        while self.pending_joins and self.pending_joins[0][0] <= epoch:
            _, profile = self.pending_joins.pop(0)
            rec = register_miner(self.rosters, profile, now=self.clock.now)
            # Joiners idle with no weights until they copy the merged state
            # at the next full synchronization.
            self.local[rec.miner_id] = None

    def _stage_dropouts(self, epoch: int, stage_label: str) -> set:
        rng = self.root.fork(f"epoch{epoch}/dropout/{stage_label}")
        dropped = set()
        for m in self.miners():
            if m.profile.kind == "dropout" and rng.random() < m.profile.p_fail:
                dropped.add(m.miner_id)
        return dropped

    # -- training --------------------------------------------------------

    def _train_stage(self, epoch: int, dropped: set) -> list:
        cfg = self.config
        for m in self.miners(active_only=False):
            m.batches_done = 0
        route_rng = self.root.fork(f"epoch{epoch}/routes")
        lazy_rng = self.root.fork(f"epoch{epoch}/lazy")
        self.store.wire_ratio = cfg.compression_ratio  # activations travel compressed
        batches = 0
        while True:
            if batches >= cfg.max_batches_per_stage:
                raise ProtocolViolationError(
                    f"merge never became ready within {cfg.max_batches_per_stage} batches"
                )
            rosters = [
                [m.miner_id for m in self.rosters[l] if m.active and m.miner_id not in dropped]
                for l in range(cfg.n_layers)
            ]
            path = clasp.sample_pathway(rosters, route_rng)
            self._run_batch(epoch, path, lazy_rng)
            batches += 1
            counts = [m.batches_done for m in self.miners()]
            if merge_ready(counts, cfg.b_min, cfg.trigger_fraction):
                break
        self.store.wire_ratio = 1.0
        self.report.b_eff.append((epoch, effective_batch(counts, cfg.b_min), sum(counts)))
        return counts

    def _trace_for(self, epoch: int, miner: MinerRecord) -> validation.MinerTrace:
        key = (epoch, miner.miner_id)
        if key not in self.traces:
            self.traces[key] = validation.MinerTrace(
                miner_id=miner.miner_id,
                epoch_n=epoch,
                layer_index=miner.layer,
                is_last=(miner.layer == self.config.n_layers - 1),
                lr=self.config.lr,
            )
        return self.traces[key]

    def _put_activation(self, miner_id: str, key: str, values: np.ndarray) -> None:
        self.activations[key] = values
        self.store.put(miner_id, key, values.astype("<f4").tobytes(), overwrite=True)

    def _run_batch(self, epoch: int, path: tuple, lazy_rng: RngStream) -> None:
        cfg = self.config
        batch = next(self.stream)
        n_layers = cfg.n_layers
        by_id = {m.miner_id: m for m in self.miners()}
        batch_traces = {}
        for mid in path:
            trace = self._trace_for(epoch, by_id[mid])
            bt = validation.BatchTrace(batch_id=batch.batch_id)
            trace.batches.append(bt)
            batch_traces[mid] = bt

        grad_mats = {mid: np.zeros_like(self.local[mid].matrix) for mid in path}
        grad_biases = {mid: np.zeros_like(self.local[mid].bias) for mid in path}
        grad_counts = {mid: 0 for mid in path}
        total_loss = 0.0
        n_losses = 0
        sample_losses = []

        for s in range(cfg.batch_size):
            sample_id = f"{batch.batch_id}-{s}"
            data_key = f"epoch/{epoch}/data/{sample_id}"
            self.activations[data_key] = batch.inputs[s]
            current = batch.inputs[s]
            in_key = data_key
            cached = {}
            fwd_keys = {}
            skipped_at = None
            for li, mid in enumerate(path):
                profile = by_id[mid].profile
                if profile.kind == "lazy" and lazy_rng.random() < profile.skip_probability:
                    batch_traces[mid].forward.append(
                        validation.SampleRecord(sample_id, "forward", in_key, "", skipped=True)
                    )
                    skipped_at = li
                    break
                is_last = li == n_layers - 1
                out = layer_forward(self.local[mid], current, is_last)
                if profile.kind == "deceptive":
                    out = out * profile.tamper_scale
                out_key = f"epoch/{epoch}/layer/{li}/miner/{mid}/activations/{sample_id}-fwd"
                self._put_activation(mid, out_key, out)
                batch_traces[mid].forward.append(
                    validation.SampleRecord(sample_id, "forward", in_key, out_key)
                )
                cached[mid] = current
                fwd_keys[mid] = out_key
                current = out
                in_key = out_key
            if skipped_at is not None:
                continue

            loss, upstream = compute_loss(current, batch.targets[s])
            total_loss += loss
            n_losses += 1
            sample_losses.append((self.sample_counter, path, loss))
            self.sample_counter += 1
            upstream_key = f"epoch/{epoch}/layer/{n_layers - 1}/miner/{path[-1]}/activations/{sample_id}-loss"
            self.activations[upstream_key] = upstream
            for li in range(n_layers - 1, -1, -1):
                mid = path[li]
                is_last = li == n_layers - 1
                input_grad, grad = layer_backward(self.local[mid], cached[mid], upstream, is_last)
                grad_mats[mid] += grad.matrix
                grad_biases[mid] += grad.bias
                grad_counts[mid] += 1
                out_key = f"epoch/{epoch}/layer/{li}/miner/{mid}/activations/{sample_id}-bwd"
                self._put_activation(mid, out_key, input_grad)
                batch_traces[mid].backward.append(
                    validation.SampleRecord(sample_id, "backward", upstream_key, out_key)
                )
                upstream = input_grad
                upstream_key = out_key

        for li, mid in enumerate(path):
            if grad_counts[mid]:
                grad = LayerWeights(
                    matrix=grad_mats[mid] / grad_counts[mid],
                    bias=grad_biases[mid] / grad_counts[mid],
                    layer_index=li,
                )
                self.local[mid] = apply_update(self.local[mid], grad, cfg.lr)
            by_id[mid].batches_done += 1

        if n_losses:
            self.report.losses.append((self.step, epoch, total_loss / n_losses))
        for counter, p, loss in sample_losses:
            self.report.pathway_records.append(
                clasp.PathwayRecord(sample_k=counter, pathway=tuple(p), loss=loss)
            )
        self.step += 1
        self.clock.advance(cfg.batch_seconds)

    # -- merging ---------------------------------------------------------

    def _merge_layer(self, epoch: int, layer: int, stage_label: str, dropped: set) -> None:
        cfg = self.config
        roster = [m for m in self.rosters[layer] if m.active]
        qualifying = [
            m for m in roster if m.batches_done >= cfg.b_min and m.miner_id not in dropped
        ]
        prefix = f"epoch/{epoch}/layer/{layer}/{stage_label}"
        synced = _flatten(self.global_layers[layer])

        if len(qualifying) == 0:
            merged = synced  # nothing to merge; last synced state stands
        elif len(qualifying) == 1:
            # Degenerate round: the lone qualifier publishes its state and
            # everyone else copies it.
            lone = qualifying[0]
            merged = _flatten(self.local[lone.miner_id])
            payload = serialize_weights(self.local[lone.miner_id])
            key = f"{prefix}/miner/{lone.miner_id}/weights"
            self.store.put(lone.miner_id, key, payload, overwrite=True)
            for m in roster:
                if m.miner_id != lone.miner_id:
                    self.store.get(m.miner_id, key)
        else:
            ids = sorted(m.miner_id for m in qualifying)
            index_of = {mid: i for i, mid in enumerate(ids)}
            payloads = {mid: _flatten(self.local[mid]) for mid in ids}
            pair_set = butterfly.enumerate_pairs(len(ids))
            plan_seed = int(
                self.root.fork(f"epoch{epoch}/plan/{stage_label}/L{layer}").integers(0, 2**63)
            )
            plan = butterfly.plan_shards(
                pair_set, len(synced), butterfly.BYTES_PER_WEIGHT, plan_seed
            )
            corruptions = {}
            for m in qualifying:
                if m.profile.kind == "deceptive":
                    rng = self.root.fork(f"epoch{epoch}/tamper/{stage_label}/L{layer}/{m.miner_id}")
                    scale = m.profile.tamper_scale

                    def corrupt(reduction, rng=rng, scale=scale):
                        rms = float(np.sqrt(np.mean(reduction**2))) or 1.0
                        return rng.normal(0.0, scale * rms, size=reduction.shape)

                    corruptions[index_of[m.miner_id]] = corrupt
            result = butterfly.run_all_reduce(
                self.store,
                payloads,
                plan,
                failures=frozenset(),
                corruptions=corruptions,
                fallback=synced,
                key_prefix=prefix,
            )
            merged = result.merged
            # Non-participants (joiners, dropped and straggling miners)
            # copy the consolidated merged state from storage.
            merged_key = f"{prefix}/merged-weights"
            self.store.put("orchestrator", merged_key, merged.astype("<f4").tobytes())
            for m in roster:
                if m.miner_id not in index_of:
                    self.store.get(m.miner_id, merged_key)

        if stage_label.startswith("sync"):
            self.global_layers[layer] = _unflatten(merged, self.global_layers[layer])
            for m in self.rosters[layer]:
                self.local[m.miner_id] = self.global_layers[layer].copy()
                m.active = True
        else:
            # Compressed sharing: qualifying miners adopt the merged state,
            # others keep their local weights until the full sync.
            for m in qualifying:
                self.local[m.miner_id] = _unflatten(merged, self.global_layers[layer])

    def _merge_stage(self, epoch: int, stage_label: str, compressed: bool) -> None:
        before = {a: (m.bytes_uploaded, m.bytes_downloaded) for a, m in self.store.meter.items()}
        self.store.wire_ratio = self.config.compression_ratio if compressed else 1.0
        dropped = self._stage_dropouts(epoch, stage_label)
        for layer in range(self.config.n_layers):
            self._merge_layer(epoch, layer, stage_label, dropped)
        self.store.wire_ratio = 1.0
        # Actors move data in parallel: the stage takes as long as the
        # busiest participant's transfers.
        slowest = 0.0
        for actor, m in self.store.meter.items():
            up0, down0 = before.get(actor, (0, 0))
            moved = (m.bytes_uploaded - up0) + (m.bytes_downloaded - down0)
            slowest = max(slowest, transfer_duration(moved, self.network))
        self.clock.advance(slowest)

    # -- validation ------------------------------------------------------

    def _validation_stage(self, epoch: int, epoch_roster: dict, synced_layers: list) -> None:
        cfg = self.config
        for layer in range(cfg.n_layers):
            candidates = epoch_roster[layer]
            if not candidates:
                continue
            vid = f"validator.L{layer}"
            rng = self.root.fork(f"epoch{epoch}/validate/L{layer}")
            target = validation.select_target(candidates, rng)
            trace = self.traces.get((epoch, target))
            if trace is None:
                by_id = {m.miner_id: m for m in self.miners(active_only=False)}
                trace = validation.MinerTrace(
                    miner_id=target,
                    epoch_n=epoch,
                    layer_index=by_id[target].layer,
                    is_last=(by_id[target].layer == cfg.n_layers - 1),
                    lr=cfg.lr,
                )
            verdict = validation.replay_and_score(
                trace,
                synced_layers[layer],
                self.activations,
                policy=self.policy,
                rng=rng.fork("replay"),
            )
            self.ledger.post(target, epoch, verdict.score, self.clock.now)
            self.report.scores.append(
                {
                    "epoch": epoch,
                    "validator": vid,
                    "miner": target,
                    "min_similarity": min(verdict.similarities) if verdict.similarities else 1.0,
                    "passed": verdict.passed,
                    "score": verdict.score,
                    "sim_time": self.clock.now,
                }
            )

    # -- main loop -------------------------------------------------------

    def run(self) -> ScenarioReport:
        cfg = self.config
        for epoch in range(cfg.epochs):
            assert self.state.epoch_n == epoch and self.state.stage is Stage.TRAINING
            self._register_pending(epoch)
            synced_layers = [w.copy() for w in self.global_layers]
            epoch_roster = {
                l: [m.miner_id for m in self.rosters[l] if m.active] for l in range(cfg.n_layers)
            }
            dropped = self._stage_dropouts(epoch, "training")
            self._train_stage(epoch, dropped)
            self.state = advance_stage(self.state, StageEvent.MERGE_READY)
            for c in range(cfg.compressed_stages_per_epoch):
                self._merge_stage(epoch, f"compressed{c}", compressed=True)
                self.state = advance_stage(self.state, StageEvent.SHARDS_MERGED)
            self._merge_stage(epoch, "sync", compressed=False)
            self.state = advance_stage(self.state, StageEvent.SHARDS_MERGED)
            self._validation_stage(epoch, epoch_roster, synced_layers)
            self.state = advance_stage(self.state, StageEvent.SCORES_POSTED)

        report = self.report
        report.transfers = {
            actor: (m.bytes_uploaded, m.bytes_downloaded)
            for actor, m in sorted(self.store.meter.items())
        }
        all_miners = self.miners(active_only=False)
        report.miner_layers = {m.miner_id: m.layer for m in all_miners}
        report.incentives = {
            m.miner_id: incentive(self.ledger, m.miner_id, self.clock.now, self.decay)
            for m in all_miners
        }
        if report.pathway_records and len({m for r in report.pathway_records for m in r.pathway}) >= 3:
            report.flags = clasp.flag_outliers(
                report.pathway_records, report.miner_layers, cfg.z_threshold
            ).flagged
        report.final_time = self.clock.now
        return report


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Execute a full multi-epoch scenario, deterministic in the seed."""
    return _ScenarioRun(config).run()
