"""Replay-based validation.

A validator shadows one randomly chosen miner per layer and epoch,
re-runs its traced forward/backward passes from the last fully synced
weights, and posts a score equal to the miner's backward-pass count when
the replay matches.

Replay is bit-deterministic, so on top of the cosine check (which is
scale-invariant) a magnitude-ratio band and a max-relative-deviation
check are applied; a sample failing any check contributes similarity 0.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NoActiveMinersError, ShapeError
from .model import LayerWeights, apply_update, layer_backward, layer_forward
from .simkernel import RngStream

__all__ = [
    "ReplayPolicy",
    "SampleRecord",
    "BatchTrace",
    "MinerTrace",
    "Verdict",
    "cosine_similarity",
    "select_target",
    "replay_and_score",
]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|); two zero vectors compare as 1.0 by convention."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ShapeError(f"need equal nonzero-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float((a @ b) / (na * nb))


def select_target(active_miners, rng: RngStream) -> str:
    """Uniform draw over the active roster.

    Miners expose no interface to query whether they are being monitored;
    the draw lives entirely on the validator side.
    """
    roster = list(active_miners)
    if not roster:
        raise NoActiveMinersError("no active miners to validate")
    return roster[int(rng.integers(0, len(roster)))]


@dataclass(frozen=True)
class SampleRecord:
    """One traced pass: where the miner read its input and wrote its output."""

    sample_id: str
    direction: str  # "forward" | "backward"
    input_key: str
    output_key: str
    skipped: bool = False


@dataclass
class BatchTrace:
    """One micro-batch of a miner's work; the weight update happens after it."""

    batch_id: int
    forward: list = field(default_factory=list)  # SampleRecord
    backward: list = field(default_factory=list)  # SampleRecord

    @property
    def n_processed(self) -> int:
        return sum(1 for r in self.forward if not r.skipped)


@dataclass
class MinerTrace:
    miner_id: str
    epoch_n: int
    layer_index: int
    is_last: bool
    lr: float
    batches: list = field(default_factory=list)

    @property
    def backward_pass_count(self) -> int:
        return sum(sum(1 for r in b.backward if not r.skipped) for b in self.batches)


@dataclass(frozen=True)
class Verdict:
    miner_id: str
    epoch_n: int
    similarities: tuple
    passed: bool
    score: int


@dataclass(frozen=True)
class ReplayPolicy:
    cosine_threshold: float = 0.999
    magnitude_low: float = 0.999
    magnitude_high: float = 1.001
    max_rel_deviation: float = 1e-9
    replay_fraction: float = 1.0


def _check(recomputed: np.ndarray, reported: np.ndarray, policy: ReplayPolicy) -> float:
    """Similarity of a reported activation against its replay.

    Returns the cosine similarity when all checks pass, else 0.0.
    """
    sim = cosine_similarity(recomputed, reported)
    if sim < policy.cosine_threshold:
        return 0.0
    n_rec = np.linalg.norm(recomputed)
    n_rep = np.linalg.norm(reported)
    if n_rec > 0.0:
        ratio = n_rep / n_rec
        if not (policy.magnitude_low <= ratio <= policy.magnitude_high):
            return 0.0
    scale = np.maximum(np.abs(recomputed), 1.0)
    if np.max(np.abs(recomputed - reported) / scale, initial=0.0) > policy.max_rel_deviation:
        return 0.0
    return sim


def replay_and_score(
    trace: MinerTrace,
    start_weights: LayerWeights,
    activations,
    policy: ReplayPolicy = ReplayPolicy(),
    rng: RngStream | None = None,
) -> Verdict:
    """Re-run a miner's traced epoch from its post-sync weights.

    ``activations`` maps blob key -> float64 vector as recorded by the
    simulation (the miner's claimed outputs and the inputs it was sent).
    Skipped samples are excluded from the verdict; a missing activation is
    treated as a failed sample (similarity 0). ``policy.replay_fraction``
    subsamples whole batches; the verdict minimum is over checked samples.
    """
    weights = start_weights.copy()
    sims: list[float] = []
    check_batch = [True] * len(trace.batches)
    if policy.replay_fraction < 1.0:
        if rng is None:
            raise ValueError("replay_fraction < 1 requires an rng")
        draws = rng.random(len(trace.batches))
        check_batch = [d < policy.replay_fraction for d in draws]

    for batch, checked in zip(trace.batches, check_batch):
        cached: dict = {}
        grad_mat = np.zeros_like(weights.matrix)
        grad_bias = np.zeros_like(weights.bias)
        n_grads = 0
        for rec in batch.forward:
            if rec.skipped:
                continue
            x = activations.get(rec.input_key)
            if x is None:
                if checked:
                    sims.append(0.0)
                continue
            out = layer_forward(weights, x, trace.is_last)
            cached[rec.sample_id] = x
            if checked:
                reported = activations.get(rec.output_key)
                sims.append(0.0 if reported is None else _check(out, reported, policy))
        for rec in batch.backward:
            if rec.skipped or rec.sample_id not in cached:
                continue
            upstream = activations.get(rec.input_key)
            if upstream is None:
                if checked:
                    sims.append(0.0)
                continue
            input_grad, grad = layer_backward(weights, cached[rec.sample_id], upstream, trace.is_last)
            grad_mat += grad.matrix
            grad_bias += grad.bias
            n_grads += 1
            if checked:
                reported = activations.get(rec.output_key)
                sims.append(0.0 if reported is None else _check(input_grad, reported, policy))
        if n_grads:
            grad = LayerWeights(
                matrix=grad_mat / n_grads,
                bias=grad_bias / n_grads,
                layer_index=weights.layer_index,
            )
            weights = apply_update(weights, grad, trace.lr)

    passed = bool(sims) and min(sims) >= policy.cosine_threshold
    if not sims:
        passed = True  # nothing checkable: no evidence of dishonesty
    score = trace.backward_pass_count if passed else 0
    return Verdict(
        miner_id=trace.miner_id,
        epoch_n=trace.epoch_n,
        similarities=tuple(sims),
        passed=passed,
        score=score,
    )
