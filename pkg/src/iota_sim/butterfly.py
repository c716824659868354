"""Butterfly All-Reduce: pair-redundant sharded weight merging.

Every unordered pair of miners in a layer is assigned exactly one shard of
the flattened weight payload, so each miner's reduction work is replicated
by every other miner exactly once. The merge runs through the blob store
so per-actor transfer accounting matches the analytic cost model.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateShardsError,
    InvalidArgumentError,
    ShapeError,
    TooFewMinersError,
)
from .simkernel import BlobStore, RngStream

__all__ = [
    "PairSet",
    "ShardPlan",
    "AgreementMatrix",
    "MergeResult",
    "enumerate_pairs",
    "plan_shards",
    "agreement",
    "run_all_reduce",
    "valid_shard_fraction",
    "per_miner_transfer",
    "monte_carlo_resilience",
    "mean_reducer",
]

BYTES_PER_WEIGHT = 4  # serialized weights are float32


@dataclass(frozen=True)
class PairSet:
    n_miners: int
    pairs: tuple  # ordered (i, j) with i < j, lexicographic


@dataclass(frozen=True)
class ShardPlan:
    """Random bijection shard index -> miner pair, plus payload bounds."""

    pair_set: PairSet
    assignment: tuple  # assignment[shard_idx] = (i, j)
    bounds: tuple  # bounds[shard_idx] = (start_elem, end_elem)
    bytes_per_weight: int
    seed: int

    @property
    def n_shards(self) -> int:
        return len(self.assignment)

    def byte_bounds(self, shard_idx: int) -> tuple[int, int]:
        start, end = self.bounds[shard_idx]
        return start * self.bytes_per_weight, end * self.bytes_per_weight

    def shards_of(self, miner: int) -> list[int]:
        return [s for s, pair in enumerate(self.assignment) if miner in pair]

    def metadata(self) -> bytes:
        """Sidecar listing (shard_index, start_byte, length)."""
        rows = []
        for s in range(self.n_shards):
            start_b, end_b = self.byte_bounds(s)
            rows.append([s, start_b, end_b - start_b])
        return json.dumps(rows).encode()


def enumerate_pairs(n: int) -> PairSet:
    """All N(N-1)/2 unordered miner pairs in lexicographic order."""
    if n < 2:
        raise TooFewMinersError(f"need at least 2 miners, got {n}")
    pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    return PairSet(n_miners=n, pairs=pairs)


def plan_shards(
    pair_set: PairSet, payload_len: int, bytes_per_weight: int, seed: int
) -> ShardPlan:
    """Uniformly random shard-to-pair bijection with near-equal element splits.

    Shard bounds are element-aligned (a weight is never split) and sizes
    differ by at most one element; remainder elements go one-per-shard
    starting from shard 0.
    """
    n_shards = len(pair_set.pairs)
    if payload_len < n_shards:
        raise DegenerateShardsError(
            f"payload of {payload_len} elements cannot fill {n_shards} shards"
        )
    rng = RngStream(seed, "shard-plan")
    order = rng.permutation(n_shards)
    assignment = tuple(pair_set.pairs[k] for k in order)
    base, rem = divmod(payload_len, n_shards)
    bounds = []
    start = 0
    for s in range(n_shards):
        size = base + (1 if s < rem else 0)
        bounds.append((start, start + size))
        start += size
    return ShardPlan(
        pair_set=pair_set,
        assignment=assignment,
        bounds=tuple(bounds),
        bytes_per_weight=bytes_per_weight,
        seed=seed,
    )


def agreement(a: np.ndarray, b: np.ndarray, tolerance: float = 1e-6) -> float:
    """Pairwise agreement of two duplicate shard reductions.

    1.0 when the element-wise max-abs difference is within tolerance,
    otherwise cosine similarity clamped to [0, 1].
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"reduction shapes differ: {a.shape} vs {b.shape}")
    if np.max(np.abs(a - b), initial=0.0) <= tolerance:
        return 1.0
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip((a @ b) / (na * nb), 0.0, 1.0))


@dataclass(frozen=True)
class AgreementMatrix:
    """Pairwise agreement over the shard each miner pair shares.

    Entries are NaN on the diagonal and wherever either pair member did
    not survive the merge round.
    """

    n_miners: int
    entries: np.ndarray


@dataclass
class MergeResult:
    merged: np.ndarray
    shard_status: list  # per shard: "merged" | "lost" | "disagreement"
    agreement_matrix: AgreementMatrix
    flagged: set = field(default_factory=set)


def mean_reducer(stack: np.ndarray) -> np.ndarray:
    """Default reducer: element-wise arithmetic mean over miner axis 0."""
    return stack.mean(axis=0)


def run_all_reduce(
    store: BlobStore,
    payloads: dict,
    plan: ShardPlan,
    *,
    reducer=mean_reducer,
    failures: frozenset | set = frozenset(),
    corruptions: dict | None = None,
    fallback: np.ndarray | None = None,
    key_prefix: str = "merge",
    agreement_tolerance: float = 1e-6,
) -> MergeResult:
    """One merge round for a layer through the blob store.

    ``payloads`` maps miner index -> float64 payload (all equal length).
    ``failures`` are miners that drop before uploading anything.
    ``corruptions`` maps miner index -> fn(reduction) -> reduction, applied
    to that miner's re-uploaded shard reductions (deceptive behavior).

    A shard is merged when at least one assignee survives and all surviving
    assignees' reductions agree within tolerance. A two-way disagreement has
    no tie-breaker: the shard falls back and both assignees are flagged.
    Fallback values come from ``fallback`` (typically the last globally
    synced weights); with no fallback the lowest-index surviving upload is
    used.
    """
    corruptions = corruptions or {}
    n = plan.pair_set.n_miners
    miners = sorted(payloads)
    if len(miners) != n:
        raise ShapeError(f"plan expects {n} payloads, got {len(miners)}")
    lengths = {len(payloads[m]) for m in miners}
    if len(lengths) != 1:
        raise ShapeError(f"payload lengths differ: {sorted(lengths)}")
    (payload_len,) = lengths
    if plan.bounds[-1][1] != payload_len:
        raise ShapeError(
            f"plan covers {plan.bounds[-1][1]} elements but payloads have {payload_len}"
        )
    if fallback is not None and len(fallback) != payload_len:
        raise ShapeError("fallback length does not match payloads")

    alive = [m for m in range(n) if m not in failures]

    # Upload stage: every surviving miner uploads its full weights plus the
    # shard-bounds sidecar.
    store.put("orchestrator", f"{key_prefix}/shard-metadata", plan.metadata(), overwrite=True)
    weight_keys = {}
    for idx, miner_id in enumerate(miners):
        if idx in failures:
            continue
        key = f"{key_prefix}/miner/{miner_id}/weights"
        store.put(str(miner_id), key, payloads[miner_id].astype("<f4").tobytes(), overwrite=True)
        weight_keys[idx] = key

    # Reduce stage: each surviving assignee of a shard downloads that slice
    # from every surviving upload, reduces, and re-uploads.
    reductions: dict = {}  # (shard, assignee_idx) -> float64 reduction
    for shard_idx, (i, j) in enumerate(plan.assignment):
        start_b, end_b = plan.byte_bounds(shard_idx)
        start_e, end_e = plan.bounds[shard_idx]
        for assignee in (i, j):
            if assignee in failures:
                continue
            slices = np.empty((len(alive), end_e - start_e), dtype=np.float64)
            for row, src in enumerate(alive):
                raw = store.get(
                    str(miners[assignee]), weight_keys[src], start_b, end_b - start_b
                )
                slices[row] = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            reduced = reducer(slices)
            if assignee in corruptions:
                reduced = corruptions[assignee](reduced)
            reductions[(shard_idx, assignee)] = reduced
            store.put(
                str(miners[assignee]),
                f"{key_prefix}/miner/{miners[assignee]}/merged/{shard_idx}",
                reduced.astype("<f4").tobytes(),
                overwrite=True,
            )

    # Validity + agreement per shard.
    entries = np.full((n, n), np.nan)
    shard_status = []
    merged = np.empty(payload_len, dtype=np.float64)
    flagged: set = set()
    merged_source: dict = {}  # shard -> assignee idx whose reduction is adopted
    for shard_idx, (i, j) in enumerate(plan.assignment):
        survivors = [a for a in (i, j) if a not in failures]
        if len(survivors) == 2:
            score = agreement(
                reductions[(shard_idx, i)], reductions[(shard_idx, j)], agreement_tolerance
            )
            entries[i, j] = entries[j, i] = score
            agree = score == 1.0
        else:
            agree = bool(survivors)  # single survivor trivially agrees
        start_e, end_e = plan.bounds[shard_idx]
        if survivors and agree:
            shard_status.append("merged")
            source = min(survivors)
            merged_source[shard_idx] = source
            merged[start_e:end_e] = reductions[(shard_idx, source)]
        else:
            shard_status.append("disagreement" if survivors else "lost")
            if len(survivors) == 2:
                flagged.update((miners[i], miners[j]))
            if fallback is not None:
                merged[start_e:end_e] = fallback[start_e:end_e]
            elif alive:
                merged[start_e:end_e] = payloads[miners[min(alive)]][start_e:end_e]
            else:
                merged[start_e:end_e] = np.nan

    # Redistribution stage: every surviving miner downloads the full merged
    # payload, shard by shard, from the adopting assignee's upload (falling
    # back to the metered fallback slice size for unmerged shards).
    for idx in alive:
        actor = str(miners[idx])
        for shard_idx in range(plan.n_shards):
            start_b, end_b = plan.byte_bounds(shard_idx)
            if shard_idx in merged_source:
                src = miners[merged_source[shard_idx]]
                store.get(actor, f"{key_prefix}/miner/{src}/merged/{shard_idx}")
            else:
                # Unmerged shard: the miner re-reads the fallback slice from
                # the lowest surviving upload so byte accounting stays exact.
                store.get(actor, weight_keys[min(alive)], start_b, end_b - start_b)

    return MergeResult(
        merged=merged,
        shard_status=shard_status,
        agreement_matrix=AgreementMatrix(n_miners=n, entries=entries),
        flagged=flagged,
    )


def valid_shard_fraction(n: int, k: int) -> float:
    """Fraction of shards still merged when k of n miners fail.

    A shard is lost only when both of its assignees fail, so the valid
    count is C(N,2) - C(k,2).
    """
    if n < 2:
        raise TooFewMinersError(f"need at least 2 miners, got {n}")
    if k < 0 or k > n:
        raise InvalidArgumentError(f"k must be in [0, {n}], got {k}")
    return 1.0 - (k * (k - 1)) / (n * (n - 1))


def per_miner_transfer(w_bytes: float, n_m: int) -> float:
    """Total bytes one miner moves in a merge round: 4W + 2W/N_m.

    Upload W, download 2W of shard slices, re-upload 2W/N_m of reduced
    shards, download the merged W.
    """
    if n_m < 2:
        raise TooFewMinersError(f"need at least 2 miners, got {n_m}")
    return 4.0 * w_bytes + 2.0 * w_bytes / n_m


def monte_carlo_resilience(n: int, k_values, trials: int, seed: int) -> dict:
    """Empirical valid-shard fraction over random failure draws.

    For each k, draws ``trials`` uniform failure sets and counts shards
    whose assignee pair is fully failed. Returns {k: fraction}.
    """
    pair_set = enumerate_pairs(n)
    n_shards = len(pair_set.pairs)
    rng = RngStream(seed, "resilience")
    out = {}
    for k in k_values:
        if k < 0 or k > n:
            raise InvalidArgumentError(f"k must be in [0, {n}], got {k}")
        total_valid = 0
        for _ in range(trials):
            failed = set(rng.choice(n, size=k, replace=False).tolist()) if k else set()
            lost = sum(1 for (i, j) in pair_set.pairs if i in failed and j in failed)
            total_valid += n_shards - lost
        out[k] = total_valid / (trials * n_shards)
    return out
