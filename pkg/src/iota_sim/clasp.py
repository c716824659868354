"""Pathway-loss attribution.

Each sample routes through one miner per layer; the route and the final
loss are recorded. Per-miner average losses over many samples expose
participants whose presence systematically inflates the loss, and
z-scores flag them.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NoActiveMinersError
from .simkernel import RngStream

__all__ = [
    "PathwayRecord",
    "MinerStat",
    "AttributionReport",
    "ToyLossModel",
    "sample_pathway",
    "toy_loss",
    "average_losses",
    "flag_outliers",
    "run_toy_experiment",
]

CLEAN_LOSS_MEAN = 4.5
CLEAN_LOSS_STD = 0.2
MALICIOUS_INFLATION = 1.1  # both mean and std scale by 10%


@dataclass(frozen=True)
class PathwayRecord:
    sample_k: int
    pathway: tuple  # one miner id per layer
    loss: float


@dataclass(frozen=True)
class MinerStat:
    miner_id: str
    layer: int
    count: int  # |S_i|
    avg_loss: float
    z: float
    flagged: bool


@dataclass(frozen=True)
class AttributionReport:
    stats: tuple  # MinerStat, ordered by (layer, miner_id)
    flagged: frozenset
    z_threshold: float

    def by_miner(self) -> dict:
        return {s.miner_id: s for s in self.stats}


def sample_pathway(layer_rosters, rng: RngStream) -> tuple:
    """Independent uniform choice of one miner per layer."""
    path = []
    for layer, roster in enumerate(layer_rosters):
        roster = list(roster)
        if not roster:
            raise NoActiveMinersError(f"layer {layer} has no active miners")
        path.append(roster[int(rng.integers(0, len(roster)))])
    return tuple(path)


@dataclass(frozen=True)
class ToyLossModel:
    clean_mean: float = CLEAN_LOSS_MEAN
    clean_std: float = CLEAN_LOSS_STD
    inflation: float = MALICIOUS_INFLATION


def toy_loss(pathway, malicious_set, rng: RngStream, model: ToyLossModel = ToyLossModel()) -> float:
    """Stochastic per-sample loss of the toy pipeline.

    Clean pathways draw from Normal(4.5, 0.2); any malicious miner on the
    route inflates both mean and standard deviation by 10%. Draws are
    clamped at zero (astronomically unlikely at these parameters).
    """
    if set(pathway) & set(malicious_set):
        mean, std = model.clean_mean * model.inflation, model.clean_std * model.inflation
    else:
        mean, std = model.clean_mean, model.clean_std
    return max(0.0, float(rng.normal(mean, std)))


def average_losses(records) -> dict:
    """Per-miner (average loss, participation count); absent miners omitted."""
    records = list(records)
    if not records:
        raise InvalidArgumentError("need at least one pathway record")
    totals: dict = {}
    counts: dict = {}
    for rec in records:
        for miner in rec.pathway:
            totals[miner] = totals.get(miner, 0.0) + rec.loss
            counts[miner] = counts.get(miner, 0) + 1
    return {m: (totals[m] / counts[m], counts[m]) for m in totals}


def flag_outliers(records, layer_of, z_threshold: float = 2.5) -> AttributionReport:
    """Z-score miners by average loss and flag those at or above threshold.

    ``layer_of`` maps miner id -> layer index (kept for reporting and for
    the layer-relative diagnostics). Z-scores are computed over all
    participating miners: with a handful of miners per layer, within-layer
    statistics cannot produce a z beyond (n-1)/sqrt(n), so a per-layer
    normalization would cap well below useful thresholds.
    """
    averages = average_losses(records)
    if len(averages) < 3:
        raise InvalidArgumentError(f"need >= 3 participating miners, got {len(averages)}")
    miners = sorted(averages)
    means = np.array([averages[m][0] for m in miners])
    std = means.std()
    if std == 0.0:
        zs = np.zeros(len(miners))
    else:
        zs = (means - means.mean()) / std
    stats = []
    flagged = set()
    for m, z in sorted(zip(miners, zs), key=lambda mz: (layer_of[mz[0]], mz[0])):
        avg, count = averages[m]
        is_flagged = bool(std > 0.0 and z >= z_threshold)
        if is_flagged:
            flagged.add(m)
        stats.append(
            MinerStat(
                miner_id=m,
                layer=layer_of[m],
                count=count,
                avg_loss=avg,
                z=float(z),
                flagged=is_flagged,
            )
        )
    return AttributionReport(stats=tuple(stats), flagged=frozenset(flagged), z_threshold=z_threshold)


def run_toy_experiment(
    layers: int,
    miners_per_layer: int,
    malicious,
    n_samples: int,
    seed: int,
    z_threshold: float = 2.5,
    model: ToyLossModel = ToyLossModel(),
) -> tuple[list, AttributionReport]:
    """Stochastic pathway experiment on an L x M miner grid.

    Miner ids are "L{layer}M{index}". Returns the raw records and the
    attribution report.
    """
    rosters = [[f"L{l}M{m}" for m in range(miners_per_layer)] for l in range(layers)]
    layer_of = {m: l for l, roster in enumerate(rosters) for m in roster}
    malicious = set(malicious)
    unknown = malicious - set(layer_of)
    if unknown:
        raise InvalidArgumentError(f"malicious ids not on the grid: {sorted(unknown)}")
    root = RngStream(seed, "clasp-toy")
    route_rng = root.fork("routes")
    loss_rng = root.fork("losses")
    records = []
    for k in range(n_samples):
        path = sample_pathway(rosters, route_rng)
        loss = toy_loss(path, malicious, loss_rng, model)
        records.append(PathwayRecord(sample_k=k, pathway=path, loss=loss))
    return records, flag_outliers(records, layer_of, z_threshold)
