"""Score ledger with step-function temporal decay and stability analysis.

A posted score keeps full weight for the decay window gamma, then drops
to zero. A miner's raw incentive is the window sum of its live scores.
The stability sweep measures how the number of concurrently live scores
(gamma / sync interval) affects the steadiness of that window sum.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientHorizonError, InvalidConfigError
from .simkernel import RngStream

__all__ = [
    "ScoreEntry",
    "ScoreLedger",
    "DecayPolicy",
    "SweepCell",
    "decay_weight",
    "incentive",
    "incentive_shares",
    "expected_active_scores",
    "stability_sweep",
]


@dataclass(frozen=True)
class ScoreEntry:
    miner_id: str
    epoch_n: int
    value: float  # backward passes credited, >= 0
    assigned_at: float  # seconds


@dataclass(frozen=True)
class DecayPolicy:
    gamma: float  # seconds a score stays live

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidConfigError(f"gamma must be > 0, got {self.gamma}")


@dataclass
class ScoreLedger:
    entries: list = field(default_factory=list)

    def post(self, miner_id: str, epoch_n: int, value: float, assigned_at: float) -> ScoreEntry:
        entry = ScoreEntry(miner_id=miner_id, epoch_n=epoch_n, value=value, assigned_at=assigned_at)
        self.entries.append(entry)
        return entry


def decay_weight(t_elapsed: float, policy: DecayPolicy) -> float:
    """Step decay: 1 while the score age is within gamma (inclusive), else 0."""
    if t_elapsed < 0:
        raise InvalidConfigError(f"t_elapsed must be >= 0, got {t_elapsed}")
    return 1.0 if t_elapsed <= policy.gamma else 0.0


def incentive(ledger: ScoreLedger, miner_id: str, now: float, policy: DecayPolicy) -> float:
    """Raw incentive: sum of the miner's scores that are still live at ``now``.

    Entries posted after ``now`` are not yet visible and contribute nothing.
    """
    return sum(
        e.value * decay_weight(now - e.assigned_at, policy)
        for e in ledger.entries
        if e.miner_id == miner_id and e.assigned_at <= now
    )


def incentive_shares(ledger: ScoreLedger, now: float, policy: DecayPolicy) -> dict:
    """Normalized incentive per miner (emissions are proportional to these)."""
    raw = {}
    for e in ledger.entries:
        raw.setdefault(e.miner_id, 0.0)
        if e.assigned_at <= now:
            raw[e.miner_id] += e.value * decay_weight(now - e.assigned_at, policy)
    total = sum(raw.values())
    if total == 0.0:
        return {m: 0.0 for m in raw}
    return {m: v / total for m, v in raw.items()}


def expected_active_scores(gamma: float, t_sync: float) -> float:
    """Expected number of live scores: gamma / T_s."""
    if t_sync <= 0:
        raise InvalidConfigError(f"t_sync must be > 0, got {t_sync}")
    return gamma / t_sync


@dataclass(frozen=True)
class SweepCell:
    gamma: float
    t_sync: float
    n_scores_expected: float
    n_scores_measured: float
    cv: float


def _simulate_cell(
    gamma: float, t_sync: float, horizon: float, rng: RngStream, score_noise: float
) -> SweepCell:
    n_posts = int(horizon // t_sync) + 1
    post_times = np.arange(n_posts) * t_sync
    values = np.ones(n_posts)
    if score_noise > 0.0:
        values = np.maximum(values + rng.normal(0.0, score_noise, size=n_posts), 0.0)

    # Sample the incentive midway between posts after a warm-up of one full
    # decay window, so every sampled window sum is in steady state.
    sample_times = post_times + t_sync / 2.0
    sample_times = sample_times[(sample_times >= gamma) & (sample_times <= horizon)]
    incentives = np.empty(sample_times.size)
    counts = np.empty(sample_times.size)
    for i, t in enumerate(sample_times):
        live = (post_times <= t) & (t - post_times <= gamma)
        incentives[i] = values[live].sum()
        counts[i] = live.sum()

    mean = incentives.mean()
    cv = 0.0 if mean == 0.0 else float(incentives.std() / mean)
    return SweepCell(
        gamma=gamma,
        t_sync=t_sync,
        n_scores_expected=gamma / t_sync,
        n_scores_measured=float(counts.mean()),
        cv=cv,
    )


def stability_sweep(
    gammas,
    t_syncs,
    horizon: float,
    seed: int,
    score_noise: float = 0.0,
) -> list[SweepCell]:
    """Incentive stability over a (gamma, T_s) grid.

    Simulates an honest miner posting unit scores every T_s (plus optional
    i.i.d. score noise) and reports the coefficient of variation of its
    steady-state incentive. Noise draws are matched per T_s so cells along
    the gamma axis see identical score sequences.
    """
    gammas = list(gammas)
    t_syncs = list(t_syncs)
    if not gammas or not t_syncs:
        raise InvalidConfigError("gamma and T_s grids must be non-empty")
    max_gamma = max(gammas)
    if horizon < 3 * max_gamma:
        raise InsufficientHorizonError(
            f"horizon {horizon} < 3 * max gamma {max_gamma}; too short for steady state"
        )
    root = RngStream(seed, "stability-sweep")
    cells = []
    for t_sync in t_syncs:
        for gamma in gammas:
            rng = root.fork(f"ts{t_sync}")
            cells.append(_simulate_cell(gamma, t_sync, horizon, rng, score_noise))
    return cells
