"""Deterministic simulator of orchestrated decentralized training.

Pipeline training over unreliable simulated miners with pair-redundant
sharded weight merging, replay-based validation, step-decay incentive
accounting, and pathway-loss attribution.
"""

__version__ = "0.1.0"

from . import butterfly, clasp, incentives, model, orchestrator, simkernel, validator  # noqa: F401
from .kernels import BACKEND  # noqa: F401
