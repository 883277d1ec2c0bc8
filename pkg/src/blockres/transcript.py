"""Ordered records of protocol runs: states, outcomes, corrections, measures."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import DensityMatrix, matrix_to_pairs
from .measures import EntanglementSandwich


def state_digest(state: DensityMatrix) -> str:
    """SHA-256 of the canonical row-major [re, im] serialization of the matrix."""
    payload = json.dumps(matrix_to_pairs(state.matrix), separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class ProtocolStep:
    """One protocol move and the measures of the state it produced.

    ``outcome`` is None when the step aggregates every measurement branch
    (the "all" outcome policy); ``branch_probabilities`` then lists the Born
    probabilities and ``branch_distance`` the worst max-entry distance between
    the corrected branches, which vanishes for outcome-independent protocols.
    ``sandwich`` is None once only a single subsystem remains.
    """

    subsystem: str
    channel_id: str
    outcome: int | None
    probability: float
    state_digest: str
    c_r_bits: float
    sandwich: EntanglementSandwich | None
    branch_probabilities: tuple[float, ...] = ()
    branch_distance: float = 0.0
    degenerate_outcomes: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class ProtocolTranscript:
    """A full protocol run, from the initial state to the final one.

    ``states`` keeps the post-step density matrices alongside the digests in
    the step records, so downstream verification can recompute measures.
    """

    initial_state: DensityMatrix
    final_state: DensityMatrix
    steps: tuple[ProtocolStep, ...]
    states: tuple[DensityMatrix, ...] = ()
    notes: dict = field(default_factory=dict)

    @property
    def c_r_trail(self) -> tuple[float, ...]:
        return tuple(s.c_r_bits for s in self.steps)
