"""Reverse protocol: local measurements with classically communicated feedback.

The forward output's entanglement is pulled back onto the system by measuring
the ancillas one at a time in a Fourier-weighted block basis, sending the
outcome forward classically, and applying a block-phase correction on the next
subsystem in line.  Every measurement operator and every correction is block
incoherent, so the protocol cannot create block coherence; run on a forward
output it restores the input exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .blocks import BlockMeasurement, MultipartiteBlockStructure
from .conversion import ConversionPlan
from .core import (
    TAU_ENT,
    DensityMatrix,
    KrausChannel,
    SubsystemLayout,
    UnitaryOperator,
    basis_ket,
    child_rng,
    embed_operator,
    max_abs_diff,
    measure_and_collapse,
    partial_trace,
)
from .measures import entanglement_sandwich, relative_entropy_block_coherence
from .transcript import ProtocolStep, ProtocolTranscript, state_digest


def _phase(d: int, k: int, outcome: int) -> complex:
    return np.exp(2j * np.pi * k * outcome / d)


def build_fine_measurement(d: int, label: str = "B") -> KrausChannel:
    """d-outcome measurement K_l = (1/sqrt d) sum_k e^{-2 pi i k l / d} |l><k|."""
    if d < 2:
        raise ValueError("need at least two levels")
    ops = []
    for l in range(d):
        k_op = np.zeros((d, d), dtype=complex)
        for k in range(d):
            k_op += np.conj(_phase(d, k, l)) * np.outer(basis_ket(d, l), basis_ket(d, k))
        ops.append(k_op / np.sqrt(d))
    return KrausChannel(SubsystemLayout.single(label, d), tuple(ops))


def build_fine_feedback(d: int, outcome: int, label: str = "B") -> UnitaryOperator:
    """Phase correction U_l = diag(e^{2 pi i k l / d})."""
    diag = np.array([_phase(d, k, outcome) for k in range(d)])
    return UnitaryOperator(SubsystemLayout.single(label, d), np.diag(diag))


def build_coarse_measurement(meas: BlockMeasurement, label: str = "B") -> KrausChannel:
    """Block-level measurement K_j = (1/sqrt d) sum_k e^{-2 pi i k j / d} M_{jk},
    where M_{jk} pairs the basis of block k with the basis of block j.

    Requires equal block ranks; for rank-one blocks this is the fine
    measurement.
    """
    if len(set(meas.ranks)) != 1:
        raise ValueError(f"block-level measurement needs equal ranks, got {meas.ranks}")
    d = meas.block_count
    if d < 2:
        raise ValueError("need at least two blocks")
    ops = []
    for j in range(d):
        k_op = np.zeros((meas.local_dim,) * 2, dtype=complex)
        for k in range(d):
            k_op += np.conj(_phase(d, k, j)) * meas.pairing_matrix(j, k)
        ops.append(k_op / np.sqrt(d))
    return KrausChannel(SubsystemLayout.single(label, meas.local_dim), tuple(ops))


def build_coarse_feedback(
    meas: BlockMeasurement, outcome: int, label: str = "B"
) -> UnitaryOperator:
    """Block-phase correction U_j = sum_k e^{2 pi i k j / d} P_k.

    Works for any block ranks; with rank-one blocks it is the fine feedback.
    """
    d = meas.block_count
    u = sum(_phase(d, k, outcome) * meas.projector(k) for k in range(d))
    return UnitaryOperator(SubsystemLayout.single(label, meas.local_dim), u)


def _measurement_for(meas: BlockMeasurement, label: str) -> KrausChannel:
    if meas.ranks == tuple([1] * meas.block_count) and meas.coordinate_blocks is not None:
        return build_fine_measurement(meas.local_dim, label)
    return build_coarse_measurement(meas, label)


def measurement_feedback_step(
    state: DensityMatrix,
    structure: MultipartiteBlockStructure,
    measured_label: str,
    feedback_label: str,
    policy: str = "all",
    *,
    outcome: int | None = None,
    seed: int | np.random.Generator | None = None,
    feedback_override: Callable[[int], np.ndarray] | None = None,
) -> tuple[DensityMatrix, ProtocolStep]:
    """Measure one subsystem, correct another, trace the measured one out.

    Under the "all" policy, every branch is corrected and the step verifies
    outcome independence: the branch states' worst pairwise distance is
    recorded, and the returned state is the probability mixture of the
    branches (identical to each branch when the protocol is outcome
    independent).  "sample" and "fixed" follow a single branch.

    ``feedback_override`` substitutes an arbitrary outcome-indexed correction
    (as a local matrix) for the canonical block-phase one, for studying
    suboptimal feedback.
    """
    structure.validate_layout(state.layout)
    if measured_label == feedback_label:
        raise ValueError("measured and feedback subsystems must differ")
    layout = state.layout
    meas = structure.measurement(measured_label)
    fb_meas = structure.measurement(feedback_label)
    local = _measurement_for(meas, measured_label)
    channel = KrausChannel(
        layout, tuple(embed_operator(layout, measured_label, k) for k in local.operators)
    )
    branches = measure_and_collapse(state, channel, policy, outcome=outcome, seed=seed)

    remaining = [s for s in layout.labels if s != measured_label]
    rest_structure = structure.restrict(remaining)

    def corrected(branch_outcome: int, post: DensityMatrix) -> DensityMatrix:
        if feedback_override is not None:
            fb = np.asarray(feedback_override(branch_outcome), dtype=complex)
        else:
            fb = build_coarse_feedback(fb_meas, branch_outcome).matrix
        full = embed_operator(layout, feedback_label, fb)
        m = full @ post.matrix @ full.conj().T
        return partial_trace(DensityMatrix(layout, 0.5 * (m + m.conj().T)), remaining)

    live = [(b.index, b.probability, corrected(b.index, b.state)) for b in branches if not b.degenerate]
    if not live:
        raise ValueError("every measurement branch is degenerate")
    degenerate = tuple(b.index for b in branches if b.degenerate)

    if policy == "all":
        total_p = sum(p for _, p, _ in live)
        mixed = sum(p * s.matrix for _, p, s in live) / total_p
        result = DensityMatrix(live[0][2].layout, mixed)
        distance = 0.0
        for i in range(len(live)):
            for j in range(i + 1, len(live)):
                distance = max(distance, max_abs_diff(live[i][2].matrix, live[j][2].matrix))
        out_index: int | None = None
        probability = 1.0
    else:
        out_index, probability, result = live[0]
        distance = 0.0

    c_r = relative_entropy_block_coherence(result, rest_structure)
    sandwich = (
        entanglement_sandwich(result, rest_structure) if len(remaining) >= 2 else None
    )
    step = ProtocolStep(
        subsystem=measured_label,
        channel_id=f"block-measurement({measured_label})->feedback({feedback_label})",
        outcome=out_index,
        probability=probability,
        state_digest=state_digest(result),
        c_r_bits=c_r,
        sandwich=sandwich,
        branch_probabilities=tuple(b.probability for b in branches),
        branch_distance=distance,
        degenerate_outcomes=degenerate,
    )
    return result, step


def run_reverse_protocol(
    state: DensityMatrix,
    plan: ConversionPlan,
    policy: str = "all",
    seed: int | None = None,
    order: Sequence[str] | None = None,
    outcomes: Sequence[int] | None = None,
) -> ProtocolTranscript:
    """Concentrate a forward output's entanglement back onto the system.

    Ancillas are measured one at a time (by default B_n down to B_1, any
    permutation is allowed), the correction lands on the next subsystem to be
    measured, and the last correction lands on the system.  On a forward
    output this restores the input state exactly, at every outcome.  The
    "fixed" policy follows the branch listed in ``outcomes`` (one per step).
    """
    if state.layout != plan.layout:
        raise ValueError(
            f"state layout {state.layout} does not match plan layout {plan.layout}"
        )
    anc = list(plan.ancilla_labels)
    order = list(reversed(anc)) if order is None else [str(s) for s in order]
    if sorted(order) != sorted(anc):
        raise ValueError(f"order {order} must be a permutation of the ancillas {anc}")
    if policy == "fixed":
        if outcomes is None or len(outcomes) != len(order):
            raise ValueError("fixed policy needs one outcome index per ancilla")
    elif outcomes is not None:
        raise ValueError("outcomes only apply to the fixed policy")

    structure = plan.structure
    steps: list[ProtocolStep] = []
    states: list[DensityMatrix] = []
    current = state
    for k, measured in enumerate(order):
        feedback = order[k + 1] if k + 1 < len(order) else "A"
        current, step = measurement_feedback_step(
            current,
            structure,
            measured,
            feedback,
            policy,
            outcome=None if outcomes is None else int(outcomes[k]),
            seed=None if seed is None else child_rng(seed, k),
        )
        structure = structure.restrict([s for s in structure.labels if s != measured])
        steps.append(step)
        states.append(current)
    return ProtocolTranscript(
        initial_state=state,
        final_state=current,
        steps=tuple(steps),
        states=tuple(states),
        notes={"policy": policy, "order": ",".join(order)},
    )


@dataclass(frozen=True)
class TransferBoundCertificate:
    """Check that no stage's block coherence exceeds the initial entanglement.

    The budget is the initial state's certified entanglement when the sandwich
    closes, else its upper bound (which the stage coherences cannot exceed
    either, because every step is block incoherent).
    """

    passed: bool
    budget_bits: float
    budget_certified: bool
    stage_bits: tuple[float, ...]
    max_excess: float


def verify_transfer_bound(
    transcript: ProtocolTranscript, structure: MultipartiteBlockStructure
) -> TransferBoundCertificate:
    """Certify the transfer inequality along a reverse-protocol transcript."""
    structure.validate_layout(transcript.initial_state.layout)
    sandwich = entanglement_sandwich(transcript.initial_state, structure)
    budget = sandwich.certified_value_bits if sandwich.certified else sandwich.upper_bits
    stage_bits = transcript.c_r_trail
    max_excess = max((b - budget for b in stage_bits), default=0.0)
    return TransferBoundCertificate(
        max_excess <= TAU_ENT, budget, sandwich.certified, stage_bits, max_excess
    )
