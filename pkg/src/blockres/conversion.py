"""Forward conversion: turn block coherence of one system into multipartite
entanglement with ancillas, through explicitly constructed global unitaries.

Two ancilla granularities exist.  Fine mode attaches ancillas with one level
per block and applies a controlled cyclic shift of the computational basis.
Coarse mode attaches ancillas with the same equal-rank block structure as the
system and shifts whole blocks through rank-preserving pairing maps, which
keeps every ancilla operation expressible at the block level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .blocks import (
    BlockMeasurement,
    MultipartiteBlockStructure,
    block_dephase,
    dephase_matrix,
    random_block_incoherent_state,
)
from .core import (
    DensityMatrix,
    SubsystemLayout,
    UnitaryOperator,
    apply_unitary,
    basis_ket,
    child_rng,
    max_abs_diff,
    tensor_product,
    von_neumann_entropy,
)
from .measures import entanglement_sandwich, relative_entropy_block_coherence
from .transcript import ProtocolStep, ProtocolTranscript, state_digest


@dataclass(frozen=True, eq=False)
class ConversionPlan:
    """How to convert one system's block coherence into shared entanglement.

    ``system_measurement`` is the block measurement on the system (subsystem
    "A"); ``ancilla_count`` ancillas labelled B1..Bn are attached.  Fine mode
    uses ancillas of one level per block; coarse mode requires all blocks to
    share one rank and gives every ancilla the system's own measurement.
    """

    system_measurement: BlockMeasurement
    ancilla_count: int
    mode: str = "fine"
    rank: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ancilla_count", int(self.ancilla_count))
        if self.mode not in ("fine", "coarse"):
            raise ValueError(f"mode must be 'fine' or 'coarse', got {self.mode!r}")
        if self.ancilla_count < 1:
            raise ValueError("need at least one ancilla")
        if self.block_count < 2:
            raise ValueError("conversion needs at least two blocks")
        if self.mode == "coarse":
            ranks = self.system_measurement.ranks
            if len(set(ranks)) != 1:
                raise ValueError(
                    f"coarse mode needs equal block ranks, got {ranks}"
                )
            r = ranks[0] if self.rank is None else int(self.rank)
            if r != ranks[0]:
                raise ValueError(
                    f"declared rank {r} does not match measurement ranks {ranks}"
                )
            object.__setattr__(self, "rank", r)
        elif self.rank is not None:
            raise ValueError("rank only applies to coarse mode")

    @classmethod
    def fine(
        cls, system: BlockMeasurement | Sequence[int], ancilla_count: int
    ) -> "ConversionPlan":
        meas = system if isinstance(system, BlockMeasurement) else BlockMeasurement.from_ranks(system)
        return cls(meas, ancilla_count, "fine")

    @classmethod
    def coarse(
        cls,
        block_count: int,
        rank: int,
        ancilla_count: int,
        measurement: BlockMeasurement | None = None,
    ) -> "ConversionPlan":
        meas = measurement if measurement is not None else BlockMeasurement.equal_blocks(block_count, rank)
        if meas.block_count != block_count:
            raise ValueError(
                f"measurement has {meas.block_count} blocks, expected {block_count}"
            )
        return cls(meas, ancilla_count, "coarse", rank)

    @property
    def block_count(self) -> int:
        return self.system_measurement.block_count

    @property
    def system_dim(self) -> int:
        return self.system_measurement.local_dim

    @property
    def ancilla_measurement(self) -> BlockMeasurement:
        if self.mode == "fine":
            return BlockMeasurement.equal_blocks(self.block_count, 1)
        return self.system_measurement

    @property
    def ancilla_dim(self) -> int:
        return self.ancilla_measurement.local_dim

    @property
    def ancilla_labels(self) -> tuple[str, ...]:
        return tuple(f"B{k}" for k in range(1, self.ancilla_count + 1))

    @property
    def labels(self) -> tuple[str, ...]:
        return ("A",) + self.ancilla_labels

    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout(
            (self.system_dim,) + (self.ancilla_dim,) * self.ancilla_count, self.labels
        )

    @property
    def structure(self) -> MultipartiteBlockStructure:
        parts = [("A", self.system_measurement)]
        parts += [(label, self.ancilla_measurement) for label in self.ancilla_labels]
        return MultipartiteBlockStructure(tuple(parts))

    def system_structure(self) -> MultipartiteBlockStructure:
        return MultipartiteBlockStructure.single("A", self.system_measurement)

    def ancilla_tag_ket(self, block: int) -> np.ndarray:
        """The ancilla vector marking system block ``block``.

        Fine mode marks with the ``block``-th level; coarse mode with the
        first basis vector of the ancilla's own ``block``-th block.
        """
        if self.mode == "fine":
            return basis_ket(self.ancilla_dim, block)
        return self.ancilla_measurement.basis_vector(block, 0)


def _shift_blocks(
    meas: BlockMeasurement, shift: int, pairing: Sequence[int] | None = None
) -> np.ndarray:
    """Unitary sending each block j onto block (j + shift) mod block count."""
    d = meas.block_count
    return sum(meas.pairing_matrix((j + shift) % d, j, pairing) for j in range(d))


def build_fine_unitary(plan: ConversionPlan) -> UnitaryOperator:
    """Controlled shift: for system block i, every ancilla level j moves to
    (i + j) mod d.  Entangles arbitrary block coherence with one-level-per-
    block ancillas."""
    if plan.mode != "fine":
        raise ValueError("plan is not fine mode")
    d = plan.block_count
    anc = BlockMeasurement.equal_blocks(d, 1)
    total = np.zeros((plan.layout.dim,) * 2, dtype=complex)
    for i in range(d):
        piece = plan.system_measurement.projector(i)
        shift = _shift_blocks(anc, i)
        for _ in range(plan.ancilla_count):
            piece = np.kron(piece, shift)
        total += piece
    return UnitaryOperator(plan.layout, total)


def coarse_pairing_matrices(
    plan: ConversionPlan, pairing: Sequence[int] | None = None
) -> dict[tuple[int, int], np.ndarray]:
    """The rank-preserving maps C[i, j] sending ancilla block j to (i + j) mod d.

    ``pairing`` optionally permutes which basis vector lands on which; the
    identity pairing reproduces the canonical construction.
    """
    if plan.mode != "coarse":
        raise ValueError("plan is not coarse mode")
    d = plan.block_count
    meas = plan.ancilla_measurement
    return {
        (i, j): meas.pairing_matrix((i + j) % d, j, pairing)
        for i in range(d)
        for j in range(d)
    }


def _assemble_coarse(
    plan: ConversionPlan, cs: Mapping[tuple[int, int], np.ndarray]
) -> np.ndarray:
    d = plan.block_count
    total = np.zeros((plan.layout.dim,) * 2, dtype=complex)
    for i in range(d):
        piece = plan.system_measurement.projector(i)
        shift = sum(cs[(i, j)] for j in range(d))
        for _ in range(plan.ancilla_count):
            piece = np.kron(piece, shift)
        total += piece
    return total


def build_coarse_unitary(
    plan: ConversionPlan, pairing: Sequence[int] | None = None
) -> UnitaryOperator:
    """Controlled block shift: for system block i, ancilla block j maps onto
    block (i + j) mod d through a rank-preserving pairing of basis vectors."""
    return UnitaryOperator(plan.layout, _assemble_coarse(plan, coarse_pairing_matrices(plan, pairing)))


def build_forward_unitary(plan: ConversionPlan) -> UnitaryOperator:
    return build_fine_unitary(plan) if plan.mode == "fine" else build_coarse_unitary(plan)


def initial_ancilla_state(plan: ConversionPlan) -> list[DensityMatrix]:
    """Each ancilla starts in the block-0 tag vector."""
    tag = plan.ancilla_tag_ket(0)
    return [
        DensityMatrix.from_ket(SubsystemLayout.single(label, plan.ancilla_dim), tag)
        for label in plan.ancilla_labels
    ]


def convert_forward(
    rho_a: DensityMatrix, plan: ConversionPlan
) -> tuple[DensityMatrix, ProtocolTranscript]:
    """Run the forward conversion and record its transcript.

    The output state carries the system's block coherence as multipartite
    entanglement: the sandwich of the output closes onto the input coherence.
    """
    if rho_a.layout.size != 1 or rho_a.dim != plan.system_dim:
        raise ValueError(
            f"input must be a single {plan.system_dim}-dimensional system, "
            f"got layout {rho_a.layout}"
        )
    rho_a = DensityMatrix(SubsystemLayout.single("A", plan.system_dim), rho_a.matrix)
    joint = tensor_product([rho_a] + initial_ancilla_state(plan))
    u = build_forward_unitary(plan)
    out = apply_unitary(joint, u)
    structure = plan.structure
    step = ProtocolStep(
        subsystem=",".join(plan.labels),
        channel_id=f"{plan.mode}-conversion",
        outcome=0,
        probability=1.0,
        state_digest=state_digest(out),
        c_r_bits=relative_entropy_block_coherence(out, structure),
        sandwich=entanglement_sandwich(out, structure),
    )
    transcript = ProtocolTranscript(
        initial_state=joint,
        final_state=out,
        steps=(step,),
        states=(out,),
        notes={
            "input_c_r_bits": relative_entropy_block_coherence(
                rho_a, plan.system_measurement
            )
        },
    )
    return out, transcript


def embedding_isometry(plan: ConversionPlan) -> np.ndarray:
    """The isometry W with W rho W^dag equal to the ideal forward output.

    W maps the system into the joint space by tagging each block i with the
    product ancilla vector for i, so the forward output must equal the input
    embedded block-by-block with all other entries zero."""
    cols = []
    for i in range(plan.block_count):
        tags = np.array([1.0 + 0.0j])
        for _ in range(plan.ancilla_count):
            tags = np.kron(tags, plan.ancilla_tag_ket(i))
        cols.append(np.kron(plan.system_measurement.projector(i), tags[:, None]))
    return sum(cols)


@dataclass(frozen=True)
class EmbeddingReport:
    """Residuals of the forward output against the ideal block embedding."""

    embedding_residual: float
    entropy_residual: float
    dephased_entropy_residual: float

    @property
    def max_residual(self) -> float:
        return max(
            self.embedding_residual, self.entropy_residual, self.dephased_entropy_residual
        )


def verify_embedding(
    rho_a: DensityMatrix, output: DensityMatrix, plan: ConversionPlan
) -> EmbeddingReport:
    """Check the forward output is exactly the block embedding of the input.

    Covers every matrix element at once (embedded blocks match, everything
    else vanishes) and the two entropy consequences: the output keeps the
    input's entropy, and the dephased output keeps the dephased input's.
    """
    w = embedding_isometry(plan)
    ideal = w @ rho_a.matrix @ w.conj().T
    emb = max_abs_diff(output.matrix, ideal)
    ent = abs(von_neumann_entropy(output) - von_neumann_entropy(rho_a))
    deph = abs(
        von_neumann_entropy(block_dephase(output, plan.structure))
        - von_neumann_entropy(block_dephase(rho_a, plan.system_measurement))
    )
    return EmbeddingReport(emb, ent, deph)


@dataclass(frozen=True)
class CoarseConversionCertificate:
    """Residuals certifying the coarse conversion unitary.

    ``unitarity_residual``: max deviation of U U^dag from the identity.
    ``permutation_residual``: worst deviation of C[i,j] P_j C[i,j]^dag from
    the shifted projector P_{(i+j) mod d}.
    ``preservation_residual``: worst block-off-diagonal residual of U sigma
    U^dag over random constructive block-incoherent states sigma.
    """

    unitarity_residual: float
    permutation_residual: float
    preservation_residual: float
    trials: int

    def passed(
        self, tol_unitary: float = 1e-12, tol_perm: float = 1e-12, tol_bi: float = 1e-10
    ) -> bool:
        return (
            self.unitarity_residual < tol_unitary
            and self.permutation_residual < tol_perm
            and self.preservation_residual < tol_bi
        )


def certify_coarse_unitary(
    plan: ConversionPlan,
    trials: int = 50,
    seed: int = 0,
    pairing: Sequence[int] | None = None,
    c_override: Mapping[tuple[int, int], np.ndarray] | None = None,
) -> CoarseConversionCertificate:
    """Certify the coarse construction numerically.

    ``c_override`` substitutes arbitrary block maps for the canonical pairing
    matrices, so corrupted constructions flow through and fail the checks
    instead of being rejected up front.
    """
    cs = dict(coarse_pairing_matrices(plan, pairing)) if c_override is None else dict(c_override)
    u = _assemble_coarse(plan, cs)
    dim = plan.layout.dim
    unit_res = max_abs_diff(u @ u.conj().T, np.eye(dim))

    d = plan.block_count
    meas = plan.ancilla_measurement
    perm_res = 0.0
    for i in range(d):
        for j in range(d):
            lhs = cs[(i, j)] @ meas.projector(j) @ cs[(i, j)].conj().T
            perm_res = max(perm_res, max_abs_diff(lhs, meas.projector((i + j) % d)))

    structure = plan.structure
    if unit_res >= 1e-8:
        # a non-unitary assembly does not define a channel to sample
        return CoarseConversionCertificate(unit_res, perm_res, np.inf, trials)
    pres_res = 0.0
    for t in range(trials):
        sigma = random_block_incoherent_state(structure, seed=child_rng(seed, t))
        moved = u @ sigma.matrix @ u.conj().T
        pres_res = max(
            pres_res,
            max_abs_diff(dephase_matrix(moved, structure, plan.layout), moved),
        )
    return CoarseConversionCertificate(unit_res, perm_res, pres_res, trials)
