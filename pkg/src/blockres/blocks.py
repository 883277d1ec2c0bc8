"""Block measurements, block dephasing, and block-incoherent states and channels.

A block measurement is a projective measurement with arbitrary-rank projectors,
given concretely as one orthonormal basis per block.  A state is block
incoherent (BI) when dephasing over the blocks leaves it unchanged; a channel
is BI when it maps BI states to BI states.  Multipartite structures assign one
block measurement to each subsystem, and the multipartite BI states are the
convex mixtures of products of local BI states.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    TAU_EQ,
    TAU_UNIT,
    DensityMatrix,
    KrausChannel,
    SubsystemLayout,
    apply_channel,
    child_rng,
    embed_operator,
    max_abs_diff,
    random_density_matrix,
    random_unitary,
)


@dataclass(frozen=True, eq=False)
class BlockMeasurement:
    """Projective measurement given as one orthonormal basis per block.

    ``blocks[i]`` has shape (local_dim, rank_i) with the block's basis vectors
    as columns; all columns together must form an orthonormal basis of the
    local space, so the projectors are complete and mutually orthogonal by
    construction.
    """

    local_dim: int
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        d = int(self.local_dim)
        object.__setattr__(self, "local_dim", d)
        if d < 1:
            raise ValueError("local dimension must be positive")
        if not self.blocks:
            raise ValueError("a block measurement needs at least one block")
        cleaned = []
        for b in self.blocks:
            arr = np.asarray(b, dtype=complex)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != d or arr.shape[1] < 1:
                raise ValueError(f"block basis must be {d}xr with r >= 1, got {arr.shape}")
            arr = arr.copy()
            arr.flags.writeable = False
            cleaned.append(arr)
        object.__setattr__(self, "blocks", tuple(cleaned))
        stacked = np.hstack(self.blocks)
        if stacked.shape[1] != d:
            raise ValueError(
                f"block ranks {self.ranks} must sum to the local dimension {d}"
            )
        res = max_abs_diff(stacked.conj().T @ stacked, np.eye(d))
        if res > TAU_UNIT:
            raise ValueError(f"block bases are not jointly orthonormal (residual {res:.3e})")
        object.__setattr__(self, "_coordinate_blocks", self._find_coordinate_blocks())

    def _find_coordinate_blocks(self) -> np.ndarray | None:
        # When every basis vector is a (phased) standard basis vector the
        # dephasing map reduces to an entrywise mask; record coordinate->block.
        ids = np.full(self.local_dim, -1, dtype=int)
        for i, b in enumerate(self.blocks):
            for col in b.T:
                nz = np.flatnonzero(np.abs(col) > 1e-12)
                if nz.size != 1 or abs(abs(col[nz[0]]) - 1.0) > 1e-12:
                    return None
                ids[nz[0]] = i
        return ids

    @classmethod
    def equal_blocks(cls, block_count: int, rank: int = 1) -> "BlockMeasurement":
        """Contiguous computational-basis blocks of one common rank."""
        return cls.from_ranks([rank] * block_count)

    @classmethod
    def from_ranks(cls, ranks: Sequence[int]) -> "BlockMeasurement":
        """Contiguous computational-basis blocks with the given ranks."""
        ranks = [int(r) for r in ranks]
        if any(r < 1 for r in ranks):
            raise ValueError(f"block ranks must be positive, got {ranks}")
        d = sum(ranks)
        eye = np.eye(d, dtype=complex)
        blocks = []
        start = 0
        for r in ranks:
            blocks.append(eye[:, start:start + r])
            start += r
        return cls(d, tuple(blocks))

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(b.shape[1] for b in self.blocks)

    @property
    def coordinate_blocks(self) -> np.ndarray | None:
        """Coordinate->block map when all bases are standard basis vectors, else None."""
        return self._coordinate_blocks  # type: ignore[attr-defined]

    def projector(self, i: int) -> np.ndarray:
        b = self.blocks[i]
        return b @ b.conj().T

    def projectors(self) -> list[np.ndarray]:
        return [self.projector(i) for i in range(self.block_count)]

    def basis_vector(self, block: int, index: int) -> np.ndarray:
        """The ``index``-th basis vector of ``block``."""
        return np.array(self.blocks[block][:, index])

    def rotated(self, u: np.ndarray) -> "BlockMeasurement":
        """Measurement with every basis vector mapped through the unitary ``u``."""
        u = np.asarray(u, dtype=complex)
        return BlockMeasurement(self.local_dim, tuple(u @ b for b in self.blocks))

    def pairing_matrix(
        self, target: int, source: int, pairing: Sequence[int] | None = None
    ) -> np.ndarray:
        """Rank-preserving map of block ``source`` onto block ``target``.

        Pairs the n-th source basis vector with the pairing[n]-th target basis
        vector (identity pairing by default), so the result T satisfies
        T P_source T^dag = P_target.
        """
        src = self.blocks[source]
        dst = self.blocks[target]
        r = src.shape[1]
        if dst.shape[1] != r:
            raise ValueError(
                f"blocks {target} and {source} have different ranks {dst.shape[1]} != {r}"
            )
        if pairing is None:
            return dst @ src.conj().T
        pairing = list(pairing)
        if sorted(pairing) != list(range(r)):
            raise ValueError(f"pairing must be a permutation of 0..{r - 1}, got {pairing}")
        return dst[:, pairing] @ src.conj().T


@dataclass(frozen=True, eq=False)
class MultipartiteBlockStructure:
    """One block measurement per subsystem; the joint blocks are their products."""

    parts: tuple[tuple[str, BlockMeasurement], ...]

    def __post_init__(self) -> None:
        parts = tuple((str(label), meas) for label, meas in self.parts)
        if not parts:
            raise ValueError("structure needs at least one subsystem")
        labels = [label for label, _ in parts]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in structure: {labels}")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def single(cls, label: str, measurement: BlockMeasurement) -> "MultipartiteBlockStructure":
        return cls(((label, measurement),))

    @classmethod
    def uniform(
        cls, labels: Sequence[str], measurement: BlockMeasurement
    ) -> "MultipartiteBlockStructure":
        return cls(tuple((label, measurement) for label in labels))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.parts)

    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout(
            tuple(m.local_dim for _, m in self.parts), self.labels
        )

    def measurement(self, label: str) -> BlockMeasurement:
        for name, meas in self.parts:
            if name == label:
                return meas
        raise ValueError(f"structure has no subsystem {label!r}, have {self.labels}")

    def restrict(self, keep: Sequence[str]) -> "MultipartiteBlockStructure":
        keep_set = set(keep)
        unknown = keep_set - set(self.labels)
        if unknown:
            raise ValueError(f"unknown labels {sorted(unknown)}, have {self.labels}")
        return MultipartiteBlockStructure(
            tuple((label, m) for label, m in self.parts if label in keep_set)
        )

    def validate_layout(self, layout: SubsystemLayout) -> None:
        if layout.labels != self.labels or layout.dims != self.layout.dims:
            raise ValueError(
                f"structure over {self.labels} {self.layout.dims} does not match "
                f"layout {layout.labels} {layout.dims}"
            )

    def joint_projectors(self) -> list[np.ndarray]:
        """Kronecker products of one local projector per subsystem."""
        out = []
        for combo in itertools.product(*(range(m.block_count) for _, m in self.parts)):
            p = np.array([[1.0 + 0.0j]])
            for (_, meas), i in zip(self.parts, combo):
                p = np.kron(p, meas.projector(i))
            out.append(p)
        return out


def as_structure(
    structure: MultipartiteBlockStructure | BlockMeasurement, layout: SubsystemLayout
) -> MultipartiteBlockStructure:
    """Promote a bare measurement to a single-subsystem structure for ``layout``."""
    if isinstance(structure, BlockMeasurement):
        if layout.size != 1:
            raise ValueError("a bare block measurement only applies to one subsystem")
        return MultipartiteBlockStructure.single(layout.labels[0], structure)
    return structure


def _dephase_local(m: np.ndarray, meas: BlockMeasurement) -> np.ndarray:
    ids = meas.coordinate_blocks
    if ids is not None:
        return m * (ids[:, None] == ids[None, :])
    return sum(p @ m @ p for p in meas.projectors())


def dephase_matrix(
    matrix: np.ndarray,
    structure: MultipartiteBlockStructure,
    layout: SubsystemLayout,
) -> np.ndarray:
    """Raw-matrix core of the joint block dephasing (no state validation).

    Applied one subsystem at a time, which gives the same map because the
    local projector sums commute across subsystems.  Computational-basis
    subsystems are handled together by one entrywise mask.
    """
    structure.validate_layout(layout)
    m = np.asarray(matrix, dtype=complex)

    mask_ids = np.zeros(1, dtype=np.int64)
    rotated: list[str] = []
    for label in layout.labels:
        meas = structure.measurement(label)
        ids = meas.coordinate_blocks
        if ids is None:
            rotated.append(label)
            ids = np.zeros(meas.local_dim, dtype=int)
        mask_ids = (mask_ids[:, None] * (meas.block_count + 1) + ids[None, :]).reshape(-1)
    m = m * (mask_ids[:, None] == mask_ids[None, :])
    for label in rotated:
        meas = structure.measurement(label)
        m = sum(
            (p := embed_operator(layout, label, proj)) @ m @ p
            for proj in meas.projectors()
        )
    return m


def block_dephase(
    state: DensityMatrix, structure: MultipartiteBlockStructure | BlockMeasurement
) -> DensityMatrix:
    """Joint block dephasing: sum of P rho P over all joint block projectors."""
    struct = as_structure(structure, state.layout)
    return DensityMatrix(
        state.layout, dephase_matrix(state.matrix, struct, state.layout)
    )


def block_off_diagonal_residual(
    state: DensityMatrix, structure: MultipartiteBlockStructure | BlockMeasurement
) -> float:
    """Max-entry distance between the state and its block-dephased version."""
    struct = as_structure(structure, state.layout)
    return max_abs_diff(dephase_matrix(state.matrix, struct, state.layout), state.matrix)


def is_block_diagonal(
    state: DensityMatrix, structure: MultipartiteBlockStructure | BlockMeasurement
) -> bool:
    return block_off_diagonal_residual(state, structure) < TAU_EQ


def random_block_incoherent_state(
    structure: MultipartiteBlockStructure,
    mixture_size: int | None = None,
    seed: int | np.random.Generator = 0,
) -> DensityMatrix:
    """Random mixture of products of locally block-dephased states.

    This is the constructive sampler for the multipartite BI set: every output
    is a convex mixture of ``mixture_size`` products of local BI states.  The
    default mixture size is the largest local dimension.
    """
    rng = child_rng(seed)
    s = mixture_size if mixture_size is not None else max(m.local_dim for _, m in structure.parts)
    if s < 1:
        raise ValueError("mixture size must be positive")
    weights = rng.dirichlet(np.ones(s))
    total = np.zeros((structure.layout.dim,) * 2, dtype=complex)
    for t in range(s):
        term = np.array([[1.0 + 0.0j]])
        for label, meas in structure.parts:
            local = random_density_matrix(
                SubsystemLayout.single(label, meas.local_dim), seed=rng
            )
            term = np.kron(term, _dephase_local(local.matrix, meas))
        total += weights[t] * term
    return DensityMatrix(structure.layout, total)


def make_block_incoherent_kraus(
    measurement: BlockMeasurement,
    index_maps: Sequence[Sequence[int] | Callable[[int], int]],
    matrices: Sequence[np.ndarray],
    label: str = "A",
) -> KrausChannel:
    """Kraus family K_l = sum_i P_{f_l(i)} C_l P_i from index maps f_l and matrices C_l.

    Operators of this shape send every block-incoherent state to a (possibly
    subnormalized) block-incoherent state.  Completeness is not forced: the
    returned channel reports its completeness residual and refuses application
    when it is not trace preserving.
    """
    if len(index_maps) != len(matrices):
        raise ValueError("need exactly one index map per Kraus matrix")
    d = measurement.local_dim
    nblocks = measurement.block_count
    projs = measurement.projectors()
    ops = []
    for f, c in zip(index_maps, matrices):
        table = [int(f(i)) for i in range(nblocks)] if callable(f) else [int(x) for x in f]
        if len(table) != nblocks or any(not 0 <= x < nblocks for x in table):
            raise ValueError(f"index map {table} must send 0..{nblocks - 1} into itself")
        c = np.asarray(c, dtype=complex)
        if c.shape != (d, d):
            raise ValueError(f"Kraus matrix must be {d}x{d}, got {c.shape}")
        ops.append(sum(projs[table[i]] @ c @ projs[i] for i in range(nblocks)))
    return KrausChannel(SubsystemLayout.single(label, d), tuple(ops))


@dataclass(frozen=True)
class BlockIncoherenceCertificate:
    """Outcome of sampling-based certification that a channel preserves the BI set."""

    passed: bool
    worst_residual: float
    trials: int
    seed: int
    structure: MultipartiteBlockStructure

    def __str__(self) -> str:
        word = "passed" if self.passed else "FAILED"
        return (
            f"block-incoherence certificate {word}: worst residual "
            f"{self.worst_residual:.3e} over {self.trials} trials"
        )


def verify_block_incoherent_channel(
    channel: KrausChannel,
    structure: MultipartiteBlockStructure | BlockMeasurement,
    trials: int = 50,
    seed: int = 0,
) -> BlockIncoherenceCertificate:
    """Certify by sampling that a channel maps BI states to BI states.

    Draws ``trials`` random constructive BI states, pushes them through the
    channel, and records the worst block-off-diagonal residual of the outputs.
    """
    struct = as_structure(structure, channel.layout)
    struct.validate_layout(channel.layout)
    if not channel.is_complete:
        raise ValueError(
            f"cannot certify a non-trace-preserving channel "
            f"(residual {channel.completeness_residual:.3e})"
        )
    worst = 0.0
    for t in range(trials):
        sigma = random_block_incoherent_state(struct, seed=child_rng(seed, t))
        out = apply_channel(sigma, channel)
        worst = max(worst, block_off_diagonal_residual(out, struct))
    return BlockIncoherenceCertificate(worst < TAU_EQ, worst, trials, seed, struct)


def certify_block_incoherent(
    channel: KrausChannel,
    structure: MultipartiteBlockStructure | BlockMeasurement,
    trials: int = 50,
    seed: int = 0,
) -> KrausChannel:
    """Return the channel with a fresh block-incoherence certificate attached."""
    cert = verify_block_incoherent_channel(channel, structure, trials, seed)
    return dataclasses.replace(channel, bi_certificate=cert)


def _rank_class_permutation(meas: BlockMeasurement, rng: np.random.Generator) -> list[int]:
    # random block permutation that only permutes blocks of equal rank
    perm = list(range(meas.block_count))
    ranks = meas.ranks
    for r in set(ranks):
        members = [i for i in range(meas.block_count) if ranks[i] == r]
        shuffled = list(rng.permutation(members))
        for src, dst in zip(members, shuffled):
            perm[src] = dst
    return perm


def _block_permutation_unitary(meas: BlockMeasurement, perm: Sequence[int]) -> np.ndarray:
    return sum(meas.pairing_matrix(perm[j], j) for j in range(meas.block_count))


def random_block_incoherent_unitary(
    meas: BlockMeasurement, seed: int | np.random.Generator = 0
) -> np.ndarray:
    """Random local BI unitary: Haar unitaries inside blocks, then a block permutation."""
    rng = child_rng(seed)
    inside = sum(
        meas.blocks[i] @ random_unitary(meas.ranks[i], rng) @ meas.blocks[i].conj().T
        for i in range(meas.block_count)
    )
    return _block_permutation_unitary(meas, _rank_class_permutation(meas, rng)) @ inside


def random_block_incoherent_channel(
    structure: MultipartiteBlockStructure,
    seed: int = 0,
    max_kraus: int = 64,
) -> KrausChannel:
    """Random exactly-trace-preserving channel that preserves the multipartite BI set.

    Composes, with random choices: local BI unitaries on every subsystem, a
    block permutation on one subsystem controlled on another's blocks, a local
    noisy BI channel built from P_{f(i)} C P_i Kraus operators, a mixture of BI
    unitaries, and the joint dephasing.  Every stage is BI by construction and
    exactly trace preserving, so the composite is too.
    """
    rng = child_rng(seed)
    layout = structure.layout
    dim = layout.dim
    stages: list[list[np.ndarray]] = []

    local_rot = np.array([[1.0 + 0.0j]])
    for label, meas in structure.parts:
        local_rot = np.kron(local_rot, random_block_incoherent_unitary(meas, rng))
    stages.append([local_rot])

    if layout.size >= 2 and rng.random() < 0.7:
        ctrl_label, tgt_label = (str(x) for x in rng.choice(layout.labels, size=2, replace=False))
        ctrl = structure.measurement(ctrl_label)
        tgt = structure.measurement(tgt_label)
        full = np.zeros((dim, dim), dtype=complex)
        for i in range(ctrl.block_count):
            perm = _rank_class_permutation(tgt, rng)
            piece = np.array([[1.0 + 0.0j]])
            for label in layout.labels:
                if label == ctrl_label:
                    piece = np.kron(piece, ctrl.projector(i))
                elif label == tgt_label:
                    piece = np.kron(piece, _block_permutation_unitary(tgt, perm))
                else:
                    piece = np.kron(piece, np.eye(layout.dim_of(label)))
            full += piece
        stages.append([full])

    if rng.random() < 0.7:
        label = str(rng.choice(layout.labels))
        meas = structure.measurement(label)
        local = _random_noisy_bi_kraus(meas, rng)
        stages.append([embed_operator(layout, label, k) for k in local])

    if rng.random() < 0.5:
        q = float(rng.uniform(0.2, 0.8))
        other = np.array([[1.0 + 0.0j]])
        for label, meas in structure.parts:
            other = np.kron(other, random_block_incoherent_unitary(meas, rng))
        stages.append([np.sqrt(q) * np.eye(dim), np.sqrt(1.0 - q) * other])

    if rng.random() < 0.3:
        stages.append(structure.joint_projectors())

    kraus: list[np.ndarray] = [np.eye(dim, dtype=complex)]
    for stage in stages:
        if len(kraus) * len(stage) > max_kraus:
            continue
        kraus = [s @ k for k in kraus for s in stage]
    return KrausChannel(layout, tuple(kraus))


def _random_noisy_bi_kraus(
    meas: BlockMeasurement, rng: np.random.Generator, outcomes: int = 2
) -> list[np.ndarray]:
    # Structural Kraus family with random block permutations f_l and random C_l,
    # renormalized by M^(-1/2); injective f_l keep M block diagonal so the
    # renormalized family still has the structural BI form.
    d = meas.local_dim
    projs = meas.projectors()
    while True:
        ops = []
        for _ in range(outcomes):
            perm = rng.permutation(meas.block_count)
            c = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            ops.append(sum(projs[perm[i]] @ c @ projs[i] for i in range(meas.block_count)))
        m = sum(k.conj().T @ k for k in ops)
        evals, vecs = np.linalg.eigh(m)
        if evals[0] > 0.02 * evals.mean():
            inv_sqrt = vecs @ np.diag(evals**-0.5) @ vecs.conj().T
            return [k @ inv_sqrt for k in ops]
