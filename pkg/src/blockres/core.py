"""State, channel, and entropy primitives for dense qudit simulation.

Everything operates on explicit complex matrices (dimensions up to a few
hundred), and every entropic quantity uses log base 2, so values are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

VERSION = "0.1.0"

# Numerical policy, tuned for double precision at dimension <= a few hundred.
EPS_EIG = 1e-12    # eigenvalues below this count as zero
EPS_SUPP = 1e-10   # rho-weight allowed outside sigma's support before divergence is infinite
EPS_PROB = 1e-12   # measurement outcomes below this probability are degenerate
TAU_HERM = 1e-10
TAU_UNIT = 1e-10
TAU_TRACE = 1e-10
TAU_PSD = 1e-9
TAU_ENT = 1e-8
TAU_EIG = 1e-9
TAU_EQ = 1e-9


def child_rng(seed: int | np.random.Generator, *path: int) -> np.random.Generator:
    """Counter-based generator for ``seed``, split along an integer branch path.

    Splitting keeps parallel sampling branches reproducible: the stream for
    ``child_rng(seed, 3, 1)`` does not depend on how many draws other branches
    made.  A ready-made ``Generator`` is passed through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def max_abs_diff(a: np.ndarray, b: np.ndarray) -> float:
    return max_abs(np.asarray(a) - np.asarray(b))


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered list of labelled subsystems; the joint space is their Kronecker product."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(self.dims) != len(self.labels):
            raise ValueError("dims and labels must have equal length")
        if not self.dims:
            raise ValueError("layout needs at least one subsystem")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"subsystem dimensions must be positive, got {self.dims}")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate subsystem labels in {self.labels}")

    @classmethod
    def single(cls, label: str, dim: int) -> "SubsystemLayout":
        return cls((dim,), (label,))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def size(self) -> int:
        return len(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown subsystem label {label!r}, have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def restricted(self, keep: Sequence[str]) -> "SubsystemLayout":
        """Layout of the listed subsystems, in this layout's order."""
        keep_set = set(keep)
        unknown = keep_set - set(self.labels)
        if unknown:
            raise ValueError(f"unknown subsystem labels {sorted(unknown)}, have {self.labels}")
        pairs = [(d, s) for d, s in zip(self.dims, self.labels) if s in keep_set]
        if not pairs:
            raise ValueError("cannot restrict a layout to zero subsystems")
        return SubsystemLayout(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


@dataclass(frozen=True)
class Bipartition:
    """Unordered split of a layout's labels into two non-empty groups."""

    left: tuple[str, ...]
    right: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "left", tuple(self.left))
        object.__setattr__(self, "right", tuple(self.right))
        if not self.left or not self.right:
            raise ValueError("both sides of a bipartition must be non-empty")
        if set(self.left) & set(self.right):
            raise ValueError("bipartition sides overlap")

    def validate(self, layout: SubsystemLayout) -> None:
        if set(self.left) | set(self.right) != set(layout.labels):
            raise ValueError(
                f"bipartition {self} does not cover layout labels {layout.labels}"
            )

    def __str__(self) -> str:
        return ",".join(self.left) + "|" + ",".join(self.right)


def _check_square(m: np.ndarray, dim: int, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.shape != (dim, dim):
        raise ValueError(f"{what} must be {dim}x{dim}, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated density operator on a subsystem layout."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = _check_square(self.matrix, self.layout.dim, "density matrix")
        herm = max_abs_diff(m, m.conj().T)
        if herm > TAU_HERM:
            raise ValueError(f"density matrix not Hermitian (residual {herm:.3e})")
        tr = m.trace()
        if abs(tr - 1.0) > TAU_TRACE:
            raise ValueError(f"density matrix trace {tr:.12f} != 1")
        lam_min = float(np.linalg.eigvalsh(m)[0])
        if lam_min < -TAU_PSD:
            raise ValueError(f"density matrix has negative eigenvalue {lam_min:.3e}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, layout: SubsystemLayout, ket: np.ndarray) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex).reshape(-1)
        if v.shape[0] != layout.dim:
            raise ValueError(f"ket has dimension {v.shape[0]}, layout needs {layout.dim}")
        n = np.linalg.norm(v)
        if n < 1e-12:
            raise ValueError("cannot normalize a zero ket")
        v = v / n
        return cls(layout, np.outer(v, v.conj()))

    @property
    def dim(self) -> int:
        return self.layout.dim


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    """Validated unitary on a subsystem layout."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = _check_square(self.matrix, self.layout.dim, "unitary")
        res = max_abs_diff(m @ m.conj().T, np.eye(self.layout.dim))
        if res > TAU_UNIT:
            raise ValueError(f"operator is not unitary (residual {res:.3e})")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.dim


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Channel given by an explicit Kraus family.

    ``completeness_residual`` is the max-entry deviation of sum(K^dag K) from
    the identity.  Families that fail completeness are representable (so a
    caller can inspect what went wrong) but cannot be applied to states.
    ``bi_certificate`` optionally records a block-incoherence certification.
    """

    layout: SubsystemLayout
    operators: tuple[np.ndarray, ...]
    bi_certificate: object | None = None

    def __post_init__(self) -> None:
        if not self.operators:
            raise ValueError("channel needs at least one Kraus operator")
        ops = tuple(_check_square(k, self.layout.dim, "Kraus operator") for k in self.operators)
        for k in ops:
            k.flags.writeable = False
        object.__setattr__(self, "operators", ops)
        total = sum(k.conj().T @ k for k in ops)
        res = max_abs_diff(total, np.eye(self.layout.dim))
        object.__setattr__(self, "_completeness_residual", float(res))

    @property
    def completeness_residual(self) -> float:
        return self._completeness_residual  # type: ignore[attr-defined]

    @property
    def is_complete(self) -> bool:
        return self.completeness_residual <= TAU_UNIT


@dataclass(frozen=True, eq=False)
class MeasurementOutcome:
    """One branch of a measurement: outcome index, probability, collapsed state.

    ``state`` is None for degenerate branches (probability below EPS_PROB),
    which are reported rather than silently dropped.
    """

    index: int
    probability: float
    state: DensityMatrix | None

    @property
    def degenerate(self) -> bool:
        return self.state is None


def tensor_product(states: Sequence[DensityMatrix]) -> DensityMatrix:
    """Kronecker product of states, left to right; labels must stay unique."""
    if not states:
        raise ValueError("tensor_product needs at least one state")
    labels: list[str] = []
    dims: list[int] = []
    m = np.array([[1.0 + 0.0j]])
    for s in states:
        labels.extend(s.layout.labels)
        dims.extend(s.layout.dims)
        m = np.kron(m, s.matrix)
    return DensityMatrix(SubsystemLayout(tuple(dims), tuple(labels)), m)


def partial_trace(state: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Trace out every subsystem not in ``keep``; kept labels keep their order."""
    layout = state.layout
    new_layout = layout.restricted(keep)
    keep_set = set(new_layout.labels)
    n = layout.size
    if len(keep_set) == n:
        return state

    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise ValueError("too many subsystems for partial trace")
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    out = ""
    for i, label in enumerate(layout.labels):
        if label in keep_set:
            out += row[i]
        else:
            col[i] = row[i]  # repeated index contracts the traced subsystem
    for i, label in enumerate(layout.labels):
        if label in keep_set:
            out += col[i]
    t = state.matrix.reshape(layout.dims + layout.dims)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = new_layout.dim
    return DensityMatrix(new_layout, reduced.reshape(d, d))


def _clamped_spectrum(m: np.ndarray) -> np.ndarray:
    """Eigenvalues with sub-EPS_EIG entries zeroed and the rest renormalized."""
    evals = np.linalg.eigvalsh(m)
    evals = np.where(evals < EPS_EIG, 0.0, evals)
    total = evals.sum()
    if total <= 0.0:
        raise ValueError("spectrum vanished entirely; matrix is not a state")
    return evals / total


def von_neumann_entropy(state: DensityMatrix) -> float:
    """S(rho) = -sum_i lam_i log2 lam_i in bits, with 0 log 0 = 0."""
    lam = _clamped_spectrum(state.matrix)
    nz = lam[lam > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def quantum_relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """S(rho || sigma) = tr(rho log2 rho) - tr(rho log2 sigma) in bits.

    Returns +inf when rho has weight above EPS_SUPP outside sigma's support
    (support read off at eigenvalue threshold EPS_EIG).
    """
    if rho.layout.dims != sigma.layout.dims:
        raise ValueError("relative entropy needs states of identical dimensions")
    w, v = np.linalg.eigh(sigma.matrix)
    p = np.einsum("ij,jk,ki->i", v.conj().T, rho.matrix, v).real
    null = w < EPS_EIG
    if p[null].sum() > EPS_SUPP:
        return math.inf
    cross = float((p[~null] * np.log2(w[~null])).sum())
    return -von_neumann_entropy(rho) - cross


def purity(state: DensityMatrix) -> float:
    return float(np.trace(state.matrix @ state.matrix).real)


def apply_unitary(state: DensityMatrix, u: UnitaryOperator) -> DensityMatrix:
    if state.layout != u.layout:
        raise ValueError("unitary and state layouts differ")
    m = u.matrix @ state.matrix @ u.matrix.conj().T
    return DensityMatrix(state.layout, 0.5 * (m + m.conj().T))


def apply_channel(state: DensityMatrix, channel: KrausChannel) -> DensityMatrix:
    if state.layout != channel.layout:
        raise ValueError("channel and state layouts differ")
    if not channel.is_complete:
        raise ValueError(
            f"channel is not trace-preserving (residual {channel.completeness_residual:.3e})"
        )
    m = sum(k @ state.matrix @ k.conj().T for k in channel.operators)
    return DensityMatrix(state.layout, 0.5 * (m + m.conj().T))


def measure_and_collapse(
    state: DensityMatrix,
    channel: KrausChannel,
    policy: str = "all",
    *,
    outcome: int | None = None,
    seed: int | np.random.Generator | None = None,
) -> list[MeasurementOutcome]:
    """Measure ``channel``'s Kraus family on ``state``.

    policy "all" returns every branch, "fixed" the branch ``outcome``, and
    "sample" one branch drawn with the Born probabilities using ``seed``.
    Branches with probability below EPS_PROB come back flagged (state=None).
    """
    if state.layout != channel.layout:
        raise ValueError("channel and state layouts differ")
    if not channel.is_complete:
        raise ValueError(
            f"channel is not trace-preserving (residual {channel.completeness_residual:.3e})"
        )
    raw = [k @ state.matrix @ k.conj().T for k in channel.operators]
    probs = np.array([max(m.trace().real, 0.0) for m in raw])

    def branch(i: int) -> MeasurementOutcome:
        p = float(probs[i])
        if p < EPS_PROB:
            return MeasurementOutcome(i, p, None)
        m = raw[i] / p
        return MeasurementOutcome(i, p, DensityMatrix(state.layout, 0.5 * (m + m.conj().T)))

    if policy == "all":
        return [branch(i) for i in range(len(raw))]
    if policy == "fixed":
        if outcome is None or not 0 <= outcome < len(raw):
            raise ValueError(f"fixed policy needs an outcome index in [0, {len(raw)})")
        return [branch(outcome)]
    if policy == "sample":
        total = probs.sum()
        live = probs >= EPS_PROB
        if not live.any():
            raise ValueError("all measurement outcomes are degenerate")
        weights = np.where(live, probs, 0.0) / probs[live].sum()
        rng = child_rng(0 if seed is None else seed)
        return [branch(int(rng.choice(len(raw), p=weights)))]
    raise ValueError(f"unknown outcome policy {policy!r}")


def embed_operator(layout: SubsystemLayout, label: str, op: np.ndarray) -> np.ndarray:
    """Lift a single-subsystem operator to the full layout (identity elsewhere)."""
    pos = layout.index(label)
    op = _check_square(op, layout.dims[pos], f"operator on {label!r}")
    full = np.array([[1.0 + 0.0j]])
    for i, d in enumerate(layout.dims):
        full = np.kron(full, op if i == pos else np.eye(d))
    return full


def random_density_matrix(
    layout: SubsystemLayout,
    rank: int | None = None,
    seed: int | np.random.Generator = 0,
) -> DensityMatrix:
    """Random state of the given rank: G G^dag / tr for a complex Gaussian G."""
    d = layout.dim
    rank = d if rank is None else int(rank)
    if not 1 <= rank <= d:
        raise ValueError(f"rank must lie in [1, {d}], got {rank}")
    rng = child_rng(seed)
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return DensityMatrix(layout, m / m.trace())


def random_pure_state(
    layout: SubsystemLayout, seed: int | np.random.Generator = 0
) -> DensityMatrix:
    """Haar-distributed pure state."""
    rng = child_rng(seed)
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return DensityMatrix.from_ket(layout, v)


def random_unitary(dim: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """Haar-distributed unitary matrix via QR with phase fixing."""
    rng = child_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def maximally_mixed(layout: SubsystemLayout) -> DensityMatrix:
    d = layout.dim
    return DensityMatrix(layout, np.eye(d) / d)


def basis_ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def matrix_to_pairs(m: np.ndarray) -> list[list[list[float]]]:
    """Row-major nested [re, im] pairs, the JSON wire form of a complex matrix."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_pairs(data: object) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("complex matrix JSON must be a nested array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
