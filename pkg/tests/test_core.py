"""State/channel/entropy primitives against brute-force oracles."""

import math

import numpy as np
import pytest

import blockres as br


def brute_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # entrywise definition, independent of np.kron
    out = np.zeros((a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]), dtype=complex)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for k in range(b.shape[0]):
                for l in range(b.shape[1]):
                    out[i * b.shape[0] + k, j * b.shape[1] + l] = a[i, j] * b[k, l]
    return out


def brute_partial_trace(m: np.ndarray, dims: list[int], keep: list[int]) -> np.ndarray:
    # index-loop definition over the multi-index lattice
    n = len(dims)
    keep = sorted(keep)
    kd = int(np.prod([dims[i] for i in keep]))
    out = np.zeros((kd, kd), dtype=complex)
    idx = list(np.ndindex(*dims))
    for a_full in idx:
        for b_full in idx:
            if any(a_full[i] != b_full[i] for i in range(n) if i not in keep):
                continue
            ra = rb = 0
            for i in keep:
                ra = ra * dims[i] + a_full[i]
                rb = rb * dims[i] + b_full[i]
            fa = fb = 0
            for i in range(n):
                fa = fa * dims[i] + a_full[i]
                fb = fb * dims[i] + b_full[i]
            out[ra, rb] += m[fa, fb]
    return out


def test_layout_validation():
    with pytest.raises(ValueError):
        br.SubsystemLayout((2, 2), ("A", "A"))
    with pytest.raises(ValueError):
        br.SubsystemLayout((2,), ("A", "B"))
    layout = br.SubsystemLayout((2, 3, 4), ("A", "B1", "B2"))
    assert layout.dim == 24
    assert layout.dim_of("B1") == 3
    assert layout.restricted(["B2", "A"]).labels == ("A", "B2")
    with pytest.raises(ValueError):
        layout.index("Z")


def test_density_matrix_validation():
    layout = br.SubsystemLayout.single("A", 2)
    with pytest.raises(ValueError):
        br.DensityMatrix(layout, np.array([[1.0, 0.5], [0.2, 0.0]]))  # not Hermitian
    with pytest.raises(ValueError):
        br.DensityMatrix(layout, np.eye(2))  # trace 2
    with pytest.raises(ValueError):
        br.DensityMatrix(layout, np.diag([1.5, -0.5]))  # negative eigenvalue
    rho = br.DensityMatrix.from_ket(layout, np.array([3.0, 4.0]))  # normalizes
    assert abs(rho.matrix[0, 0] - 0.36) < 1e-12


def test_tensor_product_matches_entrywise_kron():
    rng = br.child_rng(1)
    a = br.random_density_matrix(br.SubsystemLayout.single("A", 2), seed=rng)
    b = br.random_density_matrix(br.SubsystemLayout.single("B1", 3), seed=rng)
    joint = br.tensor_product([a, b])
    assert joint.layout.labels == ("A", "B1")
    assert br.max_abs_diff(joint.matrix, brute_kron(a.matrix, b.matrix)) < 1e-14


def test_partial_trace_matches_brute_force():
    layout = br.SubsystemLayout((2, 3, 2), ("A", "B1", "B2"))
    rho = br.random_density_matrix(layout, seed=2)
    cases = {("A",): [0], ("B1",): [1], ("A", "B2"): [0, 2], ("B1", "B2"): [1, 2]}
    for keep, idx in cases.items():
        got = br.partial_trace(rho, list(keep))
        want = brute_partial_trace(rho.matrix, [2, 3, 2], idx)
        assert br.max_abs_diff(got.matrix, want) < 1e-13
        assert got.layout.labels == keep


def test_partial_trace_of_product_recovers_factor():
    rng = br.child_rng(3)
    a = br.random_density_matrix(br.SubsystemLayout.single("A", 3), seed=rng)
    b = br.random_density_matrix(br.SubsystemLayout.single("B1", 2), seed=rng)
    joint = br.tensor_product([a, b])
    assert br.max_abs_diff(br.partial_trace(joint, ["A"]).matrix, a.matrix) < 1e-14
    assert br.max_abs_diff(br.partial_trace(joint, ["B1"]).matrix, b.matrix) < 1e-14


def test_entropy_known_values():
    layout = br.SubsystemLayout.single("A", 3)
    rho = br.DensityMatrix(layout, np.diag([0.5, 0.25, 0.25]).astype(complex))
    assert abs(br.von_neumann_entropy(rho) - 1.5) < 1e-14
    pure = br.DensityMatrix.from_ket(layout, np.array([1.0, 1.0, 1.0]))
    assert br.von_neumann_entropy(pure) < 1e-12
    mixed = br.maximally_mixed(br.SubsystemLayout.single("A", 8))
    assert abs(br.von_neumann_entropy(mixed) - 3.0) < 1e-13


def test_entropy_invariant_under_unitary():
    layout = br.SubsystemLayout.single("A", 5)
    rho = br.random_density_matrix(layout, rank=3, seed=4)
    u = br.UnitaryOperator(layout, br.random_unitary(5, seed=5))
    assert abs(
        br.von_neumann_entropy(br.apply_unitary(rho, u)) - br.von_neumann_entropy(rho)
    ) < 1e-12


def test_relative_entropy_known_values():
    layout = br.SubsystemLayout.single("A", 2)
    plus = br.DensityMatrix.from_ket(layout, np.array([1.0, 1.0]))
    mixed = br.maximally_mixed(layout)
    assert abs(br.quantum_relative_entropy(plus, mixed) - 1.0) < 1e-12
    assert abs(br.quantum_relative_entropy(plus, plus)) < 1e-10
    zero = br.DensityMatrix.from_ket(layout, np.array([1.0, 0.0]))
    one = br.DensityMatrix.from_ket(layout, np.array([0.0, 1.0]))
    assert br.quantum_relative_entropy(zero, one) == math.inf


def test_relative_entropy_nonnegative_and_zero_iff():
    rng = br.child_rng(6)
    for _ in range(200):
        d = int(rng.integers(2, 5))
        layout = br.SubsystemLayout.single("A", d)
        rho = br.random_density_matrix(layout, seed=rng)
        sigma = br.random_density_matrix(layout, seed=rng)
        val = br.quantum_relative_entropy(rho, sigma)
        assert val > -1e-12
        if br.max_abs_diff(rho.matrix, sigma.matrix) > 1e-3:
            assert val > 1e-8
        assert abs(br.quantum_relative_entropy(rho, rho)) < 1e-10


def test_relative_entropy_data_processing_under_partial_trace():
    layout = br.SubsystemLayout((2, 2, 3), ("A", "B1", "B2"))
    rng = br.child_rng(7)
    for _ in range(25):
        rho = br.random_density_matrix(layout, seed=rng)
        sigma = br.random_density_matrix(layout, seed=rng)
        big = br.quantum_relative_entropy(rho, sigma)
        for keep in (["A"], ["A", "B1"], ["B1", "B2"]):
            small = br.quantum_relative_entropy(
                br.partial_trace(rho, keep), br.partial_trace(sigma, keep)
            )
            assert small <= big + 1e-8


def test_kraus_channel_completeness_gate():
    layout = br.SubsystemLayout.single("A", 2)
    half = br.KrausChannel(layout, (np.diag([1.0, 0.0]).astype(complex),))
    assert not half.is_complete
    assert half.completeness_residual == pytest.approx(1.0)
    rho = br.maximally_mixed(layout)
    with pytest.raises(ValueError):
        br.apply_channel(rho, half)
    with pytest.raises(ValueError):
        br.measure_and_collapse(rho, half)


def test_measurement_policies_and_degenerate_flag():
    layout = br.SubsystemLayout.single("A", 2)
    proj = br.KrausChannel(
        layout, (np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex))
    )
    plus = br.DensityMatrix.from_ket(layout, np.array([1.0, 1.0]))
    branches = br.measure_and_collapse(plus, proj, "all")
    assert [b.index for b in branches] == [0, 1]
    assert all(abs(b.probability - 0.5) < 1e-12 for b in branches)
    only = br.measure_and_collapse(plus, proj, "fixed", outcome=1)
    assert len(only) == 1 and only[0].index == 1
    s1 = br.measure_and_collapse(plus, proj, "sample", seed=11)
    s2 = br.measure_and_collapse(plus, proj, "sample", seed=11)
    assert s1[0].index == s2[0].index

    zero = br.DensityMatrix.from_ket(layout, np.array([1.0, 0.0]))
    branches = br.measure_and_collapse(zero, proj, "all")
    assert not branches[0].degenerate and branches[1].degenerate
    assert branches[1].state is None and branches[1].probability < 1e-12
    with pytest.raises(ValueError):
        br.measure_and_collapse(plus, proj, "fixed")
    with pytest.raises(ValueError):
        br.measure_and_collapse(plus, proj, "guess")


def test_measurement_branches_mix_to_channel_output():
    layout = br.SubsystemLayout.single("A", 3)
    rho = br.random_density_matrix(layout, seed=8)
    u = br.random_unitary(3, seed=9)
    ops = tuple(u @ np.diag(row).astype(complex) for row in np.eye(3))
    chan = br.KrausChannel(layout, ops)
    mixed = sum(
        b.probability * b.state.matrix
        for b in br.measure_and_collapse(rho, chan, "all")
        if not b.degenerate
    )
    assert br.max_abs_diff(mixed, br.apply_channel(rho, chan).matrix) < 1e-12


def test_unitary_validation():
    layout = br.SubsystemLayout.single("A", 2)
    with pytest.raises(ValueError):
        br.UnitaryOperator(layout, np.array([[1.0, 1.0], [0.0, 1.0]]))
    u = br.UnitaryOperator(layout, br.random_unitary(2, seed=10))
    rho = br.random_density_matrix(layout, seed=11)
    out = br.apply_unitary(rho, u)
    assert abs(out.matrix.trace() - 1.0) < 1e-12


def test_random_state_determinism_rank_and_mean():
    layout = br.SubsystemLayout.single("A", 4)
    a = br.random_density_matrix(layout, seed=12)
    b = br.random_density_matrix(layout, seed=12)
    assert br.max_abs_diff(a.matrix, b.matrix) == 0.0
    low = br.random_density_matrix(layout, rank=2, seed=13)
    assert int((np.linalg.eigvalsh(low.matrix) > 1e-10).sum()) == 2
    rng = br.child_rng(14)
    mean = sum(br.random_density_matrix(layout, seed=rng).matrix for _ in range(300)) / 300
    assert br.max_abs_diff(mean, np.eye(4) / 4) < 0.02
    with pytest.raises(ValueError):
        br.random_density_matrix(layout, rank=5)


def test_child_rng_split_streams():
    a = br.child_rng(0, 1).normal(size=4)
    b = br.child_rng(0, 2).normal(size=4)
    c = br.child_rng(0, 1).normal(size=4)
    assert np.array_equal(a, c)
    assert not np.array_equal(a, b)


def test_matrix_pairs_roundtrip():
    m = br.random_density_matrix(br.SubsystemLayout.single("A", 3), seed=15).matrix
    again = br.matrix_from_pairs(br.matrix_to_pairs(m))
    assert br.max_abs_diff(m, again) == 0.0
    with pytest.raises(ValueError):
        br.matrix_from_pairs([[1.0, 2.0]])


def test_purity_range():
    layout = br.SubsystemLayout.single("A", 3)
    assert abs(br.purity(br.maximally_mixed(layout)) - 1 / 3) < 1e-12
    pure = br.DensityMatrix.from_ket(layout, np.array([1.0, 2.0, -1.0j]))
    assert abs(br.purity(pure) - 1.0) < 1e-12
