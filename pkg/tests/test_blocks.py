"""Block measurements, dephasing, and block-incoherent states/channels."""

import numpy as np
import pytest

import blockres as br
from blockres.blocks import dephase_matrix

RT2 = 1.0 / np.sqrt(2.0)

# Two rank-2 computational blocks {0,1} and {2,3}: the pairing matrix M[j][k]
# maps block k onto block j, basis vector by basis vector.
M = {
    (0, 0): np.diag([1.0, 1.0, 0.0, 0.0]).astype(complex),
    (1, 1): np.diag([0.0, 0.0, 1.0, 1.0]).astype(complex),
    (0, 1): np.array(
        [[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=complex
    ),
    (1, 0): np.array(
        [[0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex
    ),
}

# Frozen two-outcome block measurement for this structure: outcome 0 merges
# both blocks into block 0 with a plus phase, outcome 1 into block 1 with a
# relative minus (the two-block Fourier phases).
K0_EXPECTED = RT2 * (M[(0, 0)] + M[(0, 1)])
K1_EXPECTED = RT2 * (M[(1, 0)] - M[(1, 1)])


def two_block_measurement() -> br.BlockMeasurement:
    return br.BlockMeasurement.equal_blocks(2, 2)


def test_measurement_validation():
    with pytest.raises(ValueError):
        br.BlockMeasurement(2, (np.array([[1.0], [1.0]]),))  # not normalized
    with pytest.raises(ValueError):
        br.BlockMeasurement(3, (np.eye(3)[:, :2],))  # ranks do not sum to dim
    v = np.array([[1.0], [1.0]]) / np.sqrt(2)
    w = np.array([[1.0], [0.0]])
    with pytest.raises(ValueError):
        br.BlockMeasurement(2, (v, w))  # blocks not mutually orthogonal


def test_projectors_complete_orthogonal_idempotent():
    meas = br.BlockMeasurement.from_ranks([2, 1, 3])
    assert meas.ranks == (2, 1, 3)
    total = sum(meas.projectors())
    assert br.max_abs_diff(total, np.eye(6)) == 0.0
    for i, p in enumerate(meas.projectors()):
        assert br.max_abs_diff(p @ p, p) < 1e-14
        assert br.max_abs_diff(p, p.conj().T) == 0.0
        for j, q in enumerate(meas.projectors()):
            if i != j:
                assert br.max_abs(p @ q) < 1e-14


def test_coordinate_block_detection_and_rotation():
    meas = two_block_measurement()
    assert list(meas.coordinate_blocks) == [0, 0, 1, 1]
    rot = meas.rotated(br.random_unitary(4, seed=1))
    assert rot.coordinate_blocks is None
    total = sum(rot.projectors())
    assert br.max_abs_diff(total, np.eye(4)) < 1e-14


def test_pairing_matrix_moves_blocks():
    meas = br.BlockMeasurement.from_ranks([2, 2, 1])
    t = meas.pairing_matrix(1, 0)
    assert br.max_abs_diff(t @ meas.projector(0) @ t.conj().T, meas.projector(1)) < 1e-14
    swapped = meas.pairing_matrix(1, 0, pairing=[1, 0])
    assert br.max_abs_diff(
        swapped @ meas.projector(0) @ swapped.conj().T, meas.projector(1)
    ) < 1e-14
    assert br.max_abs_diff(t, swapped) > 0.5  # different vector pairing
    with pytest.raises(ValueError):
        meas.pairing_matrix(2, 0)  # rank mismatch
    with pytest.raises(ValueError):
        meas.pairing_matrix(1, 0, pairing=[0, 0])


def test_frozen_pairing_matrices():
    meas = two_block_measurement()
    for (j, k), want in M.items():
        assert br.max_abs_diff(meas.pairing_matrix(j, k), want) == 0.0


def test_dephase_matches_joint_projector_sum():
    rng = br.child_rng(2)
    meas_a = br.BlockMeasurement.from_ranks([1, 2]).rotated(br.random_unitary(3, rng))
    meas_b = br.BlockMeasurement.equal_blocks(2, 1)
    structure = br.MultipartiteBlockStructure((("A", meas_a), ("B1", meas_b)))
    for _ in range(10):
        rho = br.random_density_matrix(structure.layout, seed=rng)
        got = br.block_dephase(rho, structure)
        want = sum(p @ rho.matrix @ p for p in structure.joint_projectors())
        assert br.max_abs_diff(got.matrix, want) < 1e-13
        # idempotent and trace preserving
        assert br.max_abs_diff(br.block_dephase(got, structure).matrix, got.matrix) < 1e-13
        assert abs(got.matrix.trace() - 1.0) < 1e-13


def test_dephase_raw_matrix_matches_state_path():
    rng = br.child_rng(3)
    meas = two_block_measurement().rotated(br.random_unitary(4, rng))
    structure = br.MultipartiteBlockStructure.single("A", meas)
    rho = br.random_density_matrix(structure.layout, seed=rng)
    assert br.max_abs_diff(
        dephase_matrix(rho.matrix, structure, structure.layout),
        br.block_dephase(rho, meas).matrix,
    ) == 0.0


def test_dephase_worked_example():
    meas = two_block_measurement()
    layout = br.SubsystemLayout.single("A", 4)
    ket = np.array([1.0, 0.0, 1.0, 0.0]) / np.sqrt(2)
    rho = br.DensityMatrix.from_ket(layout, ket)
    deph = br.block_dephase(rho, meas)
    assert br.max_abs_diff(deph.matrix, np.diag([0.5, 0.0, 0.5, 0.0])) < 1e-15
    assert not br.is_block_diagonal(rho, meas)
    assert br.is_block_diagonal(deph, meas)


def test_block_incoherent_state_sampler():
    rng = br.child_rng(4)
    meas = two_block_measurement()
    structure = br.MultipartiteBlockStructure.uniform(["A", "B1"], meas)
    for _ in range(10):
        sigma = br.random_block_incoherent_state(structure, seed=rng)
        assert br.block_off_diagonal_residual(sigma, structure) < 1e-12
    single = br.random_block_incoherent_state(
        br.MultipartiteBlockStructure.single("A", meas), mixture_size=3, seed=5
    )
    assert br.is_block_diagonal(single, meas)
    a = br.random_block_incoherent_state(structure, seed=6)
    b = br.random_block_incoherent_state(structure, seed=6)
    assert br.max_abs_diff(a.matrix, b.matrix) == 0.0


def test_make_block_incoherent_kraus_matches_frozen_matrices():
    meas = two_block_measurement()
    c0 = RT2 * (M[(0, 0)] + M[(0, 1)])
    c1 = RT2 * (M[(1, 0)] - M[(1, 1)])
    chan = br.make_block_incoherent_kraus(meas, [[0, 0], [1, 1]], [c0, c1])
    assert br.max_abs_diff(chan.operators[0], K0_EXPECTED) < 1e-15
    assert br.max_abs_diff(chan.operators[1], K1_EXPECTED) < 1e-15
    assert chan.is_complete
    cert = br.verify_block_incoherent_channel(chan, meas, trials=20, seed=7)
    assert cert.passed
    # index maps can also be callables
    chan2 = br.make_block_incoherent_kraus(meas, [lambda i: 0, lambda i: 1], [c0, c1])
    assert br.max_abs_diff(chan2.operators[0], chan.operators[0]) == 0.0


def test_incomplete_family_reported_not_raised():
    meas = two_block_measurement()
    c0 = RT2 * (M[(0, 0)] + M[(0, 1)])
    chan = br.make_block_incoherent_kraus(meas, [[0, 0]], [c0])
    assert not chan.is_complete
    assert chan.completeness_residual > 0.4
    rho = br.maximally_mixed(br.SubsystemLayout.single("A", 4))
    with pytest.raises(ValueError):
        br.apply_channel(rho, chan)
    with pytest.raises(ValueError):
        br.verify_block_incoherent_channel(chan, meas)


def test_hadamard_fails_certification():
    meas = br.BlockMeasurement.equal_blocks(2, 1)
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    chan = br.KrausChannel(br.SubsystemLayout.single("A", 2), (h.astype(complex),))
    cert = br.verify_block_incoherent_channel(chan, meas, trials=10, seed=8)
    assert not cert.passed
    assert cert.worst_residual > 0.05
    assert "FAILED" in str(cert)


def test_random_bi_unitary_preserves_blocks():
    rng = br.child_rng(9)
    meas = br.BlockMeasurement.from_ranks([2, 2, 1])
    structure = br.MultipartiteBlockStructure.single("A", meas)
    for _ in range(10):
        u = br.random_block_incoherent_unitary(meas, rng)
        assert br.max_abs_diff(u @ u.conj().T, np.eye(5)) < 1e-12
        sigma = br.random_block_incoherent_state(structure, seed=rng)
        moved = u @ sigma.matrix @ u.conj().T
        out = br.DensityMatrix(structure.layout, moved)
        assert br.block_off_diagonal_residual(out, meas) < 1e-12


def test_random_bi_channels_certify():
    rng = br.child_rng(10)
    meas_a = br.BlockMeasurement.from_ranks([1, 2])
    meas_b = br.BlockMeasurement.equal_blocks(2, 2).rotated(br.random_unitary(4, rng))
    structure = br.MultipartiteBlockStructure((("A", meas_a), ("B1", meas_b)))
    for s in range(8):
        chan = br.random_block_incoherent_channel(structure, seed=s)
        assert chan.completeness_residual < 1e-12
        cert = br.verify_block_incoherent_channel(chan, structure, trials=5, seed=s)
        assert cert.passed, f"seed {s}: residual {cert.worst_residual}"
    tagged = br.certify_block_incoherent(chan, structure, trials=5, seed=99)
    assert tagged.bi_certificate is not None and tagged.bi_certificate.passed


def test_structure_restrict_and_validate():
    meas = two_block_measurement()
    structure = br.MultipartiteBlockStructure.uniform(["A", "B1", "B2"], meas)
    sub = structure.restrict(["A", "B2"])
    assert sub.labels == ("A", "B2")
    with pytest.raises(ValueError):
        structure.restrict(["Z"])
    with pytest.raises(ValueError):
        structure.validate_layout(br.SubsystemLayout((4, 4), ("A", "B1")))
    assert len(structure.joint_projectors()) == 8
