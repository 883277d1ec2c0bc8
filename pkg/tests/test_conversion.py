"""Forward conversion unitaries against brute-force constructions."""

import numpy as np
import pytest

import blockres as br

CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

# Coarse d=2, r=2 block-shift on one ancilla: block 0 <-> block 1, pairing the
# n-th basis vector of the source with the n-th of the target.
V1 = np.array(
    [[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=complex
)


def test_plan_validation():
    with pytest.raises(ValueError):
        br.ConversionPlan.fine([1, 1], 0)  # no ancillas
    with pytest.raises(ValueError):
        br.ConversionPlan.fine([3], 1)  # single block
    with pytest.raises(ValueError):
        br.ConversionPlan.coarse(2, 2, 1, measurement=br.BlockMeasurement.from_ranks([2, 1]))
    with pytest.raises(ValueError):
        br.ConversionPlan(br.BlockMeasurement.equal_blocks(2, 1), 1, "fine", rank=1)
    with pytest.raises(ValueError):
        br.ConversionPlan(br.BlockMeasurement.equal_blocks(2, 1), 1, "middle")
    plan = br.ConversionPlan.coarse(3, 2, 2)
    assert plan.labels == ("A", "B1", "B2")
    assert plan.layout.dims == (6, 6, 6)
    assert plan.ancilla_measurement.ranks == (2, 2, 2)
    fine = br.ConversionPlan.fine([2, 1], 2)
    assert fine.ancilla_dim == 2
    assert fine.layout.dims == (3, 2, 2)


def test_fine_two_level_single_ancilla_is_cnot():
    plan = br.ConversionPlan.fine([1, 1], 1)
    u = br.build_forward_unitary(plan)
    assert br.max_abs_diff(u.matrix, CNOT) == 0.0


def test_fine_unitary_matches_brute_force_rank_one():
    # d=3 rank-1 blocks, two ancillas: U|i,j,k> = |i,(i+j)%3,(i+k)%3>
    plan = br.ConversionPlan.fine([1, 1, 1], 2)
    u = br.build_fine_unitary(plan).matrix
    want = np.zeros((27, 27), dtype=complex)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                src = (i * 3 + j) * 3 + k
                dst = (i * 3 + (i + j) % 3) * 3 + (i + k) % 3
                want[dst, src] = 1.0
    assert br.max_abs_diff(u, want) == 0.0


def test_fine_unitary_matches_brute_force_mixed_ranks():
    # blocks {0,1} and {2} with one two-level ancilla:
    # U|v in block i>|j> = |v>|(i+j)%2>
    plan = br.ConversionPlan.fine([2, 1], 1)
    u = br.build_fine_unitary(plan).matrix
    block_of = [0, 0, 1]
    want = np.zeros((6, 6), dtype=complex)
    for v in range(3):
        for j in range(2):
            dst_j = (block_of[v] + j) % 2
            want[v * 2 + dst_j, v * 2 + j] = 1.0
    assert br.max_abs_diff(u, want) == 0.0


def test_coarse_unitary_matches_frozen_assembly():
    meas = br.BlockMeasurement.equal_blocks(2, 2)
    for n in (1, 2):
        plan = br.ConversionPlan.coarse(2, 2, n)
        u = br.build_coarse_unitary(plan).matrix
        v0 = np.eye(4, dtype=complex)
        want = np.zeros_like(u)
        for i, v in ((0, v0), (1, V1)):
            piece = meas.projector(i)
            for _ in range(n):
                piece = np.kron(piece, v)
            want += piece
        assert br.max_abs_diff(u, want) == 0.0


def test_coarse_pairing_matrices_identities():
    plan = br.ConversionPlan.coarse(3, 2, 1)
    cs = br.coarse_pairing_matrices(plan)
    meas = plan.ancilla_measurement
    for (i, j), c in cs.items():
        moved = c @ meas.projector(j) @ c.conj().T
        assert br.max_abs_diff(moved, meas.projector((i + j) % 3)) < 1e-14


def test_coarse_rank_one_reduces_to_fine():
    coarse = br.build_coarse_unitary(br.ConversionPlan.coarse(3, 1, 2))
    fine = br.build_fine_unitary(br.ConversionPlan.fine([1, 1, 1], 2))
    assert br.max_abs_diff(coarse.matrix, fine.matrix) == 0.0


def test_embedding_isometry_properties():
    for plan in (br.ConversionPlan.fine([2, 1], 2), br.ConversionPlan.coarse(2, 2, 2)):
        w = br.embedding_isometry(plan)
        assert br.max_abs_diff(w.conj().T @ w, np.eye(plan.system_dim)) < 1e-14
        rho = br.random_density_matrix(
            br.SubsystemLayout.single("A", plan.system_dim), seed=1
        )
        out, _ = br.convert_forward(rho, plan)
        assert br.max_abs_diff(out.matrix, w @ rho.matrix @ w.conj().T) < 1e-12


def test_convert_forward_entropy_and_ancilla_reduction():
    rng = br.child_rng(2)
    plan = br.ConversionPlan.coarse(2, 2, 2)
    rho = br.random_density_matrix(br.SubsystemLayout.single("A", 4), rank=3, seed=rng)
    out, transcript = br.convert_forward(rho, plan)
    assert abs(br.von_neumann_entropy(out) - br.von_neumann_entropy(rho)) < 1e-12
    reduced = br.partial_trace(out, ["A"])
    assert br.max_abs_diff(
        reduced.matrix, br.block_dephase(rho, plan.system_measurement).matrix
    ) < 1e-13
    report = br.verify_embedding(rho, out, plan)
    assert report.max_residual < 1e-12
    step = transcript.steps[0]
    assert step.sandwich.certified
    assert step.sandwich.certified_value_bits == pytest.approx(
        transcript.notes["input_c_r_bits"], abs=1e-10
    )


def test_convert_forward_rejects_wrong_input():
    plan = br.ConversionPlan.fine([1, 1], 1)
    rho = br.maximally_mixed(br.SubsystemLayout.single("A", 3))
    with pytest.raises(ValueError):
        br.convert_forward(rho, plan)


def test_forward_unitary_is_block_incoherent():
    for plan in (br.ConversionPlan.fine([2, 1], 1), br.ConversionPlan.coarse(2, 2, 1)):
        u = br.build_forward_unitary(plan)
        chan = br.KrausChannel(plan.layout, (u.matrix,))
        cert = br.verify_block_incoherent_channel(chan, plan.structure, trials=10, seed=3)
        assert cert.passed


def test_coarse_certificate_passes_canonical():
    cert = br.certify_coarse_unitary(br.ConversionPlan.coarse(2, 2, 2), trials=10, seed=4)
    assert cert.unitarity_residual < 1e-12
    assert cert.permutation_residual < 1e-12
    assert cert.preservation_residual < 1e-10
    assert cert.passed()


def test_coarse_certificate_detects_scaled_corruption():
    plan = br.ConversionPlan.coarse(2, 2, 1)
    cs = dict(br.coarse_pairing_matrices(plan))
    cs[(1, 0)] = 0.9 * cs[(1, 0)]  # breaks unitarity
    cert = br.certify_coarse_unitary(plan, trials=5, seed=5, c_override=cs)
    assert cert.unitarity_residual > 1e-2
    assert not cert.passed()
    assert cert.preservation_residual == np.inf


def test_coarse_certificate_detects_block_mixing_corruption():
    # unitary overall, but the controlled piece mixes blocks instead of
    # permuting them: unitarity passes, permutation and preservation fail
    plan = br.ConversionPlan.coarse(2, 2, 1)
    m = plan.ancilla_measurement
    rt2 = 1.0 / np.sqrt(2.0)
    cs = dict(br.coarse_pairing_matrices(plan))
    cs[(1, 0)] = rt2 * (m.pairing_matrix(0, 0) + m.pairing_matrix(1, 0))
    cs[(1, 1)] = rt2 * (m.pairing_matrix(0, 1) - m.pairing_matrix(1, 1))
    cert = br.certify_coarse_unitary(plan, trials=5, seed=6, c_override=cs)
    assert cert.unitarity_residual < 1e-12
    assert cert.permutation_residual > 0.4
    assert cert.preservation_residual > 1e-3
    assert not cert.passed()


def test_custom_pairing_still_certifies():
    plan = br.ConversionPlan.coarse(2, 2, 1)
    cert = br.certify_coarse_unitary(plan, trials=5, seed=7, pairing=[1, 0])
    assert cert.passed()
