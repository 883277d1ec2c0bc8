"""blockres: simulate and certify the exchange of block coherence for entanglement.

The package builds the block-incoherent machinery (measurements with
arbitrary-rank projectors, dephasing, block-incoherent states and channels),
the forward conversion of one system's block coherence into multipartite
entanglement with ancillas, and the reverse measurement-plus-feedback protocol
that concentrates it back, with every claimed equality and inequality checked
numerically at explicit tolerances.
"""

from .core import (
    EPS_EIG,
    EPS_PROB,
    EPS_SUPP,
    TAU_ENT,
    TAU_EQ,
    TAU_HERM,
    TAU_PSD,
    TAU_TRACE,
    TAU_UNIT,
    VERSION,
    Bipartition,
    DensityMatrix,
    KrausChannel,
    MeasurementOutcome,
    SubsystemLayout,
    UnitaryOperator,
    apply_channel,
    apply_unitary,
    child_rng,
    matrix_from_pairs,
    matrix_to_pairs,
    max_abs,
    max_abs_diff,
    maximally_mixed,
    measure_and_collapse,
    partial_trace,
    purity,
    quantum_relative_entropy,
    random_density_matrix,
    random_pure_state,
    random_unitary,
    tensor_product,
    von_neumann_entropy,
)
from .blocks import (
    BlockIncoherenceCertificate,
    BlockMeasurement,
    MultipartiteBlockStructure,
    block_dephase,
    block_off_diagonal_residual,
    certify_block_incoherent,
    is_block_diagonal,
    make_block_incoherent_kraus,
    random_block_incoherent_channel,
    random_block_incoherent_state,
    random_block_incoherent_unitary,
    verify_block_incoherent_channel,
)
from .measures import (
    TAU_CERT,
    EntanglementSandwich,
    entanglement_lower_bound,
    entanglement_sandwich,
    entanglement_upper_bound,
    enumerate_bipartitions,
    relative_entropy_block_coherence,
    relative_entropy_block_coherence_minimized,
)
from .transcript import ProtocolStep, ProtocolTranscript, state_digest
from .conversion import (
    ConversionPlan,
    CoarseConversionCertificate,
    EmbeddingReport,
    build_coarse_unitary,
    build_fine_unitary,
    build_forward_unitary,
    certify_coarse_unitary,
    coarse_pairing_matrices,
    convert_forward,
    embedding_isometry,
    initial_ancilla_state,
    verify_embedding,
)
from .reverse import (
    TransferBoundCertificate,
    build_coarse_feedback,
    build_coarse_measurement,
    build_fine_feedback,
    build_fine_measurement,
    measurement_feedback_step,
    run_reverse_protocol,
    verify_transfer_bound,
)
from .serialize import (
    InputError,
    measurement_from_json,
    measurement_to_json,
    plan_from_json,
    plan_to_json,
    structure_from_json,
    structure_to_json,
    transcript_to_json,
)
from .harness import (
    CheckResult,
    ResourceReport,
    Scenario,
    SelfTestReport,
    StageMeasures,
    demo_scenario,
    load_scenario,
    report_to_csv,
    report_to_json,
    run_demo,
    run_scenario,
    scenario_from_json,
    scenario_to_json,
    self_test,
)

__version__ = VERSION
