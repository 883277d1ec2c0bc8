"""Scenario runner, canonical demo cycle, and the self-test property sweep.

A scenario names a conversion plan, an input state, and a list of named
checks; running it produces a resource report with one pass/fail line per
check plus the measure table of every protocol stage.  The self test drives
the numerical invariants of every module with seeded random sweeps.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .blocks import (
    BlockMeasurement,
    MultipartiteBlockStructure,
    block_dephase,
    block_off_diagonal_residual,
    random_block_incoherent_channel,
    random_block_incoherent_state,
    verify_block_incoherent_channel,
)
from .conversion import (
    ConversionPlan,
    build_coarse_unitary,
    build_fine_unitary,
    build_forward_unitary,
    certify_coarse_unitary,
    convert_forward,
    verify_embedding,
)
from .core import (
    TAU_ENT,
    TAU_TRACE,
    VERSION,
    DensityMatrix,
    KrausChannel,
    SubsystemLayout,
    UnitaryOperator,
    apply_channel,
    apply_unitary,
    child_rng,
    matrix_from_pairs,
    max_abs_diff,
    measure_and_collapse,
    partial_trace,
    purity,
    quantum_relative_entropy,
    random_density_matrix,
    random_unitary,
    tensor_product,
    von_neumann_entropy,
)
from .measures import (
    enumerate_bipartitions,
    entanglement_lower_bound,
    entanglement_sandwich,
    relative_entropy_block_coherence,
    relative_entropy_block_coherence_minimized,
)
from .reverse import (
    build_coarse_measurement,
    build_fine_measurement,
    run_reverse_protocol,
    verify_transfer_bound,
)
from .serialize import (
    InputError,
    plan_from_json,
    plan_to_json,
    sandwich_to_json,
    transcript_to_json,
)
from .transcript import ProtocolTranscript

ENV_SEED = "BLOCKRES_SEED"


@dataclass(frozen=True)
class CheckResult:
    check: str
    passed: bool
    residual: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{mark}] {self.check}: residual {self.residual:.3e} (tol {self.threshold:.1e}){extra}"


@dataclass(frozen=True, eq=False)
class StageMeasures:
    stage: str
    c_r_bits: float
    sandwich: Any  # EntanglementSandwich | None


@dataclass(frozen=True, eq=False)
class Scenario:
    """A runnable verification case: plan, input state spec, checks, seed."""

    name: str
    plan: ConversionPlan
    input_state: Mapping[str, Any]
    checks: tuple[str, ...]
    seed: int = 0


@dataclass(frozen=True, eq=False)
class ResourceReport:
    """Outcome of one scenario run."""

    scenario: str
    seed: int
    version: str
    runtime_s: float
    passed: bool
    checks: tuple[CheckResult, ...]
    measures: tuple[StageMeasures, ...]
    forward_transcript: ProtocolTranscript | None = None
    reverse_transcript: ProtocolTranscript | None = None

    def lines(self) -> list[str]:
        out = [f"scenario {self.scenario!r} (seed {self.seed}, {self.runtime_s:.2f}s)"]
        out += [c.line() for c in self.checks]
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


class _Run:
    """Everything a check can ask about one scenario run."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.plan = scenario.plan
        self.seed = seed
        self.rho_a = build_input_state(scenario.input_state, scenario.plan, seed)
        self.input_c_r = relative_entropy_block_coherence(
            self.rho_a, self.plan.system_measurement
        )
        self.unitary = build_forward_unitary(self.plan)
        self.output, self.forward = convert_forward(self.rho_a, self.plan)
        self.reverse = run_reverse_protocol(
            self.output, self.plan, policy="all", seed=child_rng_int(seed, 1)
        )

    @property
    def stages(self) -> tuple[StageMeasures, ...]:
        rows = [StageMeasures("input", self.input_c_r, None)]
        fwd = self.forward.steps[0]
        rows.append(StageMeasures("converted", fwd.c_r_bits, fwd.sandwich))
        for step in self.reverse.steps:
            rows.append(StageMeasures(f"after_{step.subsystem}", step.c_r_bits, step.sandwich))
        return tuple(rows)


def child_rng_int(seed: int, *path: int) -> int:
    """Derived integer seed on the splittable stream (for APIs that take ints)."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(path)).generate_state(1)[0])


def build_input_state(
    spec: Mapping[str, Any], plan: ConversionPlan, seed: int
) -> DensityMatrix:
    layout = SubsystemLayout.single("A", plan.system_dim)
    kind = spec.get("type")
    if kind == "random":
        rank = spec.get("rank")
        state_seed = spec.get("seed")
        rng = child_rng(seed, 0) if state_seed is None else child_rng(int(state_seed))
        return random_density_matrix(layout, None if rank is None else int(rank), rng)
    if kind == "explicit":
        try:
            m = matrix_from_pairs(spec.get("matrix"))
            return DensityMatrix(layout, m)
        except (ValueError, TypeError) as exc:
            raise InputError("input_state.matrix", str(exc)) from None
    if kind == "pure_superposition":
        blocks = spec.get("blocks")
        if not isinstance(blocks, (list, tuple)) or not blocks:
            raise InputError("input_state.blocks", "need a non-empty list of block indices")
        blocks = [int(b) for b in blocks]
        if len(set(blocks)) != len(blocks):
            raise InputError("input_state.blocks", "block indices must be distinct")
        d = plan.block_count
        if any(not 0 <= b < d for b in blocks):
            raise InputError("input_state.blocks", f"block indices must lie in [0, {d})")
        ket = sum(plan.system_measurement.basis_vector(b, 0) for b in blocks)
        return DensityMatrix.from_ket(layout, ket)
    raise InputError(
        "input_state.type",
        "must be 'random', 'explicit', or 'pure_superposition'",
    )


# --- named checks ---------------------------------------------------------

def _check_embedding(run: _Run) -> CheckResult:
    rep = verify_embedding(run.rho_a, run.output, run.plan)
    res = rep.max_residual
    return CheckResult("embedding", res < 1e-10, res, 1e-10)


def _check_sandwich(run: _Run) -> CheckResult:
    s = run.forward.steps[0].sandwich
    if not s.certified:
        return CheckResult(
            "sandwich", False, s.upper_bits - s.lower_bits, 1e-8,
            "sandwich did not certify",
        )
    res = max(
        abs(s.certified_value_bits - run.input_c_r),
        abs(run.forward.steps[0].c_r_bits - run.input_c_r),
    )
    return CheckResult("sandwich", res < 1e-8, res, 1e-8)


def _check_ancilla_reduction(run: _Run) -> CheckResult:
    reduced = partial_trace(run.output, ["A"])
    ideal = block_dephase(run.rho_a, run.plan.system_measurement)
    res = max_abs_diff(reduced.matrix, ideal.matrix)
    return CheckResult("ancilla_reduction", res < 1e-12, res, 1e-12)


def _check_bipartition_witness(run: _Run) -> CheckResult:
    s = run.forward.steps[0].sandwich
    values = [v for _, v in s.per_bipartition_lower]
    res = max(abs(v - run.input_c_r) for v in values)
    positive = run.input_c_r < 1e-6 or min(values) > 0.0
    return CheckResult(
        "bipartition_witness", res < 1e-8 and positive, res, 1e-8,
        "" if positive else "a bipartition bound is not strictly positive",
    )


def _check_roundtrip(run: _Run) -> CheckResult:
    res = max_abs_diff(run.reverse.final_state.matrix, run.rho_a.matrix)
    return CheckResult("roundtrip", res < 1e-10, res, 1e-10)


def _chain_values(run: _Run) -> list[float]:
    values = [run.input_c_r]
    for step in (run.forward.steps[0],) + run.reverse.steps:
        if step.sandwich is not None:
            if not step.sandwich.certified:
                values.append(math.inf)
            else:
                values.append(step.sandwich.certified_value_bits)
        else:
            values.append(step.c_r_bits)
    return values


def _check_chain(run: _Run) -> CheckResult:
    values = _chain_values(run)
    if any(math.isinf(v) for v in values):
        return CheckResult("chain", False, math.inf, 1e-8, "an interior sandwich stayed open")
    res = max(abs(v - run.input_c_r) for v in values)
    return CheckResult("chain", res < 1e-8, res, 1e-8)


def _check_outcome_independence(run: _Run) -> CheckResult:
    res = max((s.branch_distance for s in run.reverse.steps), default=0.0)
    prob_res = max(
        abs(sum(s.branch_probabilities) - 1.0) for s in run.reverse.steps
    )
    ok = res < 1e-10 and prob_res < TAU_TRACE
    return CheckResult(
        "outcome_independence", ok, max(res, prob_res), 1e-10,
        f"branch probabilities off by {prob_res:.1e}" if prob_res >= TAU_TRACE else "",
    )


def _check_monotonicity(run: _Run) -> CheckResult:
    trail = [run.input_c_r, run.forward.steps[0].c_r_bits]
    trail += [s.c_r_bits for s in run.reverse.steps]
    worst = max(
        (trail[i + 1] - trail[i] for i in range(len(trail) - 1)), default=0.0
    )
    return CheckResult("monotonicity", worst <= TAU_ENT, max(worst, 0.0), TAU_ENT)


def _check_transfer_bound(run: _Run) -> CheckResult:
    cert = verify_transfer_bound(run.reverse, run.plan.structure)
    return CheckResult(
        "transfer_bound", cert.passed, max(cert.max_excess, 0.0), TAU_ENT,
        f"budget {cert.budget_bits:.6f} bits"
        + ("" if cert.budget_certified else " (upper bound, sandwich open)"),
    )


def _check_coarse_certificate(run: _Run) -> CheckResult:
    cert = certify_coarse_unitary(run.plan, trials=50, seed=child_rng_int(run.seed, 2))
    return CheckResult(
        "coarse_certificate",
        cert.passed(),
        max(cert.unitarity_residual, cert.permutation_residual),
        1e-12,
        f"BI preservation residual {cert.preservation_residual:.3e} (tol 1e-10)",
    )


def _check_unitary_bi(run: _Run) -> CheckResult:
    channel = KrausChannel(run.plan.layout, (run.unitary.matrix,))
    cert = verify_block_incoherent_channel(
        channel, run.plan.structure, trials=50, seed=child_rng_int(run.seed, 3)
    )
    return CheckResult("unitary_bi", cert.passed, cert.worst_residual, 1e-9)


def _check_coherence_oracle(run: _Run) -> CheckResult:
    oracle = relative_entropy_block_coherence_minimized(
        run.rho_a, run.plan.system_measurement, seed=child_rng_int(run.seed, 4)
    )
    res = abs(oracle - run.input_c_r)
    return CheckResult("coherence_oracle", res < 1e-4, res, 1e-4)


CHECKS: dict[str, Callable[[_Run], CheckResult]] = {
    "embedding": _check_embedding,
    "sandwich": _check_sandwich,
    "ancilla_reduction": _check_ancilla_reduction,
    "bipartition_witness": _check_bipartition_witness,
    "roundtrip": _check_roundtrip,
    "chain": _check_chain,
    "outcome_independence": _check_outcome_independence,
    "monotonicity": _check_monotonicity,
    "transfer_bound": _check_transfer_bound,
    "coarse_certificate": _check_coarse_certificate,
    "unitary_bi": _check_unitary_bi,
    "coherence_oracle": _check_coherence_oracle,
}

DEFAULT_CHECKS = (
    "embedding",
    "sandwich",
    "ancilla_reduction",
    "bipartition_witness",
    "roundtrip",
    "chain",
    "outcome_independence",
    "monotonicity",
    "transfer_bound",
)


def env_seed() -> int | None:
    raw = os.environ.get(ENV_SEED)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise InputError(ENV_SEED, f"environment seed must be an integer, got {raw!r}") from None


def scenario_from_json(data: Any) -> Scenario:
    if not isinstance(data, Mapping):
        raise InputError("scenario", "scenario must be a JSON object")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        raise InputError("name", "scenario needs a non-empty name")
    plan = plan_from_json(data.get("plan"), "plan")
    input_state = data.get("input_state")
    if not isinstance(input_state, Mapping):
        raise InputError("input_state", "must be an object with a 'type' field")
    checks = data.get("checks", list(DEFAULT_CHECKS))
    if not isinstance(checks, (list, tuple)) or not checks:
        raise InputError("checks", "must be a non-empty list of check names")
    for c in checks:
        if c not in CHECKS:
            raise InputError("checks", f"unknown check {c!r}; known: {sorted(CHECKS)}")
    if "coarse_certificate" in checks and plan.mode != "coarse":
        raise InputError("checks", "coarse_certificate only applies to coarse plans")
    if "coherence_oracle" in checks and plan.system_dim > 8:
        raise InputError("checks", "coherence_oracle is limited to system dimension <= 8")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise InputError("seed", "must be an integer")
    scenario = Scenario(name, plan, dict(input_state), tuple(checks), seed)
    # surface input-state problems at load time, not mid-run
    build_input_state(scenario.input_state, plan, seed)
    return scenario


def scenario_to_json(s: Scenario) -> dict:
    return {
        "name": s.name,
        "plan": plan_to_json(s.plan),
        "input_state": dict(s.input_state),
        "checks": list(s.checks),
        "seed": s.seed,
    }


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(path, f"cannot read scenario: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(path, f"invalid JSON: {exc}") from None
    return scenario_from_json(data)


def run_scenario(scenario: Scenario | str) -> ResourceReport:
    """Run a scenario (object or path to its JSON file) and report.

    The BLOCKRES_SEED environment variable, when set, overrides the scenario
    seed so CI can sweep the same scenario file across seeds.
    """
    if isinstance(scenario, str):
        scenario = load_scenario(scenario)
    seed = env_seed()
    seed = scenario.seed if seed is None else seed
    start = time.perf_counter()
    run = _Run(scenario, seed)
    results = tuple(CHECKS[c](run) for c in scenario.checks)
    runtime = time.perf_counter() - start
    return ResourceReport(
        scenario=scenario.name,
        seed=seed,
        version=VERSION,
        runtime_s=runtime,
        passed=all(r.passed for r in results),
        checks=results,
        measures=run.stages,
        forward_transcript=run.forward,
        reverse_transcript=run.reverse,
    )


def demo_scenario(seed: int = 7, input_state: Mapping[str, Any] | None = None) -> Scenario:
    """The canonical cycle: three four-level parties, two rank-two blocks each.

    The system's block coherence is pushed into genuine three-party
    entanglement by the coarse conversion and pulled back by two measurement-
    feedback steps; every stage's certified measure must equal the input
    coherence.
    """
    plan = ConversionPlan.coarse(2, 2, 2)
    spec = {"type": "random"} if input_state is None else dict(input_state)
    checks = DEFAULT_CHECKS + ("coarse_certificate", "unitary_bi", "coherence_oracle")
    return Scenario("three-four-level-cycle", plan, spec, checks, seed)


def run_demo(seed: int | None = None, input_state: Mapping[str, Any] | None = None) -> ResourceReport:
    seed = 7 if seed is None else seed
    return run_scenario(demo_scenario(seed, input_state))


# --- self test ------------------------------------------------------------

def _random_measurement(
    dim_budget: int, rng: np.random.Generator, rotate: bool = True
) -> BlockMeasurement:
    # random block partition of a dimension in [2, dim_budget]
    d = int(rng.integers(2, dim_budget + 1))
    ranks = []
    left = d
    while left > 0:
        r = int(rng.integers(1, left + 1))
        ranks.append(r)
        left -= r
    if len(ranks) == 1:  # at least two blocks so coherence exists
        ranks = [1, d - 1] if d > 1 else [1]
    meas = BlockMeasurement.from_ranks(ranks)
    if rotate and rng.random() < 0.5:
        meas = meas.rotated(random_unitary(d, rng))
    return meas


def _random_structure(
    rng: np.random.Generator,
    parties: int | None = None,
    coarse_subsystems: int | None = None,
) -> MultipartiteBlockStructure:
    """Random structure; ``coarse_subsystems`` caps how many subsystems may
    have blocks of rank above one (the regime where the coherence upper bound
    is guaranteed to dominate every bipartition lower bound)."""
    m = int(rng.integers(2, 4)) if parties is None else parties
    labels = ["A"] + [f"B{k}" for k in range(1, m)]
    parts = []
    coarse_used = 0
    for label in labels:
        meas = _random_measurement(4, rng)
        if coarse_subsystems is not None and max(meas.ranks) > 1:
            if coarse_used >= coarse_subsystems:
                meas = BlockMeasurement.equal_blocks(int(rng.integers(2, 5)), 1)
                if rng.random() < 0.5:
                    meas = meas.rotated(random_unitary(meas.local_dim, rng))
            else:
                coarse_used += 1
        parts.append((label, meas))
    return MultipartiteBlockStructure(tuple(parts))


def _suite_core(trials: int, seed: int, tau_ent: float) -> list[CheckResult]:
    rng = child_rng(seed, 10)
    worst_inv = worst_rel = worst_dp = worst_prod = worst_mix = 0.0
    layout3 = SubsystemLayout((2, 3, 2), ("A", "B1", "B2"))
    for _ in range(trials):
        layout = SubsystemLayout.single("A", int(rng.integers(2, 7)))
        rho = random_density_matrix(layout, seed=rng)
        u = random_unitary(layout.dim, rng)
        rotated = apply_unitary(rho, UnitaryOperator(layout, u))
        worst_inv = max(worst_inv, abs(von_neumann_entropy(rotated) - von_neumann_entropy(rho)))
        sigma = random_density_matrix(layout, seed=rng)
        rel = quantum_relative_entropy(rho, sigma)
        worst_rel = max(worst_rel, -rel, abs(quantum_relative_entropy(rho, rho)))

        pair_rho = random_density_matrix(layout3, seed=rng)
        pair_sigma = random_density_matrix(layout3, seed=rng)
        big = quantum_relative_entropy(pair_rho, pair_sigma)
        for cut in enumerate_bipartitions(layout3):
            small = quantum_relative_entropy(
                partial_trace(pair_rho, cut.left), partial_trace(pair_sigma, cut.left)
            )
            worst_dp = max(worst_dp, small - big)

        a = random_density_matrix(SubsystemLayout.single("A", 3), seed=rng)
        b = random_density_matrix(SubsystemLayout.single("B1", 2), seed=rng)
        worst_prod = max(
            worst_prod, max_abs_diff(partial_trace(tensor_product([a, b]), ["A"]).matrix, a.matrix)
        )

        meas_channel = build_fine_measurement(3, "A")
        probe = random_density_matrix(SubsystemLayout.single("A", 3), seed=rng)
        branches = measure_and_collapse(probe, meas_channel, "all")
        mixed = sum(b.probability * b.state.matrix for b in branches if not b.degenerate)
        worst_mix = max(
            worst_mix,
            max_abs_diff(mixed, apply_channel(probe, meas_channel).matrix),
            abs(sum(b.probability for b in branches) - 1.0),
        )
    return [
        CheckResult("core.entropy_unitary_invariance", worst_inv < 1e-10, worst_inv, 1e-10),
        CheckResult("core.relative_entropy_nonnegative", worst_rel <= tau_ent, worst_rel, tau_ent),
        CheckResult("core.data_processing", worst_dp <= tau_ent, worst_dp, tau_ent),
        CheckResult("core.partial_trace_of_product", worst_prod < 1e-12, worst_prod, 1e-12),
        CheckResult("core.measurement_mixture", worst_mix < 1e-10, worst_mix, 1e-10),
    ]


def _suite_blocks(trials: int, seed: int, tau_ent: float) -> list[CheckResult]:
    rng = child_rng(seed, 11)
    worst_proj = worst_idem = worst_seq = worst_purity = worst_bi = worst_chan = 0.0
    for t in range(trials):
        structure = _random_structure(rng)
        layout = structure.layout
        rho = random_density_matrix(layout, seed=rng)
        deph = block_dephase(rho, structure)
        worst_idem = max(
            worst_idem,
            max_abs_diff(block_dephase(deph, structure).matrix, deph.matrix),
            abs(deph.matrix.trace().real - 1.0),
        )
        joint = sum(p @ rho.matrix @ p for p in structure.joint_projectors())
        worst_seq = max(worst_seq, max_abs_diff(deph.matrix, joint))
        worst_purity = max(worst_purity, purity(deph) - purity(rho))

        for _, meas in structure.parts:
            total = sum(meas.projectors())
            worst_proj = max(worst_proj, max_abs_diff(total, np.eye(meas.local_dim)))
            for i in range(meas.block_count):
                for j in range(i + 1, meas.block_count):
                    worst_proj = max(
                        worst_proj, float(np.max(np.abs(meas.projector(i) @ meas.projector(j))))
                    )

        sigma = random_block_incoherent_state(structure, seed=rng)
        worst_bi = max(worst_bi, block_off_diagonal_residual(sigma, structure))

        channel = random_block_incoherent_channel(structure, seed=child_rng_int(seed, 11, t))
        cert = verify_block_incoherent_channel(channel, structure, trials=3, seed=child_rng_int(seed, 12, t))
        worst_chan = max(worst_chan, cert.worst_residual, channel.completeness_residual)
    return [
        CheckResult("blocks.projector_family", worst_proj < 1e-12, worst_proj, 1e-12),
        CheckResult("blocks.dephase_idempotent_trace", worst_idem < 1e-12, worst_idem, 1e-12),
        CheckResult("blocks.dephase_matches_joint_projectors", worst_seq < 1e-12, worst_seq, 1e-12),
        CheckResult("blocks.dephase_purity_nonincreasing", worst_purity <= 1e-12, worst_purity, 1e-12),
        CheckResult("blocks.sampler_states_block_diagonal", worst_bi < 1e-9, worst_bi, 1e-9),
        CheckResult("blocks.random_channels_certify", worst_chan < 1e-9, worst_chan, 1e-9),
    ]


def _suite_measures(trials: int, seed: int, tau_ent: float) -> list[CheckResult]:
    rng = child_rng(seed, 12)
    worst_nonneg = worst_zero = worst_mono = worst_t1 = worst_sand = 0.0
    for t in range(trials):
        structure = _random_structure(rng)
        rho = random_density_matrix(structure.layout, seed=rng)
        c = relative_entropy_block_coherence(rho, structure)
        worst_nonneg = max(worst_nonneg, -c)
        sigma = random_block_incoherent_state(structure, seed=rng)
        worst_zero = max(worst_zero, relative_entropy_block_coherence(sigma, structure))

        channel = random_block_incoherent_channel(structure, seed=child_rng_int(seed, 13, t))
        out = apply_channel(rho, channel)
        worst_mono = max(
            worst_mono,
            relative_entropy_block_coherence(out, structure) - c,
        )

        # bounded regime: at most one subsystem with blocks of rank above one
        guarded = _random_structure(rng, coarse_subsystems=1)
        rank = int(rng.integers(1, guarded.layout.dim + 1))
        probe = random_density_matrix(guarded.layout, rank, rng)
        s = entanglement_sandwich(probe, guarded)
        worst_sand = max(worst_sand, s.lower_bits - s.upper_bits)

        # system coherence bounds the entanglement any BI channel can create
        sys_meas = _random_measurement(4, rng)
        anc_structure = _random_structure(rng, parties=2).restrict(["B1"])
        parts = (("A", sys_meas),) + anc_structure.parts
        full = MultipartiteBlockStructure(parts)
        rho_a = random_density_matrix(SubsystemLayout.single("A", sys_meas.local_dim), seed=rng)
        anc = random_block_incoherent_state(anc_structure, seed=rng)
        joint = tensor_product([rho_a, anc])
        chan = random_block_incoherent_channel(full, seed=child_rng_int(seed, 14, t))
        moved = apply_channel(joint, chan)
        budget = relative_entropy_block_coherence(rho_a, sys_meas)
        for cut in enumerate_bipartitions(full.layout):
            worst_t1 = max(worst_t1, entanglement_lower_bound(moved, cut) - budget)
    return [
        CheckResult("measures.coherence_nonnegative", worst_nonneg <= 0.0, worst_nonneg, 0.0),
        CheckResult("measures.coherence_zero_on_bi", worst_zero <= tau_ent, worst_zero, tau_ent),
        CheckResult("measures.coherence_monotone_under_bi", worst_mono <= tau_ent, worst_mono, tau_ent),
        CheckResult("measures.bi_channels_bounded_by_coherence", worst_t1 <= tau_ent, worst_t1, tau_ent),
        CheckResult("measures.sandwich_consistent", worst_sand <= tau_ent, worst_sand, tau_ent),
    ]


def _self_test_plans(rng: np.random.Generator, count: int) -> list[ConversionPlan]:
    plans = []
    for _ in range(count):
        if rng.random() < 0.5:
            d = int(rng.integers(2, 4))
            ranks = [int(rng.integers(1, 3)) for _ in range(d)]
            plans.append(ConversionPlan.fine(ranks, int(rng.integers(1, 4))))
        else:
            d = int(rng.integers(2, 4))
            r = 2
            plans.append(ConversionPlan.coarse(d, r, int(rng.integers(1, 3))))
    return plans


def _suite_conversion(trials: int, seed: int, tau_ent: float) -> list[CheckResult]:
    rng = child_rng(seed, 13)
    worst_emb = worst_red = worst_cert = worst_r1 = 0.0
    for plan in _self_test_plans(rng, max(2, trials // 4)):
        rho = random_density_matrix(
            SubsystemLayout.single("A", plan.system_dim),
            int(rng.integers(1, plan.system_dim + 1)),
            rng,
        )
        out, fwd = convert_forward(rho, plan)
        worst_emb = max(worst_emb, verify_embedding(rho, out, plan).max_residual)
        worst_red = max(
            worst_red,
            max_abs_diff(
                partial_trace(out, ["A"]).matrix,
                block_dephase(rho, plan.system_measurement).matrix,
            ),
        )
        s = fwd.steps[0].sandwich
        target = relative_entropy_block_coherence(rho, plan.system_measurement)
        gap = (
            math.inf
            if not s.certified
            else abs(s.certified_value_bits - target)
        )
        worst_cert = max(worst_cert, gap)
    plan = ConversionPlan.coarse(2, 1, 2)
    worst_r1 = max_abs_diff(
        build_coarse_unitary(plan).matrix,
        build_fine_unitary(ConversionPlan.fine([1, 1], 2)).matrix,
    )
    cert = certify_coarse_unitary(ConversionPlan.coarse(2, 2, 1), trials=5, seed=child_rng_int(seed, 15))
    return [
        CheckResult("conversion.embedding_and_entropies", worst_emb < 1e-10, worst_emb, 1e-10),
        CheckResult("conversion.ancilla_reduction", worst_red < 1e-12, worst_red, 1e-12),
        CheckResult("conversion.sandwich_certifies_input_coherence", worst_cert < 1e-8, worst_cert, 1e-8),
        CheckResult("conversion.coarse_rank_one_is_fine", worst_r1 < 1e-12, worst_r1, 1e-12),
        CheckResult(
            "conversion.coarse_certificate",
            cert.passed(),
            max(cert.unitarity_residual, cert.permutation_residual, cert.preservation_residual),
            1e-10,
        ),
    ]


def _suite_reverse(trials: int, seed: int, tau_ent: float) -> list[CheckResult]:
    rng = child_rng(seed, 14)
    worst_round = worst_branch = worst_mono = worst_comp = 0.0
    policies = ["all", "sample", "fixed"]
    for i, plan in enumerate(_self_test_plans(rng, max(2, trials // 4))):
        rho = random_density_matrix(
            SubsystemLayout.single("A", plan.system_dim),
            int(rng.integers(1, plan.system_dim + 1)),
            rng,
        )
        out, _ = convert_forward(rho, plan)
        policy = policies[i % len(policies)]
        kwargs: dict[str, Any] = {}
        if policy == "sample":
            kwargs["seed"] = child_rng_int(seed, 16, i)
        elif policy == "fixed":
            kwargs["outcomes"] = [
                int(rng.integers(0, plan.block_count)) for _ in range(plan.ancilla_count)
            ]
        transcript = run_reverse_protocol(out, plan, policy=policy, **kwargs)
        worst_round = max(worst_round, max_abs_diff(transcript.final_state.matrix, rho.matrix))
        if policy == "all":
            worst_branch = max(
                worst_branch, max(s.branch_distance for s in transcript.steps)
            )
            trail = [relative_entropy_block_coherence(out, plan.structure)]
            trail += list(transcript.c_r_trail)
            worst_mono = max(
                worst_mono,
                max(trail[k + 1] - trail[k] for k in range(len(trail) - 1)),
            )
    for d in range(2, 6):
        worst_comp = max(worst_comp, build_fine_measurement(d).completeness_residual)
    worst_comp = max(
        worst_comp,
        build_coarse_measurement(BlockMeasurement.equal_blocks(3, 2)).completeness_residual,
    )
    return [
        CheckResult("reverse.roundtrip_identity", worst_round < 1e-10, worst_round, 1e-10),
        CheckResult("reverse.outcome_independence", worst_branch < 1e-10, worst_branch, 1e-10),
        CheckResult("reverse.coherence_monotone", worst_mono <= tau_ent, max(worst_mono, 0.0), tau_ent),
        CheckResult("reverse.measurements_complete", worst_comp < 1e-12, worst_comp, 1e-12),
    ]


@dataclass(frozen=True, eq=False)
class SelfTestReport:
    trials: int
    seed: int
    version: str
    runtime_s: float
    passed: bool
    checks: tuple[CheckResult, ...]

    def lines(self) -> list[str]:
        out = [f"self test ({self.trials} trials, seed {self.seed}, {self.runtime_s:.2f}s)"]
        out += [c.line() for c in self.checks]
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


def self_test(trials: int = 100, seed: int = 0, tau_ent: float = TAU_ENT) -> SelfTestReport:
    """Drive every module's numerical invariants with seeded random sweeps.

    ``tau_ent`` is exposed so residual accounting can be demonstrated: setting
    it artificially low reports the expected failures instead of hiding them.
    """
    start = time.perf_counter()
    results: list[CheckResult] = []
    results += _suite_core(trials, seed, tau_ent)
    results += _suite_blocks(max(2, trials // 5), seed, tau_ent)
    results += _suite_measures(max(2, trials // 5), seed, tau_ent)
    results += _suite_conversion(trials, seed, tau_ent)
    results += _suite_reverse(trials, seed, tau_ent)
    runtime = time.perf_counter() - start
    return SelfTestReport(
        trials=trials,
        seed=seed,
        version=VERSION,
        runtime_s=runtime,
        passed=all(r.passed for r in results),
        checks=tuple(results),
    )


# --- report serialization --------------------------------------------------

def _json_float(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def check_to_json(c: CheckResult) -> dict:
    # numpy scalars sneak in via comparisons; keep the payload strict JSON
    return {
        "check": c.check,
        "passed": bool(c.passed),
        "residual": _json_float(float(c.residual)),
        "threshold": float(c.threshold),
        "detail": c.detail,
    }


def report_to_json(report: ResourceReport | SelfTestReport) -> dict:
    if isinstance(report, SelfTestReport):
        return {
            "kind": "selftest",
            "trials": report.trials,
            "seed": report.seed,
            "version": report.version,
            "runtime_s": report.runtime_s,
            "passed": bool(report.passed),
            "checks": [check_to_json(c) for c in report.checks],
        }
    return {
        "kind": "scenario",
        "scenario": report.scenario,
        "seed": report.seed,
        "version": report.version,
        "runtime_s": report.runtime_s,
        "passed": bool(report.passed),
        "checks": [check_to_json(c) for c in report.checks],
        "measures": [
            {
                "stage": m.stage,
                "c_r_bits": m.c_r_bits,
                "sandwich": None if m.sandwich is None else sandwich_to_json(m.sandwich),
            }
            for m in report.measures
        ],
        "transcripts": {
            "forward": None
            if report.forward_transcript is None
            else transcript_to_json(report.forward_transcript),
            "reverse": None
            if report.reverse_transcript is None
            else transcript_to_json(report.reverse_transcript),
        },
    }


def report_to_csv(report_json: Mapping[str, Any]) -> str:
    """Flatten a scenario report's measure table to stage,measure,value_bits rows."""
    rows = ["stage,measure,value_bits"]
    for m in report_json.get("measures", []):
        stage = m["stage"]
        rows.append(f"{stage},c_r,{m['c_r_bits']:.12f}")
        s = m.get("sandwich")
        if s is not None:
            rows.append(f"{stage},e_lower,{s['lower_bits']:.12f}")
            rows.append(f"{stage},e_upper,{s['upper_bits']:.12f}")
            value = s.get("value_bits")
            rows.append(f"{stage},e_certified,{'' if value is None else f'{value:.12f}'}")
    return "\n".join(rows) + "\n"
