"""JSON codecs for the wire formats: matrices, structures, plans, transcripts.

Complex matrices travel as row-major nested arrays of [re, im] pairs.  JSON is
the sole wire format; CSV export exists only as a flattening of report measure
tables (see the harness module).
"""

from __future__ import annotations

from typing import Any, Mapping, Sequence

import numpy as np

from .blocks import BlockMeasurement, MultipartiteBlockStructure
from .conversion import ConversionPlan
from .core import matrix_from_pairs, matrix_to_pairs
from .measures import EntanglementSandwich
from .transcript import ProtocolStep, ProtocolTranscript


class InputError(ValueError):
    """Malformed scenario/report input; reported with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise InputError(path, message)


def vector_to_pairs(v: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def vector_from_pairs(data: Any, path: str) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    _require(arr.ndim == 2 and arr.shape[1] == 2, path, "expected a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def matrix_from_json(data: Any, path: str) -> np.ndarray:
    try:
        return matrix_from_pairs(data)
    except (ValueError, TypeError) as exc:
        raise InputError(path, str(exc)) from None


def measurement_to_json(meas: BlockMeasurement) -> list:
    return [[vector_to_pairs(col) for col in block.T] for block in meas.blocks]


def measurement_from_json(data: Any, path: str) -> BlockMeasurement:
    if isinstance(data, Mapping):
        _require(
            set(data) == {"equal_blocks", "rank"},
            path,
            "measurement shorthand must have exactly the keys 'equal_blocks' and 'rank'",
        )
        try:
            return BlockMeasurement.equal_blocks(int(data["equal_blocks"]), int(data["rank"]))
        except (ValueError, TypeError) as exc:
            raise InputError(path, str(exc)) from None
    _require(isinstance(data, Sequence) and not isinstance(data, str), path,
             "measurement must be a block list or an equal_blocks shorthand")
    blocks = []
    for bi, block in enumerate(data):
        _require(isinstance(block, Sequence) and len(block) > 0,
                 f"{path}[{bi}]", "each block must be a non-empty list of basis vectors")
        cols = [vector_from_pairs(vec, f"{path}[{bi}][{vi}]") for vi, vec in enumerate(block)]
        blocks.append(np.stack(cols, axis=1))
    dims = {b.shape[0] for b in blocks}
    _require(len(dims) == 1, path, "all basis vectors must have one common dimension")
    try:
        return BlockMeasurement(dims.pop(), tuple(blocks))
    except ValueError as exc:
        raise InputError(path, str(exc)) from None


def structure_to_json(structure: MultipartiteBlockStructure) -> dict:
    return {label: measurement_to_json(meas) for label, meas in structure.parts}


def structure_from_json(data: Any, path: str = "structure") -> MultipartiteBlockStructure:
    _require(isinstance(data, Mapping) and len(data) > 0, path,
             "structure must be a non-empty label -> measurement object")
    parts = tuple(
        (str(label), measurement_from_json(meas, f"{path}.{label}"))
        for label, meas in data.items()
    )
    return MultipartiteBlockStructure(parts)


def plan_to_json(plan: ConversionPlan) -> dict:
    out: dict[str, Any] = {
        "d": plan.block_count,
        "n": plan.ancilla_count,
        "mode": plan.mode,
        "ranks_A": list(plan.system_measurement.ranks),
    }
    if plan.mode == "coarse":
        out["r"] = plan.rank
    return out


def plan_from_json(data: Any, path: str = "plan") -> ConversionPlan:
    _require(isinstance(data, Mapping), path, "plan must be an object")
    for key in ("d", "n", "mode"):
        _require(key in data, path, f"missing required key {key!r}")
    try:
        d = int(data["d"])
        n = int(data["n"])
    except (TypeError, ValueError):
        raise InputError(path, "'d' and 'n' must be integers") from None
    mode = data["mode"]
    _require(mode in ("fine", "coarse"), f"{path}.mode", "mode must be 'fine' or 'coarse'")
    _require(d >= 2, f"{path}.d", f"need at least two blocks, got {d}")
    _require(n >= 1, f"{path}.n", f"need at least one ancilla, got {n}")
    ranks = data.get("ranks_A")
    if mode == "fine":
        _require("r" not in data, f"{path}.r", "rank only applies to coarse mode")
        ranks = [1] * d if ranks is None else [int(x) for x in ranks]
        _require(len(ranks) == d, f"{path}.ranks_A", f"need exactly {d} block ranks")
        try:
            return ConversionPlan.fine(ranks, n)
        except ValueError as exc:
            raise InputError(path, str(exc)) from None
    _require("r" in data, f"{path}.r", "coarse mode needs the common block rank 'r'")
    try:
        r = int(data["r"])
    except (TypeError, ValueError):
        raise InputError(f"{path}.r", "'r' must be an integer") from None
    if ranks is not None:
        _require([int(x) for x in ranks] == [r] * d, f"{path}.ranks_A",
                 f"coarse mode needs every block at rank {r}")
    try:
        return ConversionPlan.coarse(d, r, n)
    except ValueError as exc:
        raise InputError(path, str(exc)) from None


def sandwich_to_json(s: EntanglementSandwich) -> dict:
    return {
        "lower_bits": s.lower_bits,
        "upper_bits": s.upper_bits,
        "certified": s.certified,
        "value_bits": s.certified_value_bits,
        "per_bipartition": {str(cut): v for cut, v in s.per_bipartition_lower},
    }


def step_to_json(step: ProtocolStep) -> dict:
    return {
        "subsystem": step.subsystem,
        "channel_id": step.channel_id,
        "outcome": step.outcome,
        "probability": step.probability,
        "c_r_bits": step.c_r_bits,
        "sandwich": None if step.sandwich is None else sandwich_to_json(step.sandwich),
        "state_digest": step.state_digest,
        "branch_probabilities": list(step.branch_probabilities),
        "branch_distance": step.branch_distance,
        "degenerate_outcomes": list(step.degenerate_outcomes),
    }


def transcript_to_json(t: ProtocolTranscript) -> dict:
    from .transcript import state_digest

    return {
        "initial_state_digest": state_digest(t.initial_state),
        "final_state_digest": state_digest(t.final_state),
        "steps": [step_to_json(s) for s in t.steps],
        "notes": dict(t.notes),
    }
