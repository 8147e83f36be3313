"""JSON-lines readers and writers for scenes and prediction files.

Numeric fields are serialized with Python's shortest round-trip float
representation, so write followed by read reproduces every float bit for
bit.  Readers validate each line through the domain-type constructors and
report failures with the 1-based line number.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .types import (
    AgentState,
    AgentType,
    JointMode,
    JointPredictionSet,
    ModePrediction,
    PredictionSet,
    Scene,
    Trajectory,
)


class DataFormatError(ValueError):
    """A line of an input file failed to parse or violated an invariant."""


def _dump_line(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _points(arr) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in arr]


def _iter_json_lines(path):
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path.name} line {lineno}: invalid JSON ({exc.msg})") from exc


def _wrap_line_errors(path, lineno, fn):
    try:
        return fn()
    except DataFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        detail = str(exc) or type(exc).__name__
        if isinstance(exc, KeyError):
            detail = f"missing field {exc.args[0]!r}"
        raise DataFormatError(f"{Path(path).name} line {lineno}: {detail}") from exc


# ---------------------------------------------------------------------------
# Scenes


def _scene_from_record(rec: dict) -> Scene:
    agents = []
    for a in rec["agents"]:
        agents.append(
            AgentState(
                id=str(a["id"]),
                type=AgentType(a["type"]),
                position0=(a["x0"], a["y0"]),
                heading0=a["heading0"],
                v0=a["v0"],
                radius=a["radius"],
                history=a["history"],
                interesting=bool(a.get("interesting", False)),
            )
        )
    ground_truth = {
        str(agent_id): Trajectory(points) for agent_id, points in rec["ground_truth"].items()
    }
    pair = rec.get("interacting_pair")
    if pair is not None:
        pair = (str(pair[0]), str(pair[1]))
    return Scene(
        scene_id=str(rec["scene_id"]),
        agents=tuple(agents),
        ground_truth=ground_truth,
        interacting_pair=pair,
    )


def scene_to_record(scene: Scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "agents": [
            {
                "id": a.id,
                "type": a.type.value,
                "x0": a.position0[0],
                "y0": a.position0[1],
                "heading0": a.heading0,
                "v0": a.v0,
                "radius": a.radius,
                "history": _points(a.history),
                "interesting": a.interesting,
            }
            for a in scene.agents
        ],
        "ground_truth": {k: _points(t.points) for k, t in scene.ground_truth.items()},
        "interacting_pair": list(scene.interacting_pair) if scene.interacting_pair else None,
    }


def read_scenes(path) -> list[Scene]:
    return [
        _wrap_line_errors(path, lineno, lambda rec=rec: _scene_from_record(rec))
        for lineno, rec in _iter_json_lines(path)
    ]


def write_scenes(scenes: Iterable[Scene], path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for scene in scenes:
            handle.write(_dump_line(scene_to_record(scene)) + "\n")


# ---------------------------------------------------------------------------
# Marginal predictions


def _prediction_from_record(rec: dict) -> PredictionSet:
    modes = []
    for m in rec["modes"]:
        cov = m.get("cov")
        modes.append(
            ModePrediction(mean=Trajectory(m["traj"]), cov_params=cov, prob=m["prob"])
        )
    return PredictionSet(
        scene_id=str(rec["scene_id"]), agent_id=str(rec["agent_id"]), modes=tuple(modes)
    )


def prediction_to_record(pred: PredictionSet) -> dict:
    return {
        "scene_id": pred.scene_id,
        "agent_id": pred.agent_id,
        "modes": [
            {
                "prob": m.prob,
                "traj": _points(m.mean.points),
                "cov": None
                if m.cov_params is None
                else [[float(a), float(b), float(c)] for a, b, c in m.cov_params],
            }
            for m in pred.modes
        ],
    }


def read_predictions(path) -> list[PredictionSet]:
    return [
        _wrap_line_errors(path, lineno, lambda rec=rec: _prediction_from_record(rec))
        for lineno, rec in _iter_json_lines(path)
    ]


def write_predictions(preds: Iterable[PredictionSet], path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for pred in preds:
            handle.write(_dump_line(prediction_to_record(pred)) + "\n")


# ---------------------------------------------------------------------------
# Joint predictions


def _joint_from_record(rec: dict) -> JointPredictionSet:
    modes = tuple(
        JointMode(traj_a=Trajectory(m["traj_a"]), traj_b=Trajectory(m["traj_b"]), prob=m["prob"])
        for m in rec["modes"]
    )
    return JointPredictionSet(
        scene_id=str(rec["scene_id"]),
        pair=(str(rec["pair"][0]), str(rec["pair"][1])),
        modes=modes,
        degenerate=bool(rec.get("degenerate", False)),
    )


def joint_to_record(joint: JointPredictionSet) -> dict:
    rec = {
        "scene_id": joint.scene_id,
        "pair": list(joint.pair),
        "modes": [
            {"prob": m.prob, "traj_a": _points(m.traj_a.points), "traj_b": _points(m.traj_b.points)}
            for m in joint.modes
        ],
    }
    if joint.degenerate:
        rec["degenerate"] = True
    return rec


def read_joint_predictions(path) -> list[JointPredictionSet]:
    return [
        _wrap_line_errors(path, lineno, lambda rec=rec: _joint_from_record(rec))
        for lineno, rec in _iter_json_lines(path)
    ]


def write_joint_predictions(joints: Iterable[JointPredictionSet], path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for joint in joints:
            handle.write(_dump_line(joint_to_record(joint)) + "\n")
