"""Brute-force ground-truth planner for synthetic tasks.

Breadth-first search over builtin tool sequences with a small argument
grid per tool.  Exhaustive within its depth bound, so a returned plan
is a shortest solution and None is a certificate that no sequence of
grid arguments up to that length satisfies the task.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

from PIL import Image

from ..errors import SearchBudgetExceededError
from ..registry import Registry, apply_builtin, default_registry
from .tasks import CROPPED, WATERMARK_ALPHA, SyntheticTask, watermark_asset

DEFAULT_NODE_CAP = 20000


@dataclass
class OracleStep:
    """One searched move: a builtin name plus its non-path arguments."""

    tool: str
    args: dict = field(default_factory=dict)


def _grid(task: SyntheticTask) -> list[OracleStep]:
    """The argument grid: small enough to exhaust, rich enough to solve.

    Crop boxes are unbounded in principle, so the grid only offers the
    regions the task itself names.
    """
    moves = [
        OracleStep("Resize", {"longest_side": 256}),
        OracleStep("Resize", {"longest_side": 512}),
        OracleStep("RGB2Gray"),
        OracleStep("FlipHorizontal"),
        OracleStep("RotateClockwise"),
        OracleStep("RotateCounterClockwise"),
        OracleStep("ImageExpand", {"border_px": 10, "color": "white"}),
        OracleStep("ImageExpand", {"border_px": 50, "color": "white"}),
        OracleStep("AddWatermark", {"alpha": WATERMARK_ALPHA}),
    ]
    for pred in task.predicates:
        if pred.kind == CROPPED:
            left, top, right, bottom = pred.value
            moves.append(
                OracleStep(
                    "Crop",
                    {"left": left, "top": top, "right": right, "bottom": bottom},
                )
            )
    return moves


def apply_step(registry: Registry, img: Image.Image, step: OracleStep) -> Image.Image:
    images = [img]
    if step.tool == "AddWatermark":
        with Image.open(watermark_asset()) as mark:
            images.append(mark.copy())
    return apply_builtin(registry, step.tool, images, step.args)


def _fingerprint(img: Image.Image) -> str:
    head = f"{img.mode}:{img.size}".encode()
    return hashlib.sha256(head + img.tobytes()).hexdigest()


def oracle_solve(
    task: SyntheticTask,
    registry: Registry | None = None,
    max_len: int = 4,
    node_cap: int = DEFAULT_NODE_CAP,
) -> list[OracleStep] | None:
    """A shortest satisfying tool sequence, or None within the bound.

    Raises SearchBudgetExceededError when expansion outgrows node_cap,
    so a truncated search is never mistaken for a proof of
    unsatisfiability.
    """
    registry = registry or default_registry()
    if task.solved(task.image):
        return []
    moves = _grid(task)
    start = task.image
    frontier = deque([(start, [])])
    seen = {_fingerprint(start)}
    expanded = 0
    while frontier:
        img, steps = frontier.popleft()
        if len(steps) >= max_len:
            continue
        for move in moves:
            expanded += 1
            if expanded > node_cap:
                raise SearchBudgetExceededError(
                    f"oracle search exceeded {node_cap} nodes at depth {len(steps) + 1}"
                )
            try:
                out = apply_step(registry, img, move)
            except Exception:
                continue  # args out of range for this image; skip the move
            mark = _fingerprint(out)
            if mark in seen:
                continue
            seen.add(mark)
            path = steps + [move]
            if task.solved(out):
                return path
            frontier.append((out, path))
    return None
