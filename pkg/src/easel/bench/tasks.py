"""Synthetic editing tasks whose goals are machine-checkable.

Each task pairs a small procedural image with a set of goal predicates
(resize, grayscale, flip, rotate, border, crop, watermark).  Every
predicate is decidable by inspecting the output pixels against the
task's own input, so sessions can be scored without any ML model and
without trusting the engine's reviewer.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .. import builtins as ops
from ..registry import default_assets_dir

LONGEST_SIDE = "longest_side"
GRAYSCALE = "grayscale"
FLIPPED_H = "flipped_h"
ROTATED_CW = "rotated_cw_quarter_turns"
WATERMARK = "has_watermark_corner"
BORDER = "border_px"
CROPPED = "cropped_to_region"

# Canonical application order; also the order subtasks appear in plans.
_KIND_ORDER = (CROPPED, FLIPPED_H, ROTATED_CW, BORDER, GRAYSCALE, LONGEST_SIDE, WATERMARK)

# Pairs that cannot both hold on one output image: a watermark corner is
# colored (breaks grayscale) and overwrites part of a border frame, and
# a border added after a resize changes the longest side again.
_EXCLUSIONS = {
    frozenset((GRAYSCALE, WATERMARK)),
    frozenset((BORDER, WATERMARK)),
    frozenset((BORDER, LONGEST_SIDE)),
}

_GEOMETRY_KINDS = (CROPPED, FLIPPED_H, ROTATED_CW)

WATERMARK_ALPHA = 0.8
# Mean absolute luminance tolerance for the reference comparison; exact
# canonical execution diffs are zero, commuting orders differ by rounding.
_GEOMETRY_TOLERANCE = 3.0


def watermark_asset() -> str:
    return str(default_assets_dir() / "watermark.png")


@dataclass(frozen=True)
class Predicate:
    """One checkable goal clause; value meaning depends on kind."""

    kind: str
    value: object = None

    def cost(self) -> int:
        """Builtin steps needed: two quarter turns cannot be one tool call."""
        if self.kind == ROTATED_CW and self.value == 2:
            return 2
        return 1


def _question(pred: Predicate) -> str:
    if pred.kind == LONGEST_SIDE:
        return f"Is the longest side of the image exactly {pred.value} pixels?"
    if pred.kind == GRAYSCALE:
        return "Is the image fully grayscale?"
    if pred.kind == FLIPPED_H:
        return "Is the image flipped horizontally?"
    if pred.kind == ROTATED_CW:
        if pred.value == 3:
            return "Is the image rotated counterclockwise by 90 degrees?"
        return f"Is the image rotated clockwise by {90 * pred.value} degrees?"
    if pred.kind == WATERMARK:
        return "Is there a watermark in the bottom-right corner?"
    if pred.kind == BORDER:
        return f"Does the image have a white border of {pred.value} pixels?"
    if pred.kind == CROPPED:
        l, t, r, b = pred.value
        return f"Is the image cropped to the region ({l}, {t}, {r}, {b})?"
    raise ValueError(f"unknown predicate kind: {pred.kind}")


def _goal_clause(pred: Predicate) -> str:
    if pred.kind == LONGEST_SIDE:
        return f"resize it so the longest side is {pred.value} pixels"
    if pred.kind == GRAYSCALE:
        return "convert it to grayscale"
    if pred.kind == FLIPPED_H:
        return "flip it horizontally"
    if pred.kind == ROTATED_CW:
        if pred.value == 3:
            return "rotate it counterclockwise by 90 degrees"
        return f"rotate it clockwise by {90 * pred.value} degrees"
    if pred.kind == WATERMARK:
        return "blend the standard watermark into the bottom-right corner"
    if pred.kind == BORDER:
        return f"add a white border of {pred.value} pixels"
    if pred.kind == CROPPED:
        l, t, r, b = pred.value
        return f"crop it to the region ({l}, {t}, {r}, {b})"
    raise ValueError(f"unknown predicate kind: {pred.kind}")


def _steps(pred: Predicate) -> list[tuple[str, str]]:
    """(goal line, tool name) pairs realizing one predicate canonically."""
    if pred.kind == LONGEST_SIDE:
        return [
            (
                f"Resize the image so its longest side is {pred.value} pixels using Resize",
                "Resize",
            )
        ]
    if pred.kind == GRAYSCALE:
        return [("Convert the image to grayscale using RGB2Gray", "RGB2Gray")]
    if pred.kind == FLIPPED_H:
        return [("Flip the image horizontally using FlipHorizontal", "FlipHorizontal")]
    if pred.kind == ROTATED_CW:
        if pred.value == 1:
            return [
                (
                    "Rotate the image clockwise by 90 degrees using RotateClockwise",
                    "RotateClockwise",
                )
            ]
        if pred.value == 2:
            return [
                (
                    "Rotate the image clockwise by 90 degrees using RotateClockwise",
                    "RotateClockwise",
                ),
                (
                    "Rotate the image clockwise by another 90 degrees using RotateClockwise",
                    "RotateClockwise",
                ),
            ]
        return [
            (
                "Rotate the image counterclockwise by 90 degrees using RotateCounterClockwise",
                "RotateCounterClockwise",
            )
        ]
    if pred.kind == WATERMARK:
        return [
            (
                "Blend the standard watermark into the bottom-right corner using AddWatermark",
                "AddWatermark",
            )
        ]
    if pred.kind == BORDER:
        return [
            (
                f"Add a white border of {pred.value} pixels on every side using ImageExpand",
                "ImageExpand",
            )
        ]
    if pred.kind == CROPPED:
        l, t, r, b = pred.value
        return [
            (
                f"Crop the image to the region ({l}, {t}, {r}, {b}) using Crop",
                "Crop",
            )
        ]
    raise ValueError(f"unknown predicate kind: {pred.kind}")


def apply_predicate(img: Image.Image, pred: Predicate) -> Image.Image:
    """Apply one predicate's canonical edit."""
    if pred.kind == LONGEST_SIDE:
        return ops.resize_longest(img, pred.value)
    if pred.kind == GRAYSCALE:
        return ops.to_grayscale(img)
    if pred.kind == FLIPPED_H:
        return ops.flip_horizontal(img)
    if pred.kind == ROTATED_CW:
        if pred.value == 3:
            return ops.rotate_counterclockwise(img)
        out = img
        for _ in range(pred.value):
            out = ops.rotate_clockwise(out)
        return out
    if pred.kind == WATERMARK:
        with Image.open(watermark_asset()) as mark:
            return ops.add_watermark(img, mark.copy(), WATERMARK_ALPHA)
    if pred.kind == BORDER:
        return ops.expand_border(img, pred.value, "white")
    if pred.kind == CROPPED:
        l, t, r, b = pred.value
        return ops.crop(img, l, t, r, b)
    raise ValueError(f"unknown predicate kind: {pred.kind}")


def apply_predicates(img: Image.Image, predicates: list[Predicate]) -> Image.Image:
    out = img
    for pred in sorted(predicates, key=lambda p: _KIND_ORDER.index(p.kind)):
        out = apply_predicate(out, pred)
    return out


# --- pixel-level checks ---------------------------------------------------------


def _is_gray(img: Image.Image) -> bool:
    if img.mode == "L":
        return True
    arr = np.asarray(img.convert("RGB"))
    return bool((arr[..., 0] == arr[..., 1]).all() and (arr[..., 1] == arr[..., 2]).all())


def _has_watermark_corner(img: Image.Image, patch: int = 16) -> bool:
    arr = np.asarray(img.convert("RGB"))
    if arr.shape[0] < patch or arr.shape[1] < patch:
        return False
    corner = arr[-patch:, -patch:]
    magenta = (corner[..., 0] > 200) & (corner[..., 1] < 60) & (corner[..., 2] > 200)
    return bool(magenta.mean() > 0.5)


def _has_white_frame(img: Image.Image, width: int) -> bool:
    arr = np.asarray(img.convert("L")).astype(np.int64)
    h, w = arr.shape
    if h <= 2 * width or w <= 2 * width:
        return False
    frame = np.concatenate(
        [
            arr[:width, :].ravel(),
            arr[-width:, :].ravel(),
            arr[:, :width].ravel(),
            arr[:, -width:].ravel(),
        ]
    )
    return bool((frame >= 250).all())


def _luminance(img: Image.Image) -> np.ndarray:
    return np.asarray(img.convert("L")).astype(np.float64)


@dataclass
class SyntheticTask:
    """One benchmark task: an input image plus checkable goal predicates."""

    index: int
    image: Image.Image
    predicates: list[Predicate]
    goal: str
    caption: str = "a small synthetic test image"
    _reference: Image.Image | None = field(default=None, repr=False, compare=False)

    def cost(self) -> int:
        return sum(p.cost() for p in self.predicates)

    def questions(self) -> list[str]:
        return [_question(p) for p in self.predicates]

    def question_for(self, pred: Predicate) -> str:
        return _question(pred)

    def subtasks(self) -> list[tuple[str, str]]:
        """Canonical plan: (goal line, tool) per step, in application order."""
        ordered = sorted(self.predicates, key=lambda p: _KIND_ORDER.index(p.kind))
        out = []
        for pred in ordered:
            out.extend(_steps(pred))
        return out

    def reference(self) -> Image.Image:
        """The input with every predicate applied in canonical order."""
        if self._reference is None:
            self._reference = apply_predicates(self.image, self.predicates)
        return self._reference

    def check(self, img: Image.Image) -> dict[str, bool]:
        """Per-predicate verdicts for a candidate output image.

        Size, grayscale, border, and watermark checks are structural.
        Crop, flip, and rotation change where pixels sit, so they are
        checked jointly against the canonical reference image.
        """
        results: dict[str, bool] = {}
        geometry = None
        for pred in self.predicates:
            if pred.kind == LONGEST_SIDE:
                results[pred.kind] = max(img.size) == pred.value
            elif pred.kind == GRAYSCALE:
                results[pred.kind] = _is_gray(img)
            elif pred.kind == WATERMARK:
                results[pred.kind] = _has_watermark_corner(img)
            elif pred.kind == BORDER:
                results[pred.kind] = _has_white_frame(img, pred.value)
            else:
                if geometry is None:
                    geometry = self._geometry_matches(img)
                results[pred.kind] = geometry
        return results

    def solved(self, img: Image.Image) -> bool:
        return all(self.check(img).values())

    def _geometry_matches(self, img: Image.Image) -> bool:
        ref = self.reference()
        if img.size != ref.size:
            return False
        diff = np.abs(_luminance(img) - _luminance(ref))
        return bool(diff.mean() <= _GEOMETRY_TOLERANCE)

    def input_digest(self) -> str:
        import hashlib

        head = f"{self.image.mode}:{self.image.size}".encode()
        return hashlib.sha256(head + self.image.tobytes()).hexdigest()


def _render_goal(predicates: list[Predicate]) -> str:
    ordered = sorted(predicates, key=lambda p: _KIND_ORDER.index(p.kind))
    clauses = [_goal_clause(p) for p in ordered]
    if len(clauses) == 1:
        body = clauses[0]
    elif len(clauses) == 2:
        body = f"{clauses[0]} and {clauses[1]}"
    else:
        body = ", ".join(clauses[:-1]) + f", and {clauses[-1]}"
    return f"Please {body}."


def _make_input(seed: int, width: int, height: int) -> Image.Image:
    """Textured, orientation-asymmetric noise so geometry errors show."""
    rng = np.random.default_rng(seed)
    noise = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    xs = np.tile(np.linspace(0, 255, width), (height, 1))
    ys = np.tile(np.linspace(0, 255, height)[:, None], (1, width))
    arr = noise * 0.6 + xs[..., None] * 0.25 + ys[..., None] * 0.15
    return Image.fromarray(np.clip(np.rint(arr), 0, 255).astype(np.uint8), "RGB")


def _compatible(chosen: list[Predicate], kind: str) -> bool:
    kinds = {p.kind for p in chosen}
    if kind in kinds:
        return False
    return all(frozenset((kind, k)) not in _EXCLUSIONS for k in kinds)


def _draw_predicate(rng: random.Random, kind: str, width: int, height: int, budget: int) -> Predicate | None:
    if kind == LONGEST_SIDE:
        return Predicate(kind, rng.choice((256, 512)))
    if kind == BORDER:
        return Predicate(kind, rng.choice((10, 50)))
    if kind == ROTATED_CW:
        turns = rng.choice((1, 2, 3))
        if turns == 2 and budget < 2:
            turns = rng.choice((1, 3))
        return Predicate(kind, turns)
    if kind == CROPPED:
        left = rng.randrange(0, max(1, width // 6))
        top = rng.randrange(0, max(1, height // 6))
        right = rng.randrange(width - width // 6, width + 1)
        bottom = rng.randrange(height - height // 6, height + 1)
        return Predicate(kind, (left, top, right, bottom))
    return Predicate(kind)


def gen_tasks(seed: int, n: int, max_len: int = 3) -> list[SyntheticTask]:
    """Deterministic task suite: same seed, same tasks, bit for bit."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if not 1 <= max_len <= 4:
        raise ValueError(f"max_len must be in [1, 4], got {max_len}")
    tasks = []
    for index in range(n):
        rng = random.Random(seed * 100003 + index)
        width = rng.randrange(48, 129, 8)
        height = rng.randrange(48, 129, 8)
        image = _make_input(seed * 100003 + index, width, height)
        budget = rng.randint(1, max_len)
        pool = list(_KIND_ORDER)
        rng.shuffle(pool)
        chosen: list[Predicate] = []
        remaining = budget
        for kind in pool:
            if remaining < 1 or not _compatible(chosen, kind):
                continue
            pred = _draw_predicate(rng, kind, width, height, remaining)
            if pred is None or pred.cost() > remaining:
                continue
            chosen.append(pred)
            remaining -= pred.cost()
        tasks.append(
            SyntheticTask(
                index=index,
                image=image,
                predicates=chosen,
                goal=_render_goal(chosen),
            )
        )
    return tasks
