"""Built-in tool handlers: a documented scoring heuristic and a fill stub.

Both handlers are pure functions of their input files, so repeated
calls with the same request produce byte-identical outputs.  Path
arguments resolve from ``args`` first, falling back to ``input_paths``
in declaration order, which is how hosts that strip path arguments
from ``args`` deliver them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .wire import Request

# Saturation constants: the raw quantity at which each component
# contributes half of its weight to the score.
SHARPNESS_HALF = 35.0
COLORFULNESS_HALF = 60.0

DEFAULT_OUTPUTS = {"AestheticScore": "score.txt", "Inpainting": "fill.png"}

MASK_THRESHOLD = 127


class ArgError(ValueError):
    """Arguments that cannot be bound to the handler's contract."""


@dataclass(frozen=True)
class ToolResult:
    output_path: str
    metrics: dict | None = None


def _resolve_input(request: Request, name: str, position: int) -> Path:
    raw = request.args.get(name)
    if raw is None and len(request.input_paths) > position:
        raw = request.input_paths[position]
    if not isinstance(raw, str) or not raw:
        raise ArgError(
            f"{request.tool} needs {name!r} (args.{name} or input_paths[{position}])"
        )
    path = Path(raw)
    if not path.is_file():
        raise ArgError(f"{name} file not found: {raw}")
    return path


def _output_target(request: Request) -> Path:
    raw = request.args.get("output_path")
    if raw is None:
        target = Path("out") / DEFAULT_OUTPUTS[request.tool]
    elif isinstance(raw, str) and raw:
        target = Path(raw)
    else:
        raise ArgError(f"output_path must be a non-empty string, got {raw!r}")
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def aesthetic_value(image: Image.Image) -> float:
    """Score an image in [0, 10] from sharpness and colorfulness.

    With pixels on the 0-255 scale:

      luma      = 0.299 R + 0.587 G + 0.114 B
      sharpness = mean |4 luma(x,y) - luma(up) - luma(down) - luma(left) - luma(right)|
                  over interior pixels (0 when there is no interior)
      rg        = R - G;  yb = (R + G) / 2 - B
      colorful  = hypot(std rg, std yb) + 0.3 * hypot(mean rg, mean yb)
      score     = 10 * (0.5 * sharpness / (sharpness + 35)
                        + 0.5 * colorful / (colorful + 60))

    rounded to three decimals.  A flat gray image scores exactly 0.0.
    """
    arr = np.asarray(image.convert("RGB"), dtype=np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]

    luma = 0.299 * r + 0.587 * g + 0.114 * b
    if luma.shape[0] >= 3 and luma.shape[1] >= 3:
        core = luma[1:-1, 1:-1]
        lap = 4 * core - luma[:-2, 1:-1] - luma[2:, 1:-1] - luma[1:-1, :-2] - luma[1:-1, 2:]
        sharpness = float(np.abs(lap).mean())
    else:
        sharpness = 0.0

    rg = r - g
    yb = 0.5 * (r + g) - b
    colorful = float(np.hypot(rg.std(), yb.std()) + 0.3 * np.hypot(rg.mean(), yb.mean()))

    score = 10.0 * (
        0.5 * sharpness / (sharpness + SHARPNESS_HALF)
        + 0.5 * colorful / (colorful + COLORFULNESS_HALF)
    )
    return round(score, 3)


def aesthetic_score(request: Request) -> ToolResult:
    image_path = _resolve_input(request, "image", 0)
    target = _output_target(request)
    with Image.open(image_path) as image:
        score = aesthetic_value(image)
    target.write_text(f"{score}\n", encoding="utf-8")
    return ToolResult(str(target), {"aesthetic": score})


def inpaint_mean_fill(request: Request) -> ToolResult:
    """Fill the masked region with the mean color of the unmasked pixels.

    The mask is read as grayscale; values above 127 mark the hole.  A
    mask covering the whole image falls back to mid gray.  ``prompt``
    and ``guidance`` are accepted and ignored: this is the schema of a
    generative tool with a stand-in body.
    """
    image_path = _resolve_input(request, "image", 0)
    mask_path = _resolve_input(request, "mask", 1)
    target = _output_target(request)

    with Image.open(image_path) as image_file:
        pixels = np.asarray(image_file.convert("RGB"), dtype=np.uint8).copy()
    with Image.open(mask_path) as mask_file:
        if mask_file.size != (pixels.shape[1], pixels.shape[0]):
            raise ArgError(
                f"mask size {mask_file.size[0]}x{mask_file.size[1]} does not match "
                f"image size {pixels.shape[1]}x{pixels.shape[0]}"
            )
        hole = np.asarray(mask_file.convert("L")) > MASK_THRESHOLD

    keep = ~hole
    if keep.any():
        fill = np.round(pixels[keep].mean(axis=0)).astype(np.uint8)
    else:
        fill = np.full(3, 128, dtype=np.uint8)
    pixels[hole] = fill

    Image.fromarray(pixels).save(target, format="PNG")
    return ToolResult(str(target))


def default_handlers() -> dict:
    return {"AestheticScore": aesthetic_score, "Inpainting": inpaint_mean_fill}
