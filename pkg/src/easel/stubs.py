"""Deterministic in-process stand-ins for the external model tools.

Real diffusion editors, detectors, and scorers run out of process
behind the adapter protocol.  When no adapter endpoint is configured,
the engine falls back to these stubs so that whole sessions remain
runnable (and replayable) on a bare machine.  Each stub is a cheap,
seedless, fully deterministic approximation of the tool's *shape*: it
consumes the same arguments and produces the same media kind, with just
enough behavioral texture (instruction-dependent tint, strength-scaled
magnitude) for pipelines and feedback loops to be exercised honestly.

None of this pretends to be model inference; provenance records mark
every output with ``"stub": true``.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from . import builtins as ops
from .artifacts import Artifact, ArtifactStore
from .registry import Registry, run_handler


def _prompt_tint(text: str) -> np.ndarray:
    """A reproducible RGB direction derived from the text, in [-1, 1]^3."""
    digest = hashlib.sha256(text.strip().lower().encode("utf-8")).digest()
    raw = np.frombuffer(digest[:3], dtype=np.uint8).astype(np.float64)
    return raw / 127.5 - 1.0


def _tinted(img: Image.Image, text: str, magnitude: float) -> Image.Image:
    arr = np.asarray(ops.normalize_mode(img)).astype(np.float64)
    tint = _prompt_tint(text) * magnitude
    if arr.ndim == 2:
        arr = arr + tint.mean()
    else:
        arr[..., :3] = arr[..., :3] + tint
    return Image.fromarray(np.clip(np.rint(arr), 0, 255).astype(np.uint8))


def _instruct_diffusion(imgs, a):
    # Effect magnitude follows txt_cfg so escalation is visible in pixels.
    return _tinted(imgs[0], a["instruction"], 6.0 * a["txt_cfg"])


def _edict(imgs, a):
    return _tinted(imgs[0], a["target_prompt"], 28.0)


def _prompt2prompt(imgs, a):
    return _tinted(imgs[0], a["target_prompt"], 14.0)


def _grounding_dino(imgs, a):
    w, h = imgs[0].size
    return f"{w // 4},{h // 4},{3 * w // 4},{3 * h // 4}"


def _inpainting(imgs, a):
    image, mask = imgs[0], imgs[1]
    arr = np.asarray(ops.normalize_mode(image)).astype(np.float64)
    mask_arr = np.asarray(mask.convert("L")).astype(np.float64)
    if mask_arr.shape != arr.shape[:2]:
        mask_img = mask.convert("L").resize(image.size, Image.Resampling.NEAREST)
        mask_arr = np.asarray(mask_img).astype(np.float64)
    hole = mask_arr >= 128
    if hole.any() and not hole.all():
        if arr.ndim == 2:
            fill = arr[~hole].mean()
        else:
            fill = arr[~hole].reshape(-1, arr.shape[-1]).mean(axis=0)
    else:
        fill = arr.mean(axis=(0, 1)) if arr.ndim == 3 else arr.mean()
    out = arr.copy()
    out[hole] = fill
    tint = _prompt_tint(a["prompt"]) * 4.0 * a["guidance"]
    if out.ndim == 3:
        out[hole, :3] = np.clip(out[hole, :3] + tint[: out.shape[-1]][:3], 0, 255)
    else:
        out[hole] = np.clip(out[hole] + tint.mean(), 0, 255)
    return Image.fromarray(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def _llava(imgs, a):
    question = (a.get("question") or "").strip()
    w, h = imgs[0].size
    if not question:
        return f"an image of {w}x{h} pixels"
    return "unknown"


def _image_difference(imgs, a):
    first = np.asarray(ops.normalize_mode(imgs[0]).convert("RGB"))
    second = np.asarray(ops.normalize_mode(imgs[1]).convert("RGB"))
    if first.shape != second.shape:
        return (
            f"the images differ in size: {imgs[0].width}x{imgs[0].height} "
            f"vs {imgs[1].width}x{imgs[1].height}"
        )
    changed = int((first != second).any(axis=-1).sum())
    if changed == 0:
        return "the images are identical"
    total = first.shape[0] * first.shape[1]
    return f"the images differ in {changed} of {total} pixels"


def aesthetic_value(img: Image.Image) -> float:
    """Contrast heuristic: luminance spread, mapped onto [0, 10].

    A deliberately simple stand-in so candidate edits of the same photo
    get comparable, deterministic numbers.  Distinct from (and cruder
    than) the reference adapter's scorer.
    """
    gray = np.asarray(img.convert("L")).astype(np.float64)
    return min(10.0, 10.0 * gray.std() / 80.0)


def _aesthetic_score(imgs, a):
    return f"{aesthetic_value(imgs[0]):.3f}"


STUB_HANDLERS = {
    "InstructDiffusion": _instruct_diffusion,
    "Edict": _edict,
    "Prompt2Prompt": _prompt2prompt,
    "GroundingDINO": _grounding_dino,
    "Inpainting": _inpainting,
    "LLaVA": _llava,
    "ImageDifferenceLLaVA": _image_difference,
    "AestheticScore": _aesthetic_score,
}


def invoke_stub(
    registry: Registry,
    name: str,
    args: dict,
    store: ArtifactStore,
    coords: tuple[int, int, int],
) -> Artifact:
    spec = registry.get(name)
    handler = STUB_HANDLERS[name]
    return run_handler(spec, handler, args, store, coords, provenance_extra={"stub": True})
