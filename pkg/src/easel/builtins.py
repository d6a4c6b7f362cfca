"""Deterministic raster operations backing the built-in tools.

Every function here is a pure transformation: same input bytes and
arguments produce the same output bytes, on any run.  That property is
what makes session replay and the benchmark oracle possible, so think
twice before introducing anything platform- or time-dependent.

Images are PIL Images in mode L, RGB, or RGBA; other modes are
converted on entry.  Heavy per-pixel math goes through numpy in
float64 and is rounded back to uint8 with np.rint.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ArgValidationError


def normalize_mode(img: Image.Image) -> Image.Image:
    if img.mode in ("L", "RGB", "RGBA"):
        return img
    if img.mode in ("LA", "PA") or "A" in img.mode:
        return img.convert("RGBA")
    return img.convert("RGB")


def _to_array(img: Image.Image) -> np.ndarray:
    return np.asarray(normalize_mode(img)).astype(np.float64)


def _to_image(arr: np.ndarray) -> Image.Image:
    clipped = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return Image.fromarray(clipped)


# --- geometry -----------------------------------------------------------


def resize_longest(img: Image.Image, longest_side: int) -> Image.Image:
    """Scale so max(width, height) == longest_side, aspect preserved."""
    if longest_side < 1:
        raise ArgValidationError(f"longest_side must be >= 1, got {longest_side}")
    img = normalize_mode(img)
    w, h = img.size
    if w >= h:
        new_w = longest_side
        new_h = max(1, round(h * longest_side / w))
    else:
        new_h = longest_side
        new_w = max(1, round(w * longest_side / h))
    return img.resize((new_w, new_h), Image.Resampling.BILINEAR)


def crop(img: Image.Image, left: int, top: int, right: int, bottom: int) -> Image.Image:
    w, h = img.size
    if not (0 <= left < right <= w and 0 <= top < bottom <= h):
        raise ArgValidationError(
            f"crop box ({left},{top},{right},{bottom}) outside image {w}x{h}"
        )
    return normalize_mode(img).crop((left, top, right, bottom))


def flip_horizontal(img: Image.Image) -> Image.Image:
    return normalize_mode(img).transpose(Image.Transpose.FLIP_LEFT_RIGHT)


def rotate_clockwise(img: Image.Image) -> Image.Image:
    # ROTATE_270 is counterclockwise by 270, i.e. clockwise by 90.
    return normalize_mode(img).transpose(Image.Transpose.ROTATE_270)


def rotate_counterclockwise(img: Image.Image) -> Image.Image:
    return normalize_mode(img).transpose(Image.Transpose.ROTATE_90)


def expand_border(img: Image.Image, border_px: int, color: str = "white") -> Image.Image:
    """Pad the image with a uniform border on all four sides."""
    if border_px < 0:
        raise ArgValidationError(f"border_px must be >= 0, got {border_px}")
    img = normalize_mode(img)
    if border_px == 0:
        return img.copy()
    w, h = img.size
    canvas = Image.new(img.mode, (w + 2 * border_px, h + 2 * border_px), color)
    canvas.paste(img, (border_px, border_px))
    return canvas


# --- color --------------------------------------------------------------


def to_grayscale(img: Image.Image) -> Image.Image:
    """Single-channel luminance; identity when already single-channel."""
    img = normalize_mode(img)
    if img.mode == "L":
        return img.copy()
    return img.convert("L")


def enhance_color(img: Image.Image, factor: float) -> Image.Image:
    """Per-channel saturation scaling around the luminance, clamped.

    factor 1.0 reproduces the input exactly; 0.0 collapses to gray;
    values above 1.0 push channels away from the luminance.
    """
    if factor < 0:
        raise ArgValidationError(f"factor must be >= 0, got {factor}")
    img = normalize_mode(img)
    if img.mode == "L":
        return img.copy()
    arr = _to_array(img)
    rgb = arr[..., :3]
    gray = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    scaled = gray[..., None] + factor * (rgb - gray[..., None])
    out = arr.copy()
    out[..., :3] = scaled
    return _to_image(out)


def gaussian_blur(img: Image.Image, kernel_size: int) -> Image.Image:
    """Separable Gaussian with an odd kernel width and sigma = size / 6.

    Edges are handled by replicating the border pixel, which keeps the
    output size equal to the input size.
    """
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ArgValidationError(
            f"kernel_size must be a positive odd integer, got {kernel_size}"
        )
    img = normalize_mode(img)
    if kernel_size == 1:
        return img.copy()
    sigma = kernel_size / 6.0
    half = kernel_size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    weights /= weights.sum()

    arr = _to_array(img)
    if arr.ndim == 2:
        arr = arr[..., None]
    padded = np.pad(arr, ((half, half), (0, 0), (0, 0)), mode="edge")
    rows = sum(
        padded[i : i + arr.shape[0]] * weights[i] for i in range(kernel_size)
    )
    padded = np.pad(rows, ((0, 0), (half, half), (0, 0)), mode="edge")
    cols = sum(
        padded[:, i : i + arr.shape[1]] * weights[i] for i in range(kernel_size)
    )
    if img.mode == "L":
        cols = cols[..., 0]
    return _to_image(cols)


# --- composition --------------------------------------------------------


def paste(base: Image.Image, overlay: Image.Image, x: int, y: int) -> Image.Image:
    """Hard-paste the overlay rectangle at (x, y), no alpha blending."""
    base = normalize_mode(base)
    overlay = normalize_mode(overlay)
    _check_placement(base, overlay, x, y)
    out = base.copy()
    out.paste(overlay.convert(base.mode), (x, y))
    return out


def add_logo(base: Image.Image, logo: Image.Image, x: int, y: int) -> Image.Image:
    """Paste honoring the logo's own alpha channel when it has one."""
    base = normalize_mode(base)
    logo = normalize_mode(logo)
    _check_placement(base, logo, x, y)
    out = base.copy()
    if logo.mode == "RGBA":
        region = logo if out.mode == "RGBA" else logo.convert("RGBA")
        out.paste(region.convert(out.mode), (x, y), mask=logo.getchannel("A"))
    else:
        out.paste(logo.convert(out.mode), (x, y))
    return out


def blend_images(base: Image.Image, overlay: Image.Image, alpha: float) -> Image.Image:
    """Full-canvas blend: overlay is resized to the base, then mixed."""
    if not 0.0 <= alpha <= 1.0:
        raise ArgValidationError(f"alpha must be in [0, 1], got {alpha}")
    base = normalize_mode(base)
    overlay = normalize_mode(overlay)
    if overlay.size != base.size:
        overlay = overlay.resize(base.size, Image.Resampling.BILINEAR)
    a = _to_array(base.convert("RGB"))
    b = _to_array(overlay.convert("RGB"))
    mixed = (1.0 - alpha) * a + alpha * b
    return _to_image(mixed)


def add_watermark(base: Image.Image, mark: Image.Image, alpha: float) -> Image.Image:
    """Blend the watermark into the bottom-right corner at the given alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ArgValidationError(f"alpha must be in [0, 1], got {alpha}")
    base = normalize_mode(base)
    mark = normalize_mode(mark)
    bw, bh = base.size
    mw, mh = mark.size
    if mw > bw or mh > bh:
        raise ArgValidationError(
            f"watermark {mw}x{mh} larger than image {bw}x{bh}"
        )
    x, y = bw - mw, bh - mh
    arr = _to_array(base)
    mark_arr = _to_array(mark.convert("RGB" if base.mode != "RGBA" else "RGBA"))
    region = arr[y : y + mh, x : x + mw]
    if arr.ndim == 2:
        mark_flat = _to_array(mark.convert("L"))
        region[:] = (1.0 - alpha) * region + alpha * mark_flat
    else:
        region[..., :3] = (1.0 - alpha) * region[..., :3] + alpha * mark_arr[..., :3]
    return _to_image(arr)


def _check_placement(base: Image.Image, overlay: Image.Image, x: int, y: int) -> None:
    bw, bh = base.size
    ow, oh = overlay.size
    if x < 0 or y < 0 or x + ow > bw or y + oh > bh:
        raise ArgValidationError(
            f"overlay {ow}x{oh} at ({x},{y}) exceeds image {bw}x{bh}"
        )


# --- inspection ---------------------------------------------------------


def describe_size(img: Image.Image) -> str:
    return f"{img.width}x{img.height}"
