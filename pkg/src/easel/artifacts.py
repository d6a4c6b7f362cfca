"""Artifacts: the values that flow between tools.

An artifact is an opaque handle plus a media descriptor and a storage
path.  Raster artifacts live on disk as PNG files; text and scalar
artifacts as small UTF-8 text files.  Paths held by an Artifact are
session-relative so transcripts stay byte-stable across machines; the
ArtifactStore resolves them against its root directory.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .errors import MediaMismatchError

RASTER = "raster"
SCALAR = "scalar"
TEXT = "text"

_EXT = {RASTER: ".png", SCALAR: ".txt", TEXT: ".txt"}


@dataclass(frozen=True)
class MediaInfo:
    """Describes what kind of value an artifact holds."""

    kind: str  # raster | scalar | text
    width: int = 0
    height: int = 0
    channels: int = 0

    def __post_init__(self):
        if self.kind not in (RASTER, SCALAR, TEXT):
            raise ValueError(f"unknown media kind: {self.kind!r}")
        if self.kind == RASTER and (self.width < 1 or self.height < 1):
            raise ValueError("raster artifacts need width and height >= 1")


@dataclass(frozen=True)
class Artifact:
    """A produced value: image file, scalar, or text.

    `path` is relative to the owning store's root except for the session
    input, which keeps the caller-supplied path verbatim.  `digest` is
    the SHA-256 of the file bytes at creation time.
    """

    id: str
    media: MediaInfo
    path: str
    digest: str
    provenance: dict = field(hash=False, default_factory=dict)

    @property
    def is_raster(self) -> bool:
        return self.media.kind == RASTER


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def media_of_image(img: Image.Image) -> MediaInfo:
    channels = len(img.getbands())
    return MediaInfo(RASTER, img.width, img.height, channels)


class ArtifactStore:
    """Materializes artifacts under a root directory.

    Layout for step outputs: artifacts/<round>/<agent>/<step>.<ext>.
    Artifact ids repeat that coordinate, so they are deterministic
    regardless of thread scheduling.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def resolve(self, artifact_or_path: "Artifact | str") -> Path:
        rel = (
            artifact_or_path.path
            if isinstance(artifact_or_path, Artifact)
            else artifact_or_path
        )
        p = Path(rel)
        return p if p.is_absolute() else (self.root / p)

    def import_input(self, path: str | Path) -> Artifact:
        """Copy an outside image into the store root as the session input.

        The artifact's path becomes the relative "input.png", so prompts
        and transcripts never leak machine-specific directories.
        """
        src = Path(path)
        if not src.exists():
            raise FileNotFoundError(f"input image not found: {path}")
        with Image.open(src) as img:
            copied = img.copy()
        abs_path = self.root / "input.png"
        copied.save(abs_path, format="PNG")
        return Artifact(
            id="input",
            media=media_of_image(copied),
            path="input.png",
            digest=file_digest(abs_path),
            provenance={"source": "input", "original": src.name},
        )

    def adopt_input(self, path: str | Path, id: str = "input") -> Artifact:
        """Wrap an existing image file the caller owns; path kept verbatim."""
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"input image not found: {path}")
        with Image.open(p) as img:
            media = media_of_image(img)
        return Artifact(
            id=id,
            media=media,
            path=str(path),
            digest=file_digest(p),
            provenance={"source": "input"},
        )

    def _target(self, round_no: int, agent_id: int, step: int, ext: str) -> tuple[str, Path]:
        rel = f"artifacts/{round_no}/{agent_id}/{step}{ext}"
        abs_path = self.root / rel
        abs_path.parent.mkdir(parents=True, exist_ok=True)
        return rel, abs_path

    def put_image(
        self,
        img: Image.Image,
        round_no: int,
        agent_id: int,
        step: int,
        provenance: dict,
    ) -> Artifact:
        rel, abs_path = self._target(round_no, agent_id, step, _EXT[RASTER])
        img.save(abs_path, format="PNG")
        return Artifact(
            id=f"{round_no}/{agent_id}/{step}",
            media=media_of_image(img),
            path=rel,
            digest=file_digest(abs_path),
            provenance=provenance,
        )

    def put_text(
        self,
        content: str,
        round_no: int,
        agent_id: int,
        step: int,
        provenance: dict,
        kind: str = TEXT,
    ) -> Artifact:
        rel, abs_path = self._target(round_no, agent_id, step, _EXT[kind])
        abs_path.write_text(content, encoding="utf-8")
        return Artifact(
            id=f"{round_no}/{agent_id}/{step}",
            media=MediaInfo(kind),
            path=rel,
            digest=file_digest(abs_path),
            provenance=provenance,
        )

    def adopt_file(
        self,
        produced: Path,
        round_no: int,
        agent_id: int,
        step: int,
        provenance: dict,
    ) -> Artifact:
        """Register a file an adapter already wrote at the target location."""
        produced = Path(produced)
        if not produced.exists():
            raise FileNotFoundError(f"adapter reported missing file: {produced}")
        if produced.suffix.lower() == ".png":
            with Image.open(produced) as img:
                media = media_of_image(img)
        else:
            media = MediaInfo(TEXT)
        try:
            rel = str(produced.relative_to(self.root))
        except ValueError:
            rel = str(produced)
        return Artifact(
            id=f"{round_no}/{agent_id}/{step}",
            media=media,
            path=rel,
            digest=file_digest(produced),
            provenance=provenance,
        )

    def load_image(self, artifact: Artifact) -> Image.Image:
        if not artifact.is_raster:
            raise MediaMismatchError(
                f"artifact {artifact.id} is {artifact.media.kind}, expected raster"
            )
        with Image.open(self.resolve(artifact)) as img:
            return img.copy()

    def read_text(self, artifact: Artifact) -> str:
        if artifact.is_raster:
            raise MediaMismatchError(
                f"artifact {artifact.id} is raster, expected text or scalar"
            )
        return self.resolve(artifact).read_text(encoding="utf-8")
