"""Tool registry: specs, the two prompt views, and builtin dispatch.

The registry enforces the information barrier the engine is built
around: planners may only ever see `PlannerToolView` (name and a one-
or two-sentence description), while an executor sees `ExecutorToolView`
for exactly one tool, including its full manual and argument schema.

Tool documents live on disk as a directory per tool::

    tools/<Name>/spec.yaml    # name, kind, description, output, args
    tools/<Name>/manual.md    # full usage manual, markdown

Manuals may declare escalatable numeric parameters with marker lines::

    tunable-strength: txt_cfg min=1.0 max=8.0 step=1.0

which the executor reads when feedback says an edit was too weak.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml
from PIL import Image

from . import builtins as ops
from .artifacts import RASTER, SCALAR, TEXT, Artifact, ArtifactStore
from .errors import (
    ArgValidationError,
    DuplicateNameError,
    EmptyManualError,
    EmptyRegistryError,
    MalformedSchemaError,
    MediaMismatchError,
    PromptBudgetExceededError,
    ToolExecutionError,
    UnknownToolError,
)

ARG_KINDS = {"path", "int", "real", "text", "enum"}
OUTPUT_KINDS = {RASTER, SCALAR, TEXT}

_TUNABLE_RE = re.compile(
    r"^tunable-strength:\s*(?P<name>\w+)\s+min=(?P<min>[-\d.]+)\s+max=(?P<max>[-\d.]+)"
    r"(?:\s+step=(?P<step>[-\d.]+))?\s*$",
    re.MULTILINE,
)


@dataclass(frozen=True)
class ArgSpec:
    """One positional argument of a tool."""

    name: str
    kind: str
    required: bool = True
    default: object = None
    choices: tuple = ()
    minimum: float | None = None
    maximum: float | None = None


@dataclass(frozen=True)
class StrengthParam:
    """An escalatable numeric parameter declared in a manual."""

    name: str
    minimum: float
    maximum: float
    step: float


@dataclass(frozen=True)
class ToolSpec:
    name: str
    kind: str  # builtin | external
    description: str
    manual: str
    output: str  # raster | scalar | text
    args: tuple[ArgSpec, ...]

    def strength_params(self) -> dict[str, StrengthParam]:
        out = {}
        for m in _TUNABLE_RE.finditer(self.manual):
            step = float(m.group("step")) if m.group("step") else 1.0
            out[m.group("name")] = StrengthParam(
                m.group("name"), float(m.group("min")), float(m.group("max")), step
            )
        return out

    def free_args(self) -> tuple[ArgSpec, ...]:
        """Arguments beyond the leading raster-path inputs.

        A tool whose every argument is an engine-supplied image path is
        fully determined: the executor can bind it without asking a
        language model anything.
        """
        return tuple(a for a in self.args if a.kind != "path")


@dataclass(frozen=True)
class PlannerToolView:
    """What a planner is allowed to know about one tool."""

    name: str
    description: str


@dataclass(frozen=True)
class ExecutorToolView:
    """What an executor sees: one tool, in full."""

    name: str
    manual: str
    args: tuple[ArgSpec, ...]


@dataclass
class Registry:
    _tools: dict[str, ToolSpec] = field(default_factory=dict)

    def register(self, spec: ToolSpec) -> None:
        if spec.name in self._tools:
            raise DuplicateNameError(f"tool already registered: {spec.name}")
        if not spec.manual.strip():
            raise EmptyManualError(f"tool {spec.name} has an empty manual")
        _validate_spec(spec)
        self._tools[spec.name] = spec

    def names(self) -> list[str]:
        return list(self._tools)

    def get(self, name: str) -> ToolSpec:
        try:
            return self._tools[name]
        except KeyError:
            raise UnknownToolError(f"no tool named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    def resolve_name(self, candidate: str) -> str | None:
        """Case-insensitive match after stripping spaces and punctuation."""
        target = _fold(candidate)
        if not target:
            return None
        for name in self._tools:
            if _fold(name) == target:
                return name
        return None

    def planner_view(self, budget_chars: int | None = None) -> list[PlannerToolView]:
        if not self._tools:
            raise EmptyRegistryError("cannot build a planner view of an empty registry")
        views = [PlannerToolView(t.name, t.description) for t in self._tools.values()]
        if budget_chars is not None:
            total = sum(len(v.name) + len(v.description) + 2 for v in views)
            if total > budget_chars:
                raise PromptBudgetExceededError(
                    f"planner view needs {total} chars, budget is {budget_chars}"
                )
        return views

    def executor_view(self, name: str) -> ExecutorToolView:
        spec = self.get(name)
        return ExecutorToolView(spec.name, spec.manual, spec.args)


def _fold(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


def _validate_spec(spec: ToolSpec) -> None:
    if spec.kind not in ("builtin", "external"):
        raise MalformedSchemaError(f"{spec.name}: unknown tool kind {spec.kind!r}")
    if spec.output not in OUTPUT_KINDS:
        raise MalformedSchemaError(f"{spec.name}: unknown output kind {spec.output!r}")
    if not spec.description.strip():
        raise MalformedSchemaError(f"{spec.name}: empty description")
    seen = set()
    for arg in spec.args:
        if arg.kind not in ARG_KINDS:
            raise MalformedSchemaError(
                f"{spec.name}: argument {arg.name} has unknown kind {arg.kind!r}"
            )
        if arg.name in seen:
            raise MalformedSchemaError(f"{spec.name}: duplicate argument {arg.name}")
        if arg.kind == "enum" and not arg.choices:
            raise MalformedSchemaError(
                f"{spec.name}: enum argument {arg.name} lists no choices"
            )
        seen.add(arg.name)
    if spec.kind == "builtin" and spec.name not in _BUILTIN_HANDLERS:
        raise MalformedSchemaError(f"{spec.name}: no builtin handler for this name")


# --- spec documents on disk ----------------------------------------------


def load_tool_dir(tool_dir: Path) -> ToolSpec:
    spec_path = tool_dir / "spec.yaml"
    manual_path = tool_dir / "manual.md"
    if not spec_path.exists():
        raise MalformedSchemaError(f"{tool_dir.name}: missing spec.yaml")
    if not manual_path.exists():
        raise EmptyManualError(f"{tool_dir.name}: missing manual.md")
    try:
        raw = yaml.safe_load(spec_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise MalformedSchemaError(f"{tool_dir.name}: unparseable spec.yaml: {exc}")
    if not isinstance(raw, dict):
        raise MalformedSchemaError(f"{tool_dir.name}: spec.yaml is not a mapping")
    for key in ("name", "kind", "description", "output"):
        if key not in raw:
            raise MalformedSchemaError(f"{tool_dir.name}: spec.yaml missing {key!r}")
    args = []
    for entry in raw.get("args", []) or []:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise MalformedSchemaError(
                f"{tool_dir.name}: malformed args entry {entry!r}"
            )
        args.append(
            ArgSpec(
                name=entry["name"],
                kind=entry["kind"],
                required=entry.get("required", True),
                default=entry.get("default"),
                choices=tuple(entry.get("choices", ())),
                minimum=entry.get("min"),
                maximum=entry.get("max"),
            )
        )
    return ToolSpec(
        name=raw["name"],
        kind=raw["kind"],
        description=str(raw["description"]).strip(),
        manual=manual_path.read_text(encoding="utf-8"),
        output=raw["output"],
        args=tuple(args),
    )


def load_registry(tools_dir: Path) -> Registry:
    """Load every tool directory under tools_dir, sorted by name."""
    tools_dir = Path(tools_dir)
    reg = Registry()
    if not tools_dir.is_dir():
        raise EmptyRegistryError(f"no tools directory at {tools_dir}")
    for entry in sorted(tools_dir.iterdir()):
        if entry.is_dir() and not entry.name.startswith("."):
            reg.register(load_tool_dir(entry))
    if len(reg) == 0:
        raise EmptyRegistryError(f"no tool directories under {tools_dir}")
    return reg


def default_tools_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "tools"


def default_registry() -> Registry:
    return load_registry(default_tools_dir())


def default_assets_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "assets"


# --- argument validation and builtin dispatch -----------------------------


def coerce_args(spec: ToolSpec, values: dict) -> dict:
    """Validate and coerce a name->value mapping against the schema.

    String values are accepted for numeric kinds, since tool-call lines
    arrive as text.  Unknown names, missing required arguments, and
    range violations raise ArgValidationError.
    """
    known = {a.name: a for a in spec.args}
    unknown = set(values) - set(known)
    if unknown:
        raise ArgValidationError(
            f"{spec.name}: unknown argument(s) {sorted(unknown)}"
        )
    out = {}
    for arg in spec.args:
        if arg.name in values and values[arg.name] is not None:
            out[arg.name] = _coerce_one(spec.name, arg, values[arg.name])
        elif arg.default is not None:
            out[arg.name] = arg.default
        elif arg.required:
            raise ArgValidationError(f"{spec.name}: missing argument {arg.name!r}")
    return out


def bind_positional(spec: ToolSpec, raw_args: list[str]) -> dict:
    """Bind a tool-call line's positional arguments to the schema."""
    if len(raw_args) > len(spec.args):
        raise ArgValidationError(
            f"{spec.name}: got {len(raw_args)} arguments, schema has {len(spec.args)}"
        )
    values = {}
    for arg_spec, raw in zip(spec.args, raw_args):
        if raw != "":
            values[arg_spec.name] = raw
    return coerce_args(spec, values)


def _coerce_one(tool: str, arg: ArgSpec, value):
    try:
        if arg.kind == "int":
            text = str(value).strip()
            try:
                coerced = int(text)
            except ValueError:
                # Escalated values arrive as floats; accept whole ones.
                as_real = float(text)
                if not as_real.is_integer():
                    raise
                coerced = int(as_real)
        elif arg.kind == "real":
            coerced = float(str(value).strip())
        elif arg.kind == "enum":
            coerced = str(value).strip()
            if coerced not in arg.choices:
                raise ArgValidationError(
                    f"{tool}: {arg.name} must be one of {list(arg.choices)}, got {coerced!r}"
                )
        else:  # path, text
            coerced = str(value)
    except (TypeError, ValueError):
        raise ArgValidationError(
            f"{tool}: argument {arg.name} expects {arg.kind}, got {value!r}"
        ) from None
    if arg.kind in ("int", "real"):
        if arg.minimum is not None and coerced < arg.minimum:
            raise ArgValidationError(
                f"{tool}: {arg.name}={coerced} below minimum {arg.minimum}"
            )
        if arg.maximum is not None and coerced > arg.maximum:
            raise ArgValidationError(
                f"{tool}: {arg.name}={coerced} above maximum {arg.maximum}"
            )
    return coerced


def invoke_builtin(
    registry: Registry,
    name: str,
    args: dict,
    store: ArtifactStore,
    coords: tuple[int, int, int],
) -> Artifact:
    """Run a builtin tool on validated args, persisting the output.

    Path arguments are resolved against the store root; raster inputs
    must exist and be readable as images.  The output artifact carries
    full provenance: tool name, final argument values, input digests.
    """
    spec = registry.get(name)
    if spec.kind != "builtin":
        raise UnknownToolError(f"{name} is not a builtin tool")
    return run_handler(spec, _BUILTIN_HANDLERS[name], args, store, coords)


def apply_builtin(registry: Registry, name: str, images: list, args: dict):
    """Run a builtin on already-loaded images, without persistence.

    Path arguments are satisfied by the images list (in schema order),
    so args carries only the non-path values.  Validation and the
    handler are exactly the ones invoke_builtin uses; only the store
    round-trip is skipped.
    """
    spec = registry.get(name)
    if spec.kind != "builtin":
        raise UnknownToolError(f"{name} is not a builtin tool")
    values = dict(args)
    for arg in spec.args:
        if arg.kind == "path":
            values.setdefault(arg.name, "(in-memory)")
    final = coerce_args(spec, values)
    return _BUILTIN_HANDLERS[name](images, final)


def run_handler(
    spec: ToolSpec,
    handler,
    args: dict,
    store: ArtifactStore,
    coords: tuple[int, int, int],
    provenance_extra: dict | None = None,
) -> Artifact:
    """Shared plumbing: validate, load inputs, run, persist with provenance."""
    final = coerce_args(spec, args)
    images, input_digests = _load_path_args(spec, final, store)
    try:
        result = handler(images, final)
    except (ArgValidationError, MediaMismatchError):
        raise
    except Exception as exc:
        raise ToolExecutionError(f"{spec.name} failed: {exc}") from exc
    provenance = {"tool": spec.name, "args": _plain(final), "inputs": input_digests}
    if provenance_extra:
        provenance.update(provenance_extra)
    round_no, agent_id, step = coords
    if isinstance(result, Image.Image):
        if spec.output != RASTER:
            raise ToolExecutionError(f"{spec.name}: handler produced unexpected raster")
        return store.put_image(result, round_no, agent_id, step, provenance)
    kind = SCALAR if spec.output == SCALAR else TEXT
    return store.put_text(str(result), round_no, agent_id, step, provenance, kind=kind)


def _load_path_args(spec: ToolSpec, final: dict, store: ArtifactStore):
    images = []
    digests = []
    for arg in spec.args:
        if arg.kind != "path" or arg.name not in final:
            continue
        path = store.resolve(final[arg.name])
        if not path.exists():
            raise ArgValidationError(
                f"{spec.name}: {arg.name} file not found: {final[arg.name]}"
            )
        try:
            with Image.open(path) as img:
                images.append(img.copy())
        except Exception:
            raise MediaMismatchError(
                f"{spec.name}: {arg.name} is not a readable image: {final[arg.name]}"
            ) from None
        digests.append(_digest(path))
    return images, digests


def _digest(path: Path) -> str:
    import hashlib

    return hashlib.sha256(path.read_bytes()).hexdigest()


def _plain(args: dict) -> dict:
    return {k: (v if isinstance(v, (int, float, str, bool)) else str(v)) for k, v in args.items()}


# Handlers take (loaded path-arg images in schema order, coerced args).
_BUILTIN_HANDLERS = {
    "Resize": lambda imgs, a: ops.resize_longest(imgs[0], a["longest_side"]),
    "Crop": lambda imgs, a: ops.crop(imgs[0], a["left"], a["top"], a["right"], a["bottom"]),
    "Paste": lambda imgs, a: ops.paste(imgs[0], imgs[1], a["x"], a["y"]),
    "Blending": lambda imgs, a: ops.blend_images(imgs[0], imgs[1], a["alpha"]),
    "RGB2Gray": lambda imgs, a: ops.to_grayscale(imgs[0]),
    "GaussianBlur": lambda imgs, a: ops.gaussian_blur(imgs[0], a["kernel_size"]),
    "RotateClockwise": lambda imgs, a: ops.rotate_clockwise(imgs[0]),
    "RotateCounterClockwise": lambda imgs, a: ops.rotate_counterclockwise(imgs[0]),
    "EnhanceColor": lambda imgs, a: ops.enhance_color(imgs[0], a["factor"]),
    "FlipHorizontal": lambda imgs, a: ops.flip_horizontal(imgs[0]),
    "AddLogo": lambda imgs, a: ops.add_logo(imgs[0], imgs[1], a["x"], a["y"]),
    "AddWatermark": lambda imgs, a: ops.add_watermark(imgs[0], imgs[1], a["alpha"]),
    "GetSize": lambda imgs, a: ops.describe_size(imgs[0]),
    "ImageExpand": lambda imgs, a: ops.expand_border(imgs[0], a["border_px"], a["color"]),
}
