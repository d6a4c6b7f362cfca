"""Exception types shared across the engine.

Every error raised by easel code derives from EaselError so callers can
catch the whole family with one clause.  Subclasses are deliberately
fine-grained: the CLI maps them to distinct exit codes and tests assert
on specific classes rather than message text.
"""

from __future__ import annotations


class EaselError(Exception):
    """Base class for all errors raised by this package."""


# --- registry -----------------------------------------------------------


class DuplicateNameError(EaselError):
    """A tool with this name is already registered."""


class EmptyManualError(EaselError):
    """A tool was registered with an empty or whitespace-only manual."""


class MalformedSchemaError(EaselError):
    """A tool's argument schema could not be understood."""


class EmptyRegistryError(EaselError):
    """An operation needed at least one registered tool."""


class UnknownToolError(EaselError):
    """No registered tool has the requested name."""


class ArgValidationError(EaselError):
    """Arguments did not match the tool's declared schema."""


class MediaMismatchError(EaselError):
    """An input artifact has the wrong media kind for the tool."""


class ToolExecutionError(EaselError):
    """A tool handler failed while producing its output."""


class PromptBudgetExceededError(EaselError):
    """A serialized prompt section exceeded the configured budget."""


# --- adapter protocol ---------------------------------------------------


class ProtocolViolationError(EaselError):
    """A wire message broke the framing or schema rules."""


class AdapterTimeoutError(EaselError):
    """An adapter did not answer within the configured deadline."""


class AdapterRemoteError(EaselError):
    """An adapter answered with status=error.

    The structured response is preserved on the `response` attribute so
    callers can inspect error_kind and message.
    """

    def __init__(self, message: str, response: object = None):
        super().__init__(message)
        self.response = response


# --- llm gateway --------------------------------------------------------


class NetworkError(EaselError):
    """A live completion call failed at the transport level."""


class BackendUnavailableError(EaselError):
    """No completion backend is configured for the requested role."""


class ReplayMissError(EaselError):
    """Replay mode found no recorded response for a prompt key."""


class TokenBudgetExceededError(EaselError):
    """The session's cumulative completion budget ran out."""


class MissingVariableError(EaselError):
    """A prompt template placeholder had no value at render time."""


class FormatError(EaselError):
    """A completion did not follow the required output grammar."""


class NoSubtasksFoundError(FormatError):
    """A plan completion contained no numbered subtask lines."""


class NoQuestionsFoundError(FormatError):
    """A question completion contained no usable yes-or-no questions."""


class UnknownToolNameError(FormatError):
    """A plan line referenced a tool that is not in the registry.

    Carries the offending line so the caller can decide to re-prompt.
    """

    def __init__(self, message: str, line: str = ""):
        super().__init__(message)
        self.line = line


class PlanParseFailureError(EaselError):
    """Plan parsing failed even after the single allowed re-prompt."""


class QuestionParseFailureError(EaselError):
    """Question generation failed even after the single allowed re-prompt."""


# --- orchestration ------------------------------------------------------


class ConfigError(EaselError):
    """A session or CLI configuration value is out of range or unknown."""


class SessionAbortedError(EaselError):
    """Every agent failed every subtask and no fallback result exists."""


class SchemaVersionMismatchError(EaselError):
    """A persisted transcript was written by an incompatible version."""


class TranscriptLintError(EaselError):
    """A transcript's event stream violates the round structure."""


class ReplayDivergenceError(EaselError):
    """Re-execution of a recorded session produced different results."""


# --- bench --------------------------------------------------------------


class SearchBudgetExceededError(EaselError):
    """The planning oracle hit its node cap before finding a solution."""
