"""easel: a round-based multi-agent image editing engine.

Several editor agents plan and execute tool pipelines against the same
editing request; a critic questions each result, routes per-subtask
feedback back to the planners, picks a round winner, and stops the
session once every content check passes.  Everything the engine does is
deterministic given a seed and a recorded set of model responses, which
makes whole sessions replayable byte for byte.
"""

__version__ = "0.1.0"

from .errors import EaselError

__all__ = ["EaselError", "__version__"]
