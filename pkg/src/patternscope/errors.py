"""Exception hierarchy; the CLI maps each class to a distinct exit code."""


class PatternscopeError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(PatternscopeError):
    exit_code = 2


class StageDependencyError(PatternscopeError):
    """A stage was run before the stages it depends on."""

    exit_code = 3


class ParseError(PatternscopeError):
    """Malformed hierarchy document; carries the byte offset of the fault."""

    exit_code = 4

    def __init__(self, message, byte_offset=None):
        super().__init__(message)
        self.byte_offset = byte_offset


class SchemaError(PatternscopeError):
    """Well-formed document violating the node schema; names the node path."""

    exit_code = 4

    def __init__(self, message, node_path=""):
        super().__init__(message)
        self.node_path = node_path


class MetadataError(PatternscopeError):
    exit_code = 4


class CorpusError(PatternscopeError):
    exit_code = 4


class DegenerateCropError(PatternscopeError):
    """Crop rectangle collapsed to zero area after clamping."""

    exit_code = 5


class CropIOError(PatternscopeError):
    """Screenshot could not be read for cropping."""

    exit_code = 5


class EmptyHeatmapError(PatternscopeError):
    """Heatmap has no accumulated detections yet."""

    exit_code = 5


class SplitError(PatternscopeError):
    exit_code = 6


class TrainingFailure(PatternscopeError):
    """Training degenerated; carries a diagnostics dict."""

    exit_code = 6

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ScoreError(PatternscopeError):
    exit_code = 6


class ExternalScorerError(PatternscopeError):
    """External scorer protocol violation (exit status, count, or range)."""

    exit_code = 7


class StatsError(PatternscopeError):
    exit_code = 8


class ReportError(PatternscopeError):
    """Report rendering asked to draw from empty analysis input."""

    exit_code = 8


class SynthSpecError(PatternscopeError):
    exit_code = 9
