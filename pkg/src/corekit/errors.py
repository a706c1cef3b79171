"""Exception hierarchy shared by all corekit modules.

Every error carries a stable machine-readable ``code`` so the CLI can
report failures in a way scripts can dispatch on.
"""

from __future__ import annotations


class CorekitError(Exception):
    """Base class for all corekit errors."""

    code = "error"


# --- raster / file I/O ------------------------------------------------------

class UnsupportedFormatError(CorekitError):
    code = "unsupported-format"


class CorruptImageError(CorekitError):
    code = "corrupt-image"


class InvalidMaskValueError(CorekitError):
    code = "invalid-mask-value"


# --- features ---------------------------------------------------------------

class TooFewSamplesError(CorekitError):
    code = "too-few-samples"


# --- embedding / clustering -------------------------------------------------

class DimensionError(CorekitError):
    code = "dimension-error"


class PerplexityTooLargeError(CorekitError):
    code = "perplexity-too-large"


class DuplicatePointsDegenerateError(CorekitError):
    code = "duplicate-points-degenerate"


class DisconnectedGraphError(CorekitError):
    code = "disconnected-graph"

    def __init__(self, message: str, components: list[list[int]] | None = None):
        super().__init__(message)
        self.components = components or []


class KOutOfRangeError(CorekitError):
    code = "k-out-of-range"


class DegenerateInputError(CorekitError):
    code = "degenerate-input"


# --- selection --------------------------------------------------------------

class UnknownClusterError(CorekitError):
    code = "unknown-cluster"


class InvalidBoxError(CorekitError):
    code = "invalid-box"


class InsufficientPoolError(CorekitError):
    code = "insufficient-pool"


class EmptyClusteringError(CorekitError):
    code = "empty-clustering"


class MissingScoreError(CorekitError):
    code = "missing-score"


# --- segmentation -----------------------------------------------------------

class DimensionMismatchError(CorekitError):
    code = "dimension-mismatch"


class SingleClassTrainingError(CorekitError):
    code = "single-class-training"


class ImageTooSmallError(CorekitError):
    code = "image-too-small"


# --- metrics ----------------------------------------------------------------

class EmptySampleError(CorekitError):
    code = "empty-sample"


class SubsetNotContainedError(CorekitError):
    code = "subset-not-contained"


# --- defects ----------------------------------------------------------------

class ImageSmallerThanPatchError(CorekitError):
    code = "image-smaller-than-patch"


class UnknownInstanceError(CorekitError):
    code = "unknown-instance"


class UnknownClassError(CorekitError):
    code = "unknown-class"


class UnmappedImageError(CorekitError):
    code = "unmapped-image"


class EmptyAggregatesError(CorekitError):
    code = "empty-aggregates"


# --- synthgen ---------------------------------------------------------------

class ConfigInfeasibleError(CorekitError):
    code = "config-infeasible"


# --- ledger -----------------------------------------------------------------

class TestTrainOverlapError(CorekitError):
    code = "test-train-overlap"
    __test__ = False  # keep pytest from collecting this as a test class


class MissingFileError(CorekitError):
    code = "missing-file"


class RoundOrderViolationError(CorekitError):
    code = "round-order-violation"


class DuplicateSelectionError(CorekitError):
    code = "duplicate-selection"


class SchemaVersionMismatchError(CorekitError):
    code = "schema-version-mismatch"


class HashMismatchError(CorekitError):
    code = "hash-mismatch"
