"""Exception types shared across the pipeline.

The CLI prints the class name of a caught exception as a machine-parsable
prefix (``error[ClassName]: message``), so class names are part of the
public contract and stay stable.
"""


class PipelineError(Exception):
    """Base class for every failure the pipeline raises on purpose."""


# --- dataset ingest ---------------------------------------------------------

class MissingSplit(PipelineError):
    """A required train/ or test/ subfolder is absent."""


class EmptyClass(PipelineError):
    """A class folder exists but holds zero images."""


# --- synthetic corpus -------------------------------------------------------

class NonEmptyOutput(PipelineError):
    """Refusing to generate into a directory that already has content."""


# --- preprocessing ----------------------------------------------------------

class DecodeError(PipelineError):
    """An image file failed to decode after passing the integrity scan."""


class ShapeError(PipelineError):
    """An array or batch has the wrong dimensionality."""


# --- models / training ------------------------------------------------------

class WeightsUnavailable(PipelineError):
    """Pretrained weights were requested but are not in the local cache."""


class EmptyTrainSplit(PipelineError):
    """No valid training records to fit on."""


class NonFiniteLoss(PipelineError):
    """Training loss became NaN or infinite."""


class SpecMismatch(PipelineError):
    """A checkpoint was produced for a different backbone kind or scale."""


class CorruptCheckpoint(PipelineError):
    """A checkpoint file is missing, unreadable, or not a known format."""


# --- fusion -----------------------------------------------------------------

class NegativeWeight(PipelineError):
    """Ensemble weights must be nonnegative."""


class AllZeroWeights(PipelineError):
    """At least one ensemble weight must be positive."""


class LengthMismatch(PipelineError):
    """Paired sequences (scores/weights, predictions/labels) differ in length."""


class MemberMissing(PipelineError):
    """An ensemble member has no matching model."""


class LabelMismatch(PipelineError):
    """Logit rows and labels do not line up."""


class DegenerateSplit(PipelineError):
    """Weight optimization needs both classes present in the labels."""


# --- metrics ----------------------------------------------------------------

class EmptyInput(PipelineError):
    """An operation that needs at least one record got none."""
