"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class CorpusFormatError(PipelineError):
    """Corpus file is missing, empty, or has a malformed line."""


class TrainingDiverged(PipelineError):
    """Training produced a non-finite loss."""


class CalibrationError(PipelineError):
    """Not enough clean frames to calibrate one or more limbs."""


class FrameAlignmentError(PipelineError):
    """Keypoint and depth streams do not line up."""


class SensorSelectionError(PipelineError):
    """No sensor in the registry satisfies the stated requirements."""


class LutFormatError(PipelineError):
    """Motion look-up-table file is malformed or violates joint limits."""


class PlanError(PipelineError):
    """A token sequence cannot be compiled into an execution plan."""
