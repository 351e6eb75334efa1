"""Exception hierarchy.

Errors are grouped by the CLI exit code they map to: configuration errors
exit 1, data errors exit 2, runtime/training failures exit 3.
"""


class PPSAMError(Exception):
    exit_code = 3


class ConfigError(PPSAMError, ValueError):
    exit_code = 1


class DataError(PPSAMError):
    exit_code = 2


class RuntimeFailure(PPSAMError):
    exit_code = 3


# geometry
class EmptyMask(DataError):
    """Mask has no foreground pixel, so no box can be extracted."""


class DegenerateBox(DataError):
    """Box has zero area (e.g. a sub-pixel object after rescaling)."""


# metrics
class ShapeMismatch(PPSAMError, ValueError):
    exit_code = 3


class EmptyRuns(PPSAMError, ValueError):
    exit_code = 3


# data
class MissingPair(DataError):
    def __init__(self, images_without_mask, masks_without_image):
        self.images_without_mask = sorted(images_without_mask)
        self.masks_without_image = sorted(masks_without_image)
        super().__init__(
            "unmatched files: images without mask %s; masks without image %s"
            % (self.images_without_mask, self.masks_without_image)
        )


class EmptyDataset(DataError):
    pass


class UnknownId(DataError):
    pass


class OverlappingSplit(DataError):
    pass


class InsufficientData(DataError):
    pass


class CorruptFile(DataError):
    pass


# segmenter / training / evaluation
class InvalidPrompt(RuntimeFailure, ValueError):
    pass


class UnsupportedBackend(RuntimeFailure):
    pass


class AllFrozen(ConfigError):
    pass


class EmptyTrainSet(DataError):
    pass


class TrainingDiverged(RuntimeFailure):
    pass


class EmptyTestSet(DataError):
    pass


class UnknownKind(ConfigError):
    pass


class MissingExperiment(DataError):
    pass
