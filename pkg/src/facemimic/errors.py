"""Exception types shared across the package."""


class FaceMimicError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(FaceMimicError):
    """Shape or length of an input does not match what the operation expects."""


class RangeError(FaceMimicError):
    """A scalar argument is outside its documented range."""


class DegenerateRangeError(RangeError):
    """A per-landmark coordinate range has zero width where a positive width is required."""

    def __init__(self, landmark_index, axis):
        self.landmark_index = landmark_index
        self.axis = axis
        super().__init__(
            f"degenerate range for landmark {landmark_index}, axis {'xy'[axis]}: max == min"
        )


class NumericError(FaceMimicError):
    """A tensor stopped being finite (NaN or Inf)."""


class StateError(FaceMimicError):
    """Operation called before the state it relies on exists (e.g. backward without forward)."""


class TrainingError(FaceMimicError):
    """Training diverged or failed to produce a learning signal."""


class DatasetError(FaceMimicError):
    """A dataset directory is missing, inconsistent, or corrupt."""


class ChecksumError(DatasetError):
    """A stored file does not match the checksum recorded in the manifest."""

    def __init__(self, path, expected, actual):
        self.path = str(path)
        super().__init__(f"checksum mismatch for {path}: expected {expected}, got {actual}")


class RigMismatchError(DatasetError):
    """Dataset was collected on a different rig than the caller pinned."""
