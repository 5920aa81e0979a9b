"""Exception types shared across the package."""


class PointsegError(Exception):
    """Base class for all pointseg errors."""


class ShapeMismatch(PointsegError, ValueError):
    """Raster or feature dimensions do not agree."""


class EmptySeeds(PointsegError, ValueError):
    """An operation requiring at least one seed point received none."""


class EmptySupport(PointsegError, ValueError):
    """A loss was evaluated on a label map with no usable pixels."""


class DegenerateImage(PointsegError, ValueError):
    """Color statistics are undefined (a channel has zero variance)."""


class DegenerateInput(PointsegError, ValueError):
    """Clustering input has fewer distinct vectors than clusters."""


class AmbiguousAssignment(PointsegError, ValueError):
    """Cluster roles cannot be assigned: nucleus and background tie on both criteria."""


class EmptyGroundTruth(PointsegError, ValueError):
    """An object-level metric needs at least one ground-truth object."""


class PackingFailure(PointsegError, RuntimeError):
    """Synthetic nucleus placement exhausted its rejection budget."""


class DataError(PointsegError, ValueError):
    """A file on disk is missing or malformed."""
