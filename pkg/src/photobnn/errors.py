"""Exception hierarchy shared by all photobnn modules."""


class PhotoBnnError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PhotoBnnError, ValueError):
    """An argument violates a documented precondition."""


class SolverError(PhotoBnnError):
    """A numeric search failed to find a bracket or a feasible point."""


class TableLookupError(PhotoBnnError, KeyError):
    """A value was requested for a datarate that has no published row."""

    def __str__(self):
        return Exception.__str__(self)


class PcaError(PhotoBnnError):
    """Illegal use of a photo-charge accumulator state."""


class PcaOverflowError(PcaError):
    """More '1's were offered than the accumulator had capacity left for.

    ``state`` holds the saturated state after the accepted part was
    accumulated; ``accepted`` and ``rejected`` split the offered count.
    """

    def __init__(self, state, accepted, rejected):
        super().__init__(
            f"PCA overflow: accepted {accepted} ones, rejected {rejected}"
        )
        self.state = state
        self.accepted = accepted
        self.rejected = rejected


class ModelParseError(ValidationError):
    """A model description could not be parsed or fails the shape chain."""

    def __init__(self, message, line=None, layer=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if layer is not None:
            where.append(f"layer {layer}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.layer = layer
