"""Exception hierarchy."""


class GeometryError(Exception):
    """Base class for all errors raised by the toolkit."""


class DomainError(GeometryError):
    """A point lies outside the open domain of its chart."""


class SingularMetric(GeometryError):
    """The metric is not invertible to working precision."""


class DegenerateFrame(GeometryError):
    """Gram-Schmidt met a (numerically) dependent vector."""


class ReebNotUnit(GeometryError):
    pass


class ReebNotKilling(GeometryError):
    pass


class EvenDimension(GeometryError):
    """Contact checks need an odd-dimensional manifold."""


class NoConvergence(GeometryError):
    pass


class EmptyLevelSet(GeometryError):
    """Some moment-map component has a definite sign on the slice."""


class NonFreeAction(GeometryError):
    """Fundamental fields are linearly dependent at a level-set point."""


class ChartOverlap(GeometryError):
    """Orbit alignment inside a slice chart failed."""


class DimensionTooSmall(GeometryError):
    pass


class ExpressionError(GeometryError, ValueError):
    """Malformed expression or configuration."""
