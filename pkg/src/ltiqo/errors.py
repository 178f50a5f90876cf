"""Exception types raised across the package."""


class LtiqoError(ValueError):
    """Base class for all errors raised by :mod:`ltiqo`."""


class DimensionError(LtiqoError):
    """Matrix shapes are inconsistent with the declared system dimensions."""


class StructureError(LtiqoError):
    """A matrix violates a required structural property (symmetry, definiteness, ...)."""


class UnstableSystemError(LtiqoError):
    """An operation that needs an asymptotically stable system got an unstable one."""


class ResolventSingularError(LtiqoError):
    """The shift ``s`` is (numerically) an eigenvalue of ``A``."""


class UnsupportedStructureError(LtiqoError):
    """More than one output depends quadratically on the state."""


class DegenerateSingularValueError(LtiqoError):
    """A singular value is zero or not simple, so it is not differentiable."""


class LayoutError(LtiqoError):
    """A parameter vector does not match its layout or scheme."""
