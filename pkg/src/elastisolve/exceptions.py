"""Exception types shared across the package."""


class NonPhysicalStateError(ValueError):
    """Raised when a deformation state is not admissible (det F <= 0, overflow)."""


class DegenerateFiberError(ValueError):
    """Raised when a fiber is mapped to the zero vector."""


class BreakdownError(RuntimeError):
    """Raised when GMRES hits a (non-lucky) Arnoldi breakdown."""


class SetupError(RuntimeError):
    """Raised when a preconditioner cannot be built from the given operator."""
