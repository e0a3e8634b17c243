"""Error types raised by the mesh, geometry, and solver layers."""


class IFEError(Exception):
    """Base class for all package-specific errors."""


class MeshResolutionError(IFEError):
    """The mesh is too coarse for the interface it is asked to resolve.

    Raised when the level set crosses a single edge more than once, cuts
    more than two edges of one face, touches the domain boundary, or
    produces a vertex sign pattern outside the five resolvable cut
    configurations.
    """


class DegenerateGeometryError(IFEError):
    """A selected plane triangle or cut polygon collapsed to (near) zero area."""


class DecompositionError(IFEError):
    """Cut-element tetrahedralization failed positivity or volume conservation."""


class SolverError(IFEError):
    """Linear solver broke down or hit its iteration cap before converging."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConfigError(IFEError):
    """Malformed or contradictory run configuration."""
