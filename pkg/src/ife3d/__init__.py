"""Trilinear immersed finite elements for 3-D elliptic interface problems
on interface-independent Cartesian meshes."""

from .assembly import (
    GlobalIFESpace,
    SchemeParameters,
    SparseSystem,
    apply_dirichlet,
    assemble,
    build_space,
    solve,
)
from .exceptions import (
    ConfigError,
    DecompositionError,
    DegenerateGeometryError,
    IFEError,
    MeshResolutionError,
    SolverError,
)
from .fields import Field
from .geometry import (
    InterfaceElementData,
    build_interface_data,
    classify_case,
    geometry_diagnostics,
)
from .harness import (
    ErrorReport,
    StudyResult,
    compute_errors,
    convergence_study,
    pairwise_rate,
)
from .ife import (
    LocalIFEBasis,
    build_shape_functions,
    extension_apply,
    gamma_delta,
    lagrange_interpolate,
)
from .mesh import (
    BoxDomain,
    CartesianMesh,
    EntityClassification,
    build_mesh,
    classify_entities,
)
from .problems import (
    BUILTIN_NAMES,
    BenchmarkProblem,
    builtin_problem,
    check_source_consistency,
    plane_problem,
)
from .quadrature import (
    CutDecomposition,
    decompose_cut_element,
    integrate_element,
    integrate_face,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES",
    "BenchmarkProblem",
    "BoxDomain",
    "CartesianMesh",
    "ConfigError",
    "CutDecomposition",
    "DecompositionError",
    "DegenerateGeometryError",
    "EntityClassification",
    "ErrorReport",
    "Field",
    "GlobalIFESpace",
    "IFEError",
    "InterfaceElementData",
    "LocalIFEBasis",
    "MeshResolutionError",
    "SchemeParameters",
    "SolverError",
    "SparseSystem",
    "StudyResult",
    "apply_dirichlet",
    "assemble",
    "build_interface_data",
    "build_mesh",
    "build_shape_functions",
    "build_space",
    "builtin_problem",
    "check_source_consistency",
    "classify_case",
    "classify_entities",
    "compute_errors",
    "convergence_study",
    "decompose_cut_element",
    "extension_apply",
    "gamma_delta",
    "geometry_diagnostics",
    "integrate_element",
    "integrate_face",
    "lagrange_interpolate",
    "pairwise_rate",
    "plane_problem",
    "solve",
]
