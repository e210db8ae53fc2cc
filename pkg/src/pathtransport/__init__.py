"""Numerical toolkit for transports along paths on manifolds with a connection.

Computes transport matrices, displacement and deviation vectors, torsion
and curvature, and integrates and checks the second-order equations the
deviation vector satisfies, with independent brute-force oracles for every
construction.
"""

__version__ = "0.1.0"

from .catalog import builtin_names, catalog_entries, make_manifold
from .curves import (
    Congruence,
    Curve,
    analytic_congruence,
    connect_geodesic,
    constant_curve,
    curve_from_expressions,
    geodesic_congruence,
    integrate_forced,
    integrate_geodesic,
    mixed_partial_residual,
    parametric_curve,
)
from .deviation import (
    DeviationScenario,
    JacobiState,
    basic_equation_residual,
    deviation_identity_residual,
    deviation_vector,
    deviation_vector_matrix_form,
    equation_of_motion_rhs,
    force_difference_term,
    infinitesimal_deviation,
    infinitesimal_deviation_equation_residual,
    integrate_geodesic_deviation,
    lambda_factor,
    validate_scenario,
)
from .displacement import (
    DisplacementVector,
    composition_residual,
    coordinate_recovery_check,
    displacement_vector,
    infinitesimal_displacement,
)
from .errors import (
    BasePointMismatchError,
    ConfigError,
    CurveTruncationError,
    DegenerateScalingError,
    DomainError,
    ExpressionError,
    GeometryError,
    ScenarioConsistencyError,
    ShootingError,
    StencilError,
)
from .expressions import differentiate, evaluate, parse_expression, to_string
from .geometry import (
    ConnectionManifold,
    ExpressionConnection,
    TangentVector,
    VectorField,
    covariant_derivative,
    curvature_tensor,
    expression_vector_field,
    manifold_from_expressions,
    torsion_tensor,
)
from .multipoint import (
    MultiPointTensor,
    contract,
    multipoint_covariant_derivative,
    multipoint_second_derivative,
    tensor_product,
)
from .oracles import (
    OracleEstimate,
    RefinementReport,
    fd_second_deviation,
    fit_order,
    holonomy_curvature,
    measure_order,
    two_geodesic_separation,
)
from .scenarios import (
    ForcedFamily,
    congruence_scenario,
    forced_family_scenario,
    geodesic_scenario,
)
from .transport import (
    TransportLaw,
    TransportMatrix,
    compose_check,
    euclidean_transport_law,
    i_path_residual,
    parallel_transport_law,
    transport_matrix,
    transport_vector,
)
