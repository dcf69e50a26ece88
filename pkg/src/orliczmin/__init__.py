"""Convex energy minimization with generalized Orlicz growth on 2-D meshes.

The library evaluates and certifies growth functions phi(x, t) (power,
variable exponent, double phase, sampled), builds their ball regularizations
and doubling truncations, minimizes the Dirichlet gradient energy on
crossed-triangle meshes, and verifies Harnack, log-gradient and zero-order
(Caccioppoli) estimates on the computed minimizers.
"""

from .conditions import (
    A0Result,
    A1Result,
    BallRegion,
    GrowthEnvelope,
    GrowthResult,
    PointsRegion,
    ShapeRegion,
    caccioppoli_constant,
    check_a0,
    check_a1,
    check_growth,
)
from .mesh import (
    TriangulatedDomain,
    build_annulus,
    build_disk,
    build_from_descriptor,
    build_square,
    read_field_csv,
    write_field_csv,
)
from .phi import (
    ConjugatePhi,
    DoublePhasePhi,
    PhiSpec,
    PowerPhi,
    SampledPhi,
    SpatialField,
    VariableExponentPhi,
    geometric_grid,
    phi_from_json,
)
from .regularize import (
    PsiRegularization,
    TruncatedPhi,
    TruncationParams,
    build_phi_lambda,
    build_psi,
)
from .solve import (
    ContinuationSchedule,
    DirichletProblem,
    SolveReport,
    SolverConfig,
    energy,
    energy_gradient,
    solve,
    solve_nondoubling,
)
from .spaces import (
    GradientField,
    ScalarField,
    TriangleField,
    gradient_field,
    luxemburg_norm,
    modular,
)
from .verify import (
    CaccioppoliParams,
    VerificationReport,
    bloch_integral,
    caccioppoli_check,
    harnack_quotient,
    monotonicity_check,
    random_bump_fields,
    sphere_oscillation,
    variational_residual,
)

__version__ = "0.1.0"
