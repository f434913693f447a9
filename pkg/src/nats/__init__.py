"""Linear-response transport of non-commuting charges between GGE reservoirs."""

from .gge import (
    GGEState,
    HermitianObservable,
    build_gge,
    expectation,
    squeezed_thermal_affinities,
    squeezing_from_mu,
)
from .transport import (
    CollisionSetup,
    InvalidSetupError,
    OnsagerReport,
    check_charge_preservation,
    collide,
    entropy_informational,
    entropy_split,
    onsager_casimir_check,
    onsager_finite_difference,
    onsager_sld,
    onsager_ycov,
    sld,
    time_reversed,
    y_covariance,
)
from .bosonic import (
    TruncationError,
    bosonic_point,
    closed_form_onsager,
    engine_analysis,
    heat_squeezing_onsager,
    thermo_coefficients,
)
from .simulate import Trajectory, fixed_point_check, run_collisions
from .qubits import qubit_setup

__version__ = "0.1.0"

__all__ = [
    "GGEState",
    "HermitianObservable",
    "build_gge",
    "expectation",
    "squeezed_thermal_affinities",
    "squeezing_from_mu",
    "CollisionSetup",
    "InvalidSetupError",
    "OnsagerReport",
    "check_charge_preservation",
    "collide",
    "entropy_informational",
    "entropy_split",
    "onsager_casimir_check",
    "onsager_finite_difference",
    "onsager_sld",
    "onsager_ycov",
    "sld",
    "time_reversed",
    "y_covariance",
    "TruncationError",
    "bosonic_point",
    "closed_form_onsager",
    "engine_analysis",
    "heat_squeezing_onsager",
    "thermo_coefficients",
    "Trajectory",
    "fixed_point_check",
    "run_collisions",
    "qubit_setup",
]
