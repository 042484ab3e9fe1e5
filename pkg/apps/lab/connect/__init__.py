"""連結軌道・指数二分性フレーム・横断性判定・構成的摂動。"""

from .dichotomy import (
    DichotomyFrames,
    GreenSolution,
    OperatorDichotomy,
    default_tau,
    dichotomy_frames,
    dichotomy_projections,
    dichotomy_roughness_probe,
    frames_from_operators,
    frames_to_json,
    green_function_solve,
    step_operators,
)
from .orbits import (
    ConnectingOrbit,
    Endpoint,
    InvariantSide,
    distance_to_orbit,
    h_levels,
    local_invariant_basis,
    shoot_connection,
    unit_directions,
)
from .perturb import (
    adjoint_solution,
    bump_perturbation,
    bump_value,
    constant_shift,
    functional_transversality_integral,
    hyperbolic_shift_search,
    perturb_to_hyperbolic,
)
from .transversality import automatic_transversality_check, index_witness, transversality_test

__all__ = [
    "ConnectingOrbit",
    "DichotomyFrames",
    "Endpoint",
    "GreenSolution",
    "InvariantSide",
    "OperatorDichotomy",
    "adjoint_solution",
    "automatic_transversality_check",
    "bump_perturbation",
    "bump_value",
    "constant_shift",
    "default_tau",
    "dichotomy_frames",
    "dichotomy_projections",
    "dichotomy_roughness_probe",
    "distance_to_orbit",
    "frames_from_operators",
    "frames_to_json",
    "functional_transversality_integral",
    "green_function_solve",
    "h_levels",
    "hyperbolic_shift_search",
    "index_witness",
    "local_invariant_basis",
    "perturb_to_hyperbolic",
    "shoot_connection",
    "step_operators",
    "transversality_test",
    "unit_directions",
]
