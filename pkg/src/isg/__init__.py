"""Zero-sum differential games with symmetric incomplete information and signal revelation."""

from .complete_info import (
    GridConfig,
    ValueGrid,
    backup,
    hamiltonian_lower,
    hamiltonian_table,
    hamiltonian_upper,
    isaacs_gap,
    solve_value,
    value_residual,
)
from .dynamics import (
    ControlSequence,
    HittingResult,
    HorizonExhausted,
    Trajectory,
    flow_step,
    hitting_bound,
    hitting_time,
    simulate,
)
from .extended import (
    AtomMap,
    CovectorField,
    DPPPreconditionError,
    diagnostic_report,
    dpp_residual,
    extended_value,
    hjb_residual,
    in_O,
    measure_gradient,
    script_hamiltonian,
)
from .game_model import (
    AssumptionError,
    ControlGrid,
    GameSpec,
    builtin_scenarios,
    get_scenario,
    load_scenario,
    scenario_from_dict,
    scenario_hash,
    validate_spec,
)
from .incomplete import (
    BeliefGame,
    BeliefState,
    GameValueResult,
    advance_belief,
    game_value,
    lower_value,
    oracle_tree_value,
    upper_value,
    value_of_dirac,
    w2_stability_probe,
)
from .measures import DiscreteMeasure, pushforward, quantize, transport_plan, w2_distance
from .payoff import PayoffResult, auxiliary_cost, discounted_cost, truncation_horizon
