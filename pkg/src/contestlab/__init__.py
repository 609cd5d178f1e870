"""contestlab: equilibrium laboratory for dynamic multi-battle contests."""

from .automaton import (
    ContestAutomaton,
    ContestSpec,
    automaton_from_dict,
    automaton_to_dict,
    build_best_of,
    build_consecutive_win,
    build_extension,
    build_mk1,
    build_single_battle,
    build_tug_of_war,
    check_exchangeable,
    check_symmetric,
    default_exchangeability_depth,
    isomorphic,
    min_length,
    minimize,
)
from .errors import (
    ContestError,
    ConvergenceError,
    CyclicAutomatonError,
    DegenerateChainError,
    DomainError,
    StructureError,
    UnsupportedKindError,
    ValidationError,
)
from .incumbency import (
    MK1,
    IncumbencyReport,
    IncumbencySpec,
    TowHeadStart,
    bias_ratio,
    incumbency_transient_dominance,
    log_bias_ratio,
    solve_incumbency,
    upset_probability,
)
from .metrics import (
    DissipationReport,
    SweepTable,
    TransientDominanceReport,
    advantage_profile,
    balanced_gain_ratio,
    extrapolate_supremum,
    rent_dissipation,
    sweep,
    transient_dominance,
    transient_dominance_auto,
    win_probabilities,
)
from .sim import SimulationSummary, compare_sim_analytic, simulate
from .solver import (
    StateValues,
    ValueSolution,
    residual,
    solve,
    solve_consecutive_closed,
    solve_cyclic,
    solve_finite,
    solve_tow_closed,
)
from .success import (
    BattleEquilibrium,
    Noisy,
    RatioForm,
    Serial,
    SuccessFunction,
    Tullock,
    augmented_gain,
    eval_gamma,
    parse_sf,
    phi,
    psi,
    psi_inverse,
    solve_battle,
)

__version__ = "0.1.0"
