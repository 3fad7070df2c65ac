"""Computational toolkit for equilibria of absorbing positive recursive stochastic games."""

from .auxeval import AuxEvaluation, AuxParams, xi_monte_carlo, xi_values
from .chain import (
    Chain,
    ChainAnalysis,
    NonAbsorbingChainError,
    Part,
    PartStats,
    absorption_rate,
    chain_metric,
    close_pair_check,
    escape_probability,
    harmonic_payoffs,
    part_statistics,
    row_replacement_bound,
    taboo_probability,
)
from .fixed_point import (
    BestReplySets,
    FixedPointCandidate,
    SolverSettings,
    best_reply,
    diagnose_candidate,
    find_fixed_point,
)
from .game import (
    GameSpec,
    ProfileEvaluation,
    StrategyProfile,
    ValidationReport,
    evaluate_profile,
    induce_chain,
    validate_game,
)
from .gamefile import parse_game, parse_profile, read_game, read_profile, serialize_game
from .transforms import (
    ExitSystem,
    contract,
    exit_statistics_compare,
    polarize,
    relative_perturbation_bound,
    removal_bound_check,
    replace_transition,
    simplify,
)
from .verifier import (
    Certificate,
    best_response_value,
    certify_profile,
    excursion_check,
    simulate_test_and_punish,
    test_and_punish_gap,
    w_sum_check,
)
from .zerosum import ZeroSumTables, discounted_values, jump_function, solve_matrix_game

__version__ = "0.1.0"
