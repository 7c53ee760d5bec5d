"""Reward optimisation in state-action space for memoryless POMDP policies."""
from .algorithm import Certificate, RosaResult, recover_observation_policy, rosa_solve
from .baselines import (BcpResult, DpoResult, GradientOptions, bcp_solve, dpo_gradient,
                        dpo_solve, softmax_policy)
from .constraints import (ConstraintSystem, LinearEquality, QuadraticEquality,
                          build_constraint_system, count_constraints, residuals)
from .maze import Maze, MazePomdp, blind_controller, build_maze_pomdp, generate_maze
from .nlp import NlpProblem, NlpSolution, SolveOptions, check_kkt, solve
from .pomdp import (AssumptionViolation, InvalidInput, PomdpModel, condition_frequency,
                    reward_of_policy, state_action_frequency, uniform_policy)

__all__ = [
    "AssumptionViolation", "BcpResult", "Certificate", "ConstraintSystem", "DpoResult",
    "GradientOptions", "InvalidInput", "LinearEquality", "Maze", "MazePomdp", "NlpProblem",
    "NlpSolution", "PomdpModel", "QuadraticEquality", "RosaResult", "SolveOptions",
    "bcp_solve", "blind_controller", "build_constraint_system", "build_maze_pomdp",
    "check_kkt", "condition_frequency", "count_constraints", "dpo_gradient", "dpo_solve",
    "generate_maze", "recover_observation_policy", "residuals", "reward_of_policy",
    "rosa_solve", "softmax_policy", "solve", "state_action_frequency", "uniform_policy",
]
