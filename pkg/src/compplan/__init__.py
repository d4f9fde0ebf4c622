"""Compositional planning with option models.

Models are reward-plus-transition blocks that compose like matrices; the
planners solve the model optimality equations by iteration, and
option-option model iteration (:func:`compplan.planners.oomi`) builds option
models out of each other.
"""
from .algebra import (
    DimensionError,
    ModelMatrix,
    PolicyWeights,
    Rasp,
    TieRule,
    apply,
    argmax_model,
    compose,
    expectation_model,
    identity_model,
    max_value_model,
    termination_model,
    value_model,
)
from .mdp import (
    ConfigurationError,
    DivergenceError,
    Mdp,
    SolveConfig,
    SubgoalSpec,
    action_models,
    evaluate_option_model,
    evaluate_policy_model,
    true_value_model,
    true_value_subgoal,
)
from .planners import (
    ExperimentReport,
    PlannerConfig,
    aopmi,
    oomi,
    optimality_iterate_beta_option,
    optimality_iterate_option,
    optimality_iterate_pi_option,
    optimality_iterate_value,
)

__version__ = "0.1.0"
