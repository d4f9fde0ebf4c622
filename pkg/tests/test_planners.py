import numpy as np
import pytest
import scipy.sparse as sp

from compplan.algebra import PolicyWeights, expectation_model, value_model
from compplan.domains import chain_mdp, hanoi_mdp, hanoi_subgoals, random_mdp
from compplan.mdp import (
    Mdp,
    SubgoalSpec,
    action_models,
    evaluate_policy_model,
    true_value_model,
    true_value_subgoal,
)
from compplan.oracles import (
    best_beta_option_value,
    best_option_value,
    best_pi_option_value,
    option_value,
    small_mdps,
    value_iteration,
)
from compplan.planners import (
    PlannerConfig,
    aopmi,
    greedy_update,
    oomi,
    optimality_iterate_beta_option,
    optimality_iterate_option,
    optimality_iterate_pi_option,
    optimality_iterate_value,
    residual,
)

EPS = 1e-10


def two_state():
    return Mdp(n=2, gamma=0.5, action_ids=["go"], trans=[sp.csr_array(np.array([[0.0, 0.5], [0.0, 0.0]]))],
               reward=[np.array([1.0, 0.0])], available=[np.ones(2, bool)], exit_states=[1])


def test_two_state_value_iteration_counts():
    base = action_models(two_state())
    v, rep = optimality_iterate_value(base, PlannerConfig(eps=1e-9, count_mode="recompute"))
    assert np.allclose(v.reward, [1.0, 0.0]) and rep.iterations == 3
    _, rep = optimality_iterate_value(base, PlannerConfig(eps=1e-9))
    assert rep.iterations == 2 and rep.backups_total == 4


@pytest.mark.parametrize("N,iters", [(1, 2), (3, 8), (5, 32)])
def test_hanoi_value_iteration_counts(N, iters):
    v, rep = optimality_iterate_value(action_models(hanoi_mdp(N)), PlannerConfig(exact=True))
    assert rep.iterations == iters and rep.backups_per_state == iters
    assert v.reward[0] == -(2**N - 1)


@pytest.mark.parametrize("seed", range(4))
def test_value_iteration_matches_oracle(seed):
    mdp = random_mdp(8, num_actions=3, seed=seed)
    v, rep = optimality_iterate_value(action_models(mdp), PlannerConfig(eps=EPS))
    assert rep.converged
    assert np.abs(v.reward - value_iteration(mdp)).max() <= 10 * EPS / (1 - mdp.gamma)


def test_value_iteration_is_monotone_from_the_floor():
    mdp = random_mdp(10, seed=11)
    base = action_models(mdp)
    prev = true_value_model(mdp).reward
    for k in range(1, 30):
        v, _ = optimality_iterate_value(base, PlannerConfig(max_iters=k))
        assert np.all(v.reward >= prev - 1e-12)
        prev = v.reward


def test_greedy_action_attains_the_fixed_point():
    mdp = random_mdp(10, num_actions=3, seed=5)
    base = action_models(mdp)
    v, _ = optimality_iterate_value(base, PlannerConfig(eps=EPS))
    q = np.column_stack([m.reward + m.trans @ v.reward for m in base])
    assert np.abs(q.max(axis=1) - v.reward).max() <= 10 * EPS / (1 - mdp.gamma)


def test_nonconvergence_is_reported():
    v, rep = optimality_iterate_value(action_models(hanoi_mdp(3)), PlannerConfig(max_iters=3))
    assert not rep.converged and rep.iterations == 3


def test_option_for_true_value_never_stops():
    mdp = random_mdp(6, seed=8)
    base = action_models(mdp)
    g = true_value_subgoal(mdp)
    m, _ = optimality_iterate_option(base, g, PlannerConfig(eps=EPS))
    v, _ = optimality_iterate_value(base, PlannerConfig(eps=EPS))
    assert np.abs(m.reward - v.reward).max() <= 1e-8
    assert np.abs(m.dense()).max() <= 1e-8


def test_single_absorbing_model_settles_immediately():
    base = [value_model([1.0, 2.0, 3.0])]
    g = SubgoalSpec("g", value_model([5.0, 0.0, -1.0]))
    m, rep = optimality_iterate_option(base, g, PlannerConfig(count_mode="recompute"))
    assert rep.iterations == 2
    assert np.allclose(m.reward, [1.0, 2.0, 3.0])


def test_beta_option_boundaries():
    mdp = random_mdp(6, seed=9)
    base = action_models(mdp)
    cfg = PlannerConfig(eps=EPS)
    g = true_value_subgoal(mdp)
    m, _ = optimality_iterate_beta_option(base, np.zeros(6), g, cfg)
    v, _ = optimality_iterate_value(base, cfg)
    assert np.abs(m.reward - v.reward).max() <= 1e-8
    target = SubgoalSpec("t", value_model(np.arange(6.0)))
    m, _ = optimality_iterate_beta_option(base, np.ones(6), target, cfg)
    q = np.column_stack([b.reward + b.trans @ target.g.reward for b in base])
    assert np.allclose(option_value(m, target.g.reward), q.max(axis=1))


def test_pi_option_boundaries():
    mdp = random_mdp(6, seed=10)
    base = action_models(mdp)
    cfg = PlannerConfig(eps=EPS)
    pi = PolicyWeights.deterministic([0, 1, 0, 1, 0, 1], 2)
    m, _ = optimality_iterate_pi_option(base, pi, true_value_subgoal(mdp), cfg)
    vpi = evaluate_policy_model(base, pi, method="solve")
    assert np.abs(m.reward - vpi.reward).max() <= 1e-8
    big = SubgoalSpec("k", value_model(np.full(6, 1e6)))
    m, _ = optimality_iterate_pi_option(base, pi, big, cfg)
    step = expectation_model(pi, base)
    assert np.allclose(m.reward, step.reward) and np.allclose(m.dense(), step.dense())


@pytest.mark.parametrize("mdp", list(small_mdps(2, 2, limit=20, seed=1)) + list(small_mdps(3, 1, limit=10, seed=2)))
def test_option_solvers_match_enumeration(mdp):
    base = action_models(mdp)
    cfg = PlannerConfig(eps=1e-12)
    rng = np.random.default_rng(mdp.n)
    g = rng.choice([-1.0, 0.0, 1.0], size=mdp.n)
    spec = SubgoalSpec("g", value_model(g))
    m, _ = optimality_iterate_option(base, spec, cfg)
    assert np.abs(option_value(m, g) - best_option_value(base, g)).max() <= 1e-8
    beta = rng.choice([0.0, 1.0], size=mdp.n)
    m, _ = optimality_iterate_beta_option(base, beta, spec, cfg)
    assert np.abs(option_value(m, g) - best_beta_option_value(base, beta, g)).max() <= 1e-8
    pi = PolicyWeights.deterministic(rng.integers(len(base), size=mdp.n), len(base))
    m, _ = optimality_iterate_pi_option(base, pi, spec, cfg)
    assert np.abs(option_value(m, g) - best_pi_option_value(base, pi, g)).max() <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_oomi_true_value_matches_oracle(seed):
    mdp = random_mdp(12, num_actions=3, seed=seed)
    models, rep = oomi(action_models(mdp), [true_value_subgoal(mdp)], PlannerConfig(eps=EPS))
    assert rep.converged
    assert np.abs(models[0].reward - value_iteration(mdp)).max() <= 1e-8


def test_oomi_hanoi_three_discs():
    mdp = hanoi_mdp(3)
    models, rep = oomi(action_models(mdp), hanoi_subgoals(3, mdp=mdp), PlannerConfig(exact=True))
    assert rep.iterations == 4 and rep.converged
    assert np.array_equal(models[0].reward, value_iteration(mdp))
    assert rep.names[0] == "G-" and len(models) == 10


def test_oomi_squares_along_a_chain():
    mdp = chain_mdp(64)
    base = action_models(mdp)
    cfg = PlannerConfig(exact=True)
    _, rep = oomi(base, [true_value_subgoal(mdp)], cfg)
    _, flat = optimality_iterate_value(base, cfg)
    assert rep.iterations <= 9 and flat.iterations >= 64


def test_oomi_leaves_rows_outside_initiation_untouched():
    mdp = random_mdp(6, seed=3)
    base = action_models(mdp)
    sg = SubgoalSpec("local", value_model(np.arange(6.0)), initiation=[0, 1, 2])
    init = true_value_model(mdp)
    models, _ = oomi(base, [true_value_subgoal(mdp), sg], PlannerConfig(eps=EPS), init=init)
    assert np.array_equal(models[1].reward[3:], init.reward[3:])
    assert models[1].trans[[3, 4, 5]].nnz == 0


def test_oomi_partial_report_on_iteration_limit():
    mdp = hanoi_mdp(4)
    _, rep = oomi(action_models(mdp), hanoi_subgoals(4, mdp=mdp), PlannerConfig(max_iters=2))
    assert not rep.converged and len(rep.model_converged) == 13


def test_count_modes_differ_by_the_confirming_sweep():
    mdp = hanoi_mdp(3)
    sgs = hanoi_subgoals(3, mdp=mdp)
    _, a = oomi(action_models(mdp), sgs, PlannerConfig(exact=True))
    _, b = oomi(action_models(mdp), sgs, PlannerConfig(exact=True, count_mode="recompute"))
    assert b.iterations == a.iterations + 1
    assert b.backups_total == a.backups_total + 27 * len(sgs)


def test_aopmi_value_matches_oracle():
    mdp = hanoi_mdp(4)
    v, rep = aopmi(mdp, hanoi_subgoals(4, mdp=mdp), PlannerConfig(exact=True))
    assert np.array_equal(v.reward, value_iteration(mdp))
    assert rep.iterations == sum(rep.stage_iterations) and rep.converged
    assert rep.names[0] == "value" and len(rep.names) == 13


def test_greedy_update_keeps_incumbent_on_ties():
    mdp = random_mdp(4, seed=1)
    base = action_models(mdp)
    twins = [base[0], base[0]]
    g = np.zeros(4)
    old = true_value_model(mdp)
    inc = np.full(4, -1)
    greedy_update(twins, [None], g, old, np.arange(4), inc, PlannerConfig().tie)
    assert np.all(inc == 0)
    inc[:] = 1
    greedy_update(twins, [None], g, old, np.arange(4), inc, PlannerConfig().tie)
    assert np.all(inc == 1)


def test_residual_covers_both_blocks():
    a = value_model([0.0, 0.0])
    b = type(a)([0.0, 0.0], [[0.0, 0.25], [0.0, 0.0]])
    assert residual(a, b) == 0.25


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(eps=0)
    with pytest.raises(ValueError):
        PlannerConfig(max_iters=0)
    with pytest.raises(ValueError):
        PlannerConfig(count_mode="other")
