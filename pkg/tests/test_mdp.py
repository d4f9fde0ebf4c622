import numpy as np
import pytest
import scipy.sparse as sp

from compplan.algebra import PolicyWeights, expectation_model, value_model
from compplan.domains import hanoi_mdp, nine_rooms_mdp, random_mdp
from compplan.mdp import (
    ConfigurationError,
    DivergenceError,
    Mdp,
    SolveConfig,
    SubgoalSpec,
    action_models,
    evaluate_option_model,
    evaluate_policy_model,
    floor_model,
    true_value_model,
)


def two_state():
    """State 0 steps to state 1 earning 1; state 1 is an exit worth 0."""
    return Mdp(
        n=2,
        gamma=0.5,
        action_ids=["go"],
        trans=[sp.csr_array(np.array([[0.0, 0.5], [0.0, 0.0]]))],
        reward=[np.array([1.0, 0.0])],
        available=[np.array([True, True])],
        exit_states=[1],
    )


def test_two_state_policy_value():
    mdp = two_state()
    pi = PolicyWeights.deterministic([0, 0], 1)
    for method in ("iterate", "solve"):
        v = evaluate_policy_model(action_models(mdp), pi, method=method)
        assert np.allclose(v.reward, [1.0, 0.0])


def test_validation_errors():
    good = two_state()
    with pytest.raises(ConfigurationError):
        Mdp(n=2, gamma=0.5, action_ids=["go"], trans=[sp.csr_array(np.array([[0, 0.9], [0, 0]]))],
            reward=good.reward, available=good.available, exit_states=[1])
    with pytest.raises(ConfigurationError):
        Mdp(n=2, gamma=0.5, action_ids=["go"], trans=[sp.csr_array(np.array([[0, 0.5], [0.5, 0]]))],
            reward=good.reward, available=good.available, exit_states=[1])
    with pytest.raises(ConfigurationError):
        Mdp(n=2, gamma=0.5, action_ids=["go"], trans=good.trans, reward=good.reward,
            available=[np.array([False, True])], exit_states=[1])
    with pytest.raises(ConfigurationError):
        Mdp(n=2, gamma=1.5, action_ids=["go"], trans=good.trans, reward=good.reward,
            available=good.available)


def test_exit_rows_are_zero_in_action_models():
    mdp = hanoi_mdp(2)
    goal = mdp.exit_states[0]
    for m in action_models(mdp):
        assert m.trans[[goal]].nnz == 0 and m.reward[goal] == 0


@pytest.mark.parametrize("mdp", [two_state(), hanoi_mdp(2, stochastic=True), nine_rooms_mdp(2), random_mdp(5, seed=3)],
                         ids=["two-state", "hanoi", "rooms", "random"])
def test_json_round_trip(mdp, tmp_path):
    path = tmp_path / "m.json"
    mdp.save(path)
    back = Mdp.load(path)
    assert back.n == mdp.n and back.gamma == mdp.gamma and back.action_ids == mdp.action_ids
    assert list(back.exit_states) == list(mdp.exit_states) and back.start == mdp.start
    for a, b in zip(action_models(mdp), action_models(back)):
        assert np.array_equal(a.reward, b.reward)
        assert (a.trans != b.trans).nnz == 0
        assert np.array_equal(a.row_available(), b.row_available())


def test_true_value_model_is_below_every_value():
    mdp = random_mdp(6, seed=1)
    floor = true_value_model(mdp).reward
    assert np.allclose(floor, floor[0])
    rng = np.random.default_rng(0)
    for _ in range(20):
        pi = PolicyWeights.deterministic(rng.integers(2, size=6), 2)
        v = evaluate_policy_model(action_models(mdp), pi, method="solve").reward
        assert np.all(v > floor)
    assert np.allclose(floor_model(action_models(mdp)).reward, floor)


def test_true_value_model_rejects_undiscounted_gains():
    mdp = Mdp(n=1, gamma=1.0, action_ids=["stay"], trans=[sp.csr_array(np.array([[1.0]]))],
              reward=[np.array([1.0])], available=[np.array([True])])
    with pytest.raises(ConfigurationError):
        true_value_model(mdp)


def test_improper_policy_diverges():
    mdp = Mdp(n=1, gamma=1.0, action_ids=["stay"], trans=[sp.csr_array(np.array([[1.0]]))],
              reward=[np.array([-1.0])], available=[np.array([True])])
    pi = PolicyWeights.deterministic([0], 1)
    with pytest.raises(DivergenceError):
        evaluate_policy_model(action_models(mdp), pi, SolveConfig(max_iters=1000))
    with pytest.raises(DivergenceError):
        evaluate_policy_model(action_models(mdp), pi, method="solve")


def test_policy_model_of_a_policy_model_is_itself():
    mdp = random_mdp(5, seed=2)
    pi = PolicyWeights.deterministic([0, 1, 0, 1, 1], 2)
    v = evaluate_policy_model(action_models(mdp), pi, method="solve")
    again = evaluate_policy_model([v], PolicyWeights.deterministic(np.zeros(5, int), 1))
    assert np.allclose(again.reward, v.reward, atol=1e-9)


def test_uniform_expectation_matches_policy_evaluation():
    mdp = random_mdp(2, seed=4)
    base = action_models(mdp)
    w = PolicyWeights.uniform(base)
    e = expectation_model(w, base)
    direct = np.linalg.solve(np.eye(2) - e.dense(), e.reward)
    assert np.allclose(evaluate_policy_model(base, w, method="solve").reward, direct)


@pytest.mark.parametrize("seed", range(5))
def test_option_evaluation_iterate_matches_solve(seed):
    mdp = random_mdp(6, seed=seed)
    base = action_models(mdp)
    rng = np.random.default_rng(seed)
    pi = PolicyWeights(rng.dirichlet(np.ones(2), size=6))
    beta = rng.random(6)
    cfg = SolveConfig(eps=1e-12)
    a = evaluate_option_model(base, pi, beta, cfg, method="iterate")
    b = evaluate_option_model(base, pi, beta, cfg, method="solve")
    assert np.allclose(a.reward, b.reward, atol=1e-9)
    assert np.allclose(a.dense(), b.dense(), atol=1e-9)


def test_option_evaluation_boundaries():
    mdp = random_mdp(4, seed=7)
    base = action_models(mdp)
    pi = PolicyWeights.deterministic([0, 1, 1, 0], 2)
    stop = evaluate_option_model(base, pi, np.ones(4))
    e = expectation_model(pi, base)
    assert np.allclose(stop.reward, e.reward) and np.allclose(stop.dense(), e.dense())
    never = evaluate_option_model(base, pi, np.zeros(4), method="solve")
    assert np.abs(never.dense()).max() < 1e-12
    v = evaluate_policy_model(base, pi, method="solve")
    assert np.allclose(never.reward, v.reward, atol=1e-8)


def test_option_hitting_time_discount():
    gamma = 0.9
    # 0 -> 1 -> 2 -> 3 (exit); stop on reaching state 2
    t = np.zeros((4, 4))
    t[0, 1] = t[1, 2] = t[2, 3] = gamma
    mdp = Mdp(n=4, gamma=gamma, action_ids=["right"], trans=[sp.csr_array(t)],
              reward=[np.zeros(4)], available=[np.ones(4, bool)], exit_states=[3])
    beta = np.array([0.0, 0.0, 1.0, 0.0])
    m = evaluate_option_model(action_models(mdp), PolicyWeights.deterministic(np.zeros(4, int), 1), beta)
    assert np.allclose(m.dense()[0], [0, 0, gamma**2, 0])


def test_subgoal_spec_checks():
    with pytest.raises(ValueError):
        SubgoalSpec("bad", action_models(two_state())[0])
    with pytest.raises(ValueError):
        SubgoalSpec("bad", value_model([0.0, 0.0]), initiation=[5])
    sg = SubgoalSpec("ok", value_model([0.0, 0.0, 0.0]), initiation=[2, 0, 2])
    assert list(sg.rows()) == [0, 2]
