import numpy as np
import pytest

from compplan.domains import (
    Layout,
    chain_mdp,
    hanoi_mdp,
    hanoi_subgoals,
    nine_rooms_mdp,
    nine_rooms_subgoals,
    random_mdp,
)
from compplan.domains.hanoi import MOVES, goal_state, state_index
from compplan.mdp import ConfigurationError
from compplan.oracles import value_iteration


def legal_moves(mdp, s):
    return {MOVES[a] for a in range(mdp.num_actions) if mdp.available[a][s]}


def test_hanoi_one_disc():
    mdp = hanoi_mdp(1)
    assert mdp.n == 3 and mdp.gamma == 1.0
    for s in range(3):
        assert len(legal_moves(mdp, s)) == 2
    for a in range(mdp.num_actions):
        row = mdp.trans[a][[0]]
        if mdp.available[a][0]:
            assert row.nnz == 1 and row.data[0] == 1.0 and mdp.reward[a][0] == -1


def test_hanoi_two_discs_all_on_first_peg():
    mdp = hanoi_mdp(2)
    assert legal_moves(mdp, state_index([0, 0])) == {(0, 1), (0, 2)}
    # small disc on peg 1 blocks nothing from peg 0 except onto peg 1
    assert legal_moves(mdp, state_index([1, 0])) == {(1, 0), (1, 2), (0, 2)}


@pytest.mark.parametrize("N", [1, 2, 3])
def test_hanoi_goal_is_an_exit(N):
    mdp = hanoi_mdp(N)
    goal = goal_state(N)
    assert list(mdp.exit_states) == [goal]
    assert all(t[[goal]].nnz == 0 for t in mdp.trans)


@pytest.mark.parametrize("N", [2, 4])
def test_hanoi_stochastic_rows_are_distributions(N):
    mdp = hanoi_mdp(N, stochastic=True, p=0.4)
    goal = goal_state(N)
    for t, ok in zip(mdp.trans, mdp.available):
        sums = np.asarray(t.sum(axis=1)).ravel()
        live = ok.copy()
        live[goal] = False
        assert np.allclose(sums[live], 1.0) and np.all(sums[~live] == 0)


def test_hanoi_slip_spreads_over_other_legal_moves():
    mdp = hanoi_mdp(2, stochastic=True, p=0.4)
    s = state_index([0, 0])
    a = MOVES.index((0, 1))
    row = mdp.trans[a][[s]].toarray().ravel()
    assert row[state_index([1, 0])] == pytest.approx(0.6)
    assert row[state_index([2, 0])] == pytest.approx(0.4)


def test_hanoi_subgoals():
    sgs = hanoi_subgoals(1)
    assert len(sgs) == 4 and sgs[0].name == "G-"
    assert len(hanoi_subgoals(3)) == 10
    g = sgs[1 + 2].g.reward  # on(0, 2)
    assert g[2] == 1e4 and g[0] == 0
    with pytest.raises(ConfigurationError):
        hanoi_subgoals(2, K=0)


def test_hanoi_size_limits():
    with pytest.raises(ConfigurationError):
        hanoi_mdp(0)
    with pytest.raises(ConfigurationError):
        hanoi_mdp(13)


@pytest.mark.parametrize("N,n", [(1, 9), (2, 93), (3, 873)])
def test_nine_rooms_sizes(N, n):
    assert nine_rooms_mdp(N).n == n


def test_nine_rooms_one_level_value():
    mdp = nine_rooms_mdp(1)
    v = value_iteration(mdp)
    assert mdp.start == Layout(1).index[2, 2]
    assert v[mdp.start] == pytest.approx(0.9**4)


def test_nine_rooms_every_cell_reaches_the_goal():
    mdp = nine_rooms_mdp(3)
    assert np.all(value_iteration(mdp) > 0)


def test_nine_rooms_doorways():
    lay = Layout(2)
    for j in range(1, 13):
        d = lay.doorway(2, j)
        assert d.cells.size == 1
        assert np.isin(d.cells, d.initiation).all()
        assert d.initiation.size == 2 * 9 + 1
    assert Layout(3).doorway(3, 1).cells.size == 3
    with pytest.raises(ConfigurationError):
        lay.doorway(3, 1)


def test_nine_rooms_render():
    text = Layout(2).render(goal=0)
    lines = text.splitlines()
    assert len(lines) == 11 and all(len(line) == 11 for line in lines)
    assert lines[0][0] == "G" and text.count("+") == 12
    assert lines[3] == "#+###+###+#" and lines[1] == "...+...+..."


def test_nine_rooms_subgoal_counts():
    assert len(nine_rooms_subgoals(2)) == 12
    assert len(nine_rooms_subgoals(4)) == 36
    with pytest.raises(ConfigurationError):
        nine_rooms_subgoals(1)


def test_nine_rooms_stochastic_rows():
    mdp = nine_rooms_mdp(2, stochastic=True, p=0.05)
    goal = mdp.exit_states[0]
    for t, ok in zip(mdp.trans, mdp.available):
        sums = np.asarray(t.sum(axis=1)).ravel()
        live = ok.copy()
        live[goal] = False
        assert np.allclose(sums[live], 0.9)


@pytest.mark.parametrize("corner", ["nw", "ne", "sw", "se"])
def test_nine_rooms_goal_corners(corner):
    mdp = nine_rooms_mdp(2, goal_corner=corner)
    v = value_iteration(mdp)
    assert v[mdp.exit_states[0]] == 1.0
    assert mdp.start != mdp.exit_states[0]


def test_chain():
    mdp = chain_mdp(8)
    v = value_iteration(mdp)
    assert np.allclose(v, 0.9 ** np.arange(7, -1, -1))
    with pytest.raises(ConfigurationError):
        chain_mdp(1)


def test_random_mdp_is_seeded_and_discounted():
    a, b = random_mdp(6, seed=4), random_mdp(6, seed=4)
    for ta, tb in zip(a.trans, b.trans):
        assert (ta != tb).nnz == 0
        sums = np.asarray(ta.sum(axis=1)).ravel()
        assert np.all(sums <= 0.9 + 1e-12)
    c = random_mdp(6, seed=5)
    assert any((x != y).nnz for x, y in zip(a.trans, c.trans))
