"""N-disc Tower of Hanoi with three pegs.

A state assigns each disc to a peg; disc 0 is the smallest.  The state index is
``sum(pegs[d] * 3**d)``.  The goal (every disc on peg 2) is an exit state:
its rows are zero, so the episode ends there.
"""
from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp

from ..algebra import value_model
from ..mdp import ConfigurationError, Mdp, SubgoalSpec, true_value_subgoal

MOVES = [(src, dst) for src in range(3) for dst in range(3) if src != dst]
MAX_DISCS = 12


def peg_table(N: int) -> np.ndarray:
    """``(3**N, N)`` array: peg of each disc in each state."""
    idx = np.arange(3**N)
    return np.stack([(idx // 3**d) % 3 for d in range(N)], axis=1)


def state_index(pegs) -> int:
    return int(sum(int(p) * 3**d for d, p in enumerate(pegs)))


def goal_state(N: int) -> int:
    return 3**N - 1


def _legal_moves(N: int):
    """Per move: legality mask and successor index for every state."""
    pegs = peg_table(N)
    n = pegs.shape[0]
    top = np.full((n, 3), N)
    for d in reversed(range(N)):
        for p in range(3):
            top[pegs[:, d] == p, p] = d
    legal, succ = [], []
    for src, dst in MOVES:
        disc = top[:, src]
        ok = (disc < N) & (disc < top[:, dst])
        nxt = np.arange(n) + np.where(ok, (dst - src) * 3 ** np.minimum(disc, N - 1), 0)
        legal.append(ok)
        succ.append(nxt)
    return np.array(legal), np.array(succ)


def hanoi_mdp(N: int, stochastic: bool = False, p: float = 0.4) -> Mdp:
    """Reward -1 per move, gamma = 1.

    In the stochastic variant the intended move happens with probability
    ``1 - p``; otherwise one of the other legal moves is taken uniformly.  With
    no other legal move the intended move happens.
    """
    if not 1 <= N <= MAX_DISCS:
        raise ConfigurationError(f"Hanoi supports 1..{MAX_DISCS} discs, got {N}")
    if not 0 <= p < 1:
        raise ConfigurationError(f"slip probability must lie in [0, 1), got {p}")
    legal, succ = _legal_moves(N)
    n = 3**N
    goal = goal_state(N)
    decision = np.arange(n) != goal
    count = legal.sum(axis=0)
    trans, reward, available = [], [], []
    for a in range(len(MOVES)):
        ok = legal[a]
        rows = [np.flatnonzero(ok & decision)]
        cols = [succ[a][rows[0]]]
        if stochastic:
            alone = count[rows[0]] == 1
            probs = [np.where(alone, 1.0, 1.0 - p)]
            for b in range(len(MOVES)):
                if b == a:
                    continue
                r = np.flatnonzero(ok & legal[b] & decision)
                rows.append(r)
                cols.append(succ[b][r])
                probs.append(p / (count[r] - 1))
        else:
            probs = [np.ones(rows[0].shape[0])]
        rows, cols, probs = map(np.concatenate, (rows, cols, probs))
        t = sp.csr_array((probs, (rows, cols)), shape=(n, n))
        trans.append(t)
        reward.append(np.where(ok & decision, -1.0, 0.0))
        available.append(ok)
    return Mdp(
        n=n,
        gamma=1.0,
        action_ids=[f"{s}->{d}" for s, d in MOVES],
        trans=trans,
        reward=reward,
        available=available,
        exit_states=np.array([goal]),
        start=0,
        name=f"hanoi-{N}-{'stoch' if stochastic else 'det'}",
    )


def hanoi_subgoals(N: int, K: float = 1e4, mdp: Mdp | None = None) -> list[SubgoalSpec]:
    """The true value model plus one ``on(disc, peg)`` subgoal per disc and peg."""
    if K <= 0:
        raise ConfigurationError("subgoal constant must be positive")
    mdp = mdp if mdp is not None else hanoi_mdp(N)
    pegs = peg_table(N)
    specs = [true_value_subgoal(mdp)]
    for d, e in itertools.product(range(N), range(3)):
        specs.append(SubgoalSpec(f"on({d},{e})", value_model(K * (pegs[:, d] == e))))
    return specs
