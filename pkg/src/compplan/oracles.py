"""Independent reference answers used to check the planners.

None of these share code with :mod:`compplan.planners`: value iteration works
directly on the MDP arrays, option optima come from brute-force enumeration
with linear solves, and option models can be estimated by simulation.
"""
from __future__ import annotations

import itertools
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .algebra import ModelMatrix, PolicyWeights, check_termination, expectation_model
from .mdp import DivergenceError, Mdp, SolveConfig, evaluate_option_model


def value_iteration(mdp: Mdp, eps: float = 1e-12, max_iters: int = 10**7) -> np.ndarray:
    """Optimal values by plain Bellman iteration from zero, stopping on a max change <= ``eps``."""
    stack = sp.vstack(mdp.trans, format="csr")
    rew = np.concatenate(mdp.reward)
    blocked = ~np.concatenate(mdp.available)
    k, n = mdp.num_actions, mdp.n
    v = np.zeros(n)
    for _ in range(max_iters):
        q = rew + stack @ v
        q[blocked] = -np.inf
        new = q.reshape(k, n).max(axis=0)
        delta = np.abs(new - v).max() if n else 0.0
        v = new
        if delta <= eps:
            return v
    raise DivergenceError(f"value iteration oracle did not reach {eps} in {max_iters} sweeps")


def hanoi_distance(N: int) -> np.ndarray:
    """Fewest moves from every state to the all-on-peg-2 tower.

    Largest disc first: a disc already on the current target leaves the
    target unchanged; otherwise it costs ``2**d`` moves and the smaller discs
    must then gather on the third peg.
    """
    idx = np.arange(3**N)
    dist = np.zeros(3**N, dtype=np.int64)
    target = np.full(3**N, 2)
    for d in reversed(range(N)):
        peg = (idx // 3**d) % 3
        off = peg != target
        dist += np.where(off, 2**d, 0)
        target = np.where(off, 3 - peg - target, target)
    return dist


def option_value(m: ModelMatrix, g: np.ndarray) -> np.ndarray:
    """Reward of ``s M G`` for every state."""
    return m.reward + m.trans @ g


def _policies(base: Sequence[ModelMatrix]) -> Iterator[np.ndarray]:
    n = base[0].n
    choices = [np.flatnonzero([m.row_available()[s] for m in base]) for s in range(n)]
    for combo in itertools.product(*choices):
        yield np.array(combo)


def _betas(n: int) -> Iterator[np.ndarray]:
    for bits in itertools.product((0.0, 1.0), repeat=n):
        yield np.array(bits)


def _best(base, g, pis, betas) -> np.ndarray:
    n, k = base[0].n, len(base)
    best = np.full(n, -np.inf)
    betas = list(betas)
    stay = PolicyWeights.deterministic(np.zeros(n, dtype=int), 1)
    for pi in pis:
        weights = pi if isinstance(pi, PolicyWeights) else PolicyWeights.deterministic(pi, k)
        step = [expectation_model(weights, base)]
        for beta in betas:
            try:
                m = evaluate_option_model(step, stay, beta, SolveConfig(), method="solve")
            except DivergenceError:
                continue
            best = np.maximum(best, option_value(m, g))
    return best


def best_option_value(base: Sequence[ModelMatrix], g: np.ndarray) -> np.ndarray:
    """Per-state max of ``s M G`` over every deterministic policy and termination set."""
    return _best(base, g, _policies(base), _betas(base[0].n))


def best_beta_option_value(base: Sequence[ModelMatrix], beta, g: np.ndarray) -> np.ndarray:
    """As :func:`best_option_value` with the termination condition fixed."""
    return _best(base, g, _policies(base), [check_termination(beta, base[0].n)])


def best_pi_option_value(base: Sequence[ModelMatrix], pi: PolicyWeights, g: np.ndarray) -> np.ndarray:
    """As :func:`best_option_value` with the policy fixed."""
    return _best(base, g, [pi], _betas(base[0].n))


def small_mdps(
    n: int,
    num_actions: int,
    gamma: float = 0.9,
    rewards: Sequence[float] = (-1.0, 0.0, 1.0),
    probs: Sequence[float] = (0.0, 0.5, 1.0),
    limit: int | None = None,
    seed: int = 0,
) -> Iterator[Mdp]:
    """Every MDP on a grid of rewards and transition probabilities.

    Each (state, action) pair gets a reward from ``rewards`` and a successor
    distribution whose entries come from ``probs`` and sum to at most one;
    that distribution is then scaled by ``gamma``.  If the grid holds more
    than ``limit`` MDPs, a seeded uniform sample of ``limit`` of them is
    produced instead.
    """
    rows = [
        (r, np.array(p))
        for r in rewards
        for p in itertools.product(probs, repeat=n)
        if sum(p) <= 1.0 + 1e-12
    ]
    pairs = n * num_actions
    total = len(rows) ** pairs
    if limit is None or total <= limit:
        picks = itertools.product(range(len(rows)), repeat=pairs)
    else:
        rng = np.random.default_rng(seed)
        picks = (tuple(rng.integers(len(rows), size=pairs)) for _ in range(limit))
    for pick in picks:
        trans, reward = [], []
        for a in range(num_actions):
            chosen = [rows[pick[a * n + s]] for s in range(n)]
            reward.append(np.array([c[0] for c in chosen]))
            trans.append(sp.csr_array(gamma * np.stack([c[1] for c in chosen])))
        yield Mdp(
            n=n,
            gamma=gamma,
            action_ids=[f"a{a}" for a in range(num_actions)],
            trans=trans,
            reward=reward,
            available=[np.ones(n, dtype=bool)] * num_actions,
            name=f"grid-{n}x{num_actions}",
        )


def monte_carlo_option(
    mdp: Mdp,
    choice: np.ndarray,
    beta,
    start: int,
    rollouts: int = 10**5,
    max_steps: int = 10**4,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Simulated estimate of row ``start`` of the option model of ``<choice, beta>``.

    ``choice[s]`` indexes the action taken in ``s``.  Each step collects the
    action's reward, then either leaves (probability ``1 - row sum``: discount
    or episode end) or moves to a sampled successor, where the option stops
    with probability ``beta``.  Returns the mean reward and the fraction of
    rollouts stopping in each state.
    """
    beta = check_termination(beta, mdp.n)
    n = mdp.n
    rows = sp.vstack(
        [mdp.trans[choice[s]][[s]] for s in range(n)], format="csr"
    )
    rew = np.array([mdp.reward[choice[s]][s] for s in range(n)])
    counts = np.diff(rows.indptr)
    owner = np.repeat(np.arange(n), counts)
    # successor e of state s is chosen when u falls below key[e] on the ray 2s + [0, 1]
    within = np.cumsum(rows.data) - np.repeat(
        np.concatenate([[0.0], np.cumsum(rows.data)])[rows.indptr[:-1]], counts
    )
    key = 2.0 * owner + within
    rng = np.random.default_rng(seed)
    state = np.full(rollouts, start)
    total = np.zeros(rollouts)
    active = np.ones(rollouts, dtype=bool)
    ended = np.full(rollouts, -1)
    for _ in range(max_steps):
        live = np.flatnonzero(active)
        if live.size == 0:
            break
        s = state[live]
        total[live] += rew[s]
        e = np.searchsorted(key, 2.0 * s + rng.random(live.size), side="right")
        moved = e < rows.indptr[s + 1]
        gone = live[~moved]
        active[gone] = False
        live, e = live[moved], e[moved]
        nxt = rows.indices[e]
        state[live] = nxt
        stop = rng.random(live.size) < beta[nxt]
        ended[live[stop]] = nxt[stop]
        active[live[stop]] = False
    else:
        if active.any():
            raise DivergenceError("some rollouts never stopped")
    dist = np.bincount(ended[ended >= 0], minlength=n) / rollouts
    return float(total.mean()), dist
