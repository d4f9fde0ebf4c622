"""Seeded random MDPs for smoke tests and oracle cross-checks."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..mdp import ConfigurationError, Mdp


def random_mdp(n: int, num_actions: int = 2, gamma: float = 0.9, seed: int = 0, density: float = 0.5) -> Mdp:
    """Every action is available everywhere; rewards are uniform on [-1, 1].

    Each row keeps a random subset of successors (at least one) with
    Dirichlet weights, scaled by ``gamma``.
    """
    if n < 1 or num_actions < 1:
        raise ConfigurationError("need at least one state and one action")
    if not 0 <= gamma < 1:
        raise ConfigurationError("random MDPs need gamma in [0, 1)")
    rng = np.random.default_rng(seed)
    trans, reward = [], []
    for _ in range(num_actions):
        mask = rng.random((n, n)) < density
        mask[np.arange(n), rng.integers(n, size=n)] = True
        w = rng.dirichlet(np.ones(n), size=n) * mask
        w /= w.sum(axis=1, keepdims=True)
        trans.append(sp.csr_array(gamma * w))
        reward.append(rng.uniform(-1.0, 1.0, size=n))
    return Mdp(
        n=n,
        gamma=gamma,
        action_ids=[f"a{k}" for k in range(num_actions)],
        trans=trans,
        reward=reward,
        available=[np.ones(n, dtype=bool)] * num_actions,
        name=f"random-{n}-s{seed}",
    )
