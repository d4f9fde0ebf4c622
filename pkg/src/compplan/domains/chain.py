"""A deterministic corridor: one action moving right, reward 1 for acting at the end."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..mdp import ConfigurationError, Mdp


def chain_mdp(L: int, gamma: float = 0.9) -> Mdp:
    if L < 2:
        raise ConfigurationError("a chain needs at least two states")
    s = np.arange(L - 1)
    trans = sp.csr_array((np.full(L - 1, gamma), (s, s + 1)), shape=(L, L))
    reward = np.zeros(L)
    reward[-1] = 1.0
    return Mdp(
        n=L,
        gamma=gamma,
        action_ids=["right"],
        trans=[trans],
        reward=[reward],
        available=[np.ones(L, dtype=bool)],
        exit_states=np.array([L - 1]),
        start=0,
        name=f"chain-{L}",
    )
