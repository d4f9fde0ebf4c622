"""MDPs, their action models, and exact evaluation of policy and option models."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .algebra import (
    ROW_SUM_TOL,
    ModelMatrix,
    PolicyWeights,
    check_termination,
    compose,
    expectation_model,
    scale_cols,
    termination_model,
    value_model,
)


class DivergenceError(RuntimeError):
    """An evaluation did not reach a fixed point (e.g. an improper policy with gamma = 1)."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    eps: float = 1e-9
    max_iters: int = 10**6

    def __post_init__(self):
        if self.eps <= 0 or self.max_iters < 1:
            raise ValueError("SolveConfig needs eps > 0 and max_iters >= 1")


@dataclass(eq=False)
class Mdp:
    """Finite MDP with discounted transition matrices.

    ``trans[k][s, s']`` is ``gamma * Pr(s' | s, action_ids[k])``.  Rows of exit
    states are zero in every action; their rewards (if any) are collected once.
    """

    n: int
    gamma: float
    action_ids: list
    trans: list
    reward: list
    available: list
    exit_states: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    start: int = 0
    name: str = "mdp"

    def __post_init__(self):
        self.trans = [sp.csr_array(t, dtype=float) for t in self.trans]
        for t in self.trans:
            t.eliminate_zeros()
            t.sort_indices()
        self.reward = [np.asarray(r, dtype=float).ravel() for r in self.reward]
        self.available = [np.asarray(a, dtype=bool).ravel() for a in self.available]
        self.exit_states = np.unique(np.asarray(self.exit_states, dtype=int))
        self.validate()

    @property
    def num_actions(self) -> int:
        return len(self.action_ids)

    def actions_at(self, s: int) -> list:
        return [a for a, av in zip(self.action_ids, self.available) if av[s]]

    @property
    def is_deterministic(self) -> bool:
        return all(np.all(np.diff(t.indptr) <= 1) for t in self.trans)

    def validate(self) -> "Mdp":
        n = self.n
        if not 0 <= self.gamma <= 1:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        k = len(self.action_ids)
        if not (len(self.trans) == len(self.reward) == len(self.available) == k):
            raise ConfigurationError("per-action fields have inconsistent lengths")
        any_avail = np.zeros(n, dtype=bool)
        is_exit = np.zeros(n, dtype=bool)
        is_exit[self.exit_states] = True
        for a, t, r, av in zip(self.action_ids, self.trans, self.reward, self.available):
            if t.shape != (n, n) or r.shape != (n,) or av.shape != (n,):
                raise ConfigurationError(f"action {a!r} has mis-shaped arrays")
            if t.nnz and t.data.min() < 0:
                raise ConfigurationError(f"action {a!r} has negative probabilities")
            if not np.all(np.isfinite(r)):
                raise ConfigurationError(f"action {a!r} has non-finite rewards")
            sums = np.asarray(t.sum(axis=1)).ravel()
            if np.any(sums > self.gamma + ROW_SUM_TOL):
                raise ConfigurationError(f"action {a!r} has rows summing above gamma")
            if np.any(sums[is_exit] != 0):
                raise ConfigurationError(f"action {a!r} leaves an exit state")
            if np.any(sums[~av] != 0) or np.any(r[~av] != 0):
                raise ConfigurationError(f"action {a!r} has data in unavailable rows")
            any_avail |= av
        if np.any(~any_avail & ~is_exit):
            raise ConfigurationError("a non-exit state has no available action")
        return self

    # -- interchange -------------------------------------------------------

    def to_json(self) -> dict:
        actions = []
        for a, t, r, av in zip(self.action_ids, self.trans, self.reward, self.available):
            coo = sp.coo_array(t)
            order = np.lexsort((coo.col, coo.row))
            actions.append(
                {
                    "id": a,
                    "rows": [
                        [int(coo.row[i]), int(coo.col[i]), float(coo.data[i])] for i in order
                    ],
                    "rewards": [[int(s), float(r[s])] for s in np.flatnonzero(r)],
                    "available": [int(s) for s in np.flatnonzero(av)],
                }
            )
        return {
            "name": self.name,
            "n": self.n,
            "gamma": self.gamma,
            "start": self.start,
            "exit_states": [int(s) for s in self.exit_states],
            "actions": actions,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Mdp":
        n = int(doc["n"])
        ids, trans, reward, available = [], [], [], []
        for rec in doc["actions"]:
            ids.append(rec["id"])
            rows = np.array(rec["rows"], dtype=float).reshape(-1, 3)
            trans.append(
                sp.csr_array(
                    (rows[:, 2], (rows[:, 0].astype(int), rows[:, 1].astype(int))), shape=(n, n)
                )
            )
            r = np.zeros(n)
            for s, val in rec.get("rewards", []):
                r[int(s)] = val
            reward.append(r)
            av = np.zeros(n, dtype=bool)
            av[np.asarray(rec.get("available", []), dtype=int)] = True
            available.append(av)
        return cls(
            n=n,
            gamma=float(doc["gamma"]),
            action_ids=ids,
            trans=trans,
            reward=reward,
            available=available,
            exit_states=np.asarray(doc.get("exit_states", []), dtype=int),
            start=int(doc.get("start", 0)),
            name=doc.get("name", "mdp"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "Mdp":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class SubgoalSpec:
    """A subgoal value model and the rows its option model is maintained for."""

    name: str
    g: ModelMatrix
    initiation: np.ndarray | None = None
    true_value: bool = False

    def __post_init__(self):
        if not self.g.is_value_model:
            raise ValueError(f"subgoal {self.name!r} is not a value model")
        if self.initiation is not None:
            init = np.unique(np.asarray(self.initiation, dtype=int))
            if init.size and (init[0] < 0 or init[-1] >= self.g.n):
                raise ValueError(f"subgoal {self.name!r} has initiation states out of range")
            object.__setattr__(self, "initiation", init)

    def rows(self) -> np.ndarray:
        if self.initiation is None:
            return np.arange(self.g.n)
        return self.initiation


def action_models(mdp: Mdp) -> list[ModelMatrix]:
    return [
        ModelMatrix(r, t, av) for t, r, av in zip(mdp.trans, mdp.reward, mdp.available)
    ]


def true_value_subgoal(mdp: Mdp, margin: float = 1.0, horizon: int | None = None) -> SubgoalSpec:
    """The overall goal of maximising total reward, as a subgoal."""
    return SubgoalSpec("G-", true_value_model(mdp, margin, horizon), true_value=True)


def _floor(min_reward: float, max_abs: float, gamma: float, n: int, horizon) -> float:
    if gamma < 1:
        return min(min_reward, 0.0) / (1.0 - gamma)
    return -max_abs * (10 * n if horizon is None else horizon)


def true_value_model(mdp: Mdp, margin: float = 1.0, horizon: int | None = None) -> ModelMatrix:
    """Constant value model strictly below the value of every (proper) policy."""
    if margin <= 0:
        raise ConfigurationError("margin must be positive")
    rs = np.concatenate([r[av] for r, av in zip(mdp.reward, mdp.available)])
    if mdp.gamma >= 1 and rs.size and rs.max() > 0:
        raise ConfigurationError("gamma = 1 with positive rewards: no finite lower bound")
    lo = rs.min() if rs.size else 0.0
    hi = np.abs(rs).max() if rs.size else 0.0
    return value_model(np.full(mdp.n, _floor(lo, hi, mdp.gamma, mdp.n, horizon) - margin))


def floor_model(base: Sequence[ModelMatrix], margin: float = 1.0, horizon: int | None = None) -> ModelMatrix:
    """The true value model implied by a base set alone.

    The largest row sum stands in for gamma; with action models this
    reproduces :func:`true_value_model`.
    """
    n = base[0].n
    rs = np.concatenate([m.reward[m.row_available()] for m in base])
    sums = np.concatenate([np.asarray(m.trans.sum(axis=1)).ravel() for m in base])
    gamma = min(1.0, sums.max()) if sums.size else 0.0
    if gamma > 1 - 1e-12:
        gamma = 1.0
    lo = rs.min() if rs.size else 0.0
    hi = np.abs(rs).max() if rs.size else 0.0
    return value_model(np.full(n, _floor(lo, hi, gamma, n, horizon) - margin))


DENSE_SOLVE_MAX = 256


def _solve(a: sp.csr_array, b):
    """Solve ``a x = b``; small systems go through a dense LU factorisation."""
    try:
        with np.errstate(all="raise"), warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            if a.shape[0] <= DENSE_SOLVE_MAX:
                x = np.linalg.solve(a.toarray(), b)
            else:
                x = spla.spsolve(sp.csc_array(a), b)
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError, spla.MatrixRankWarning) as exc:
        raise DivergenceError(f"singular evaluation system: {exc}") from exc
    x = x.toarray() if sp.issparse(x) else np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise DivergenceError("singular evaluation system")
    return x


def evaluate_policy_model(
    base: Sequence[ModelMatrix],
    pi: PolicyWeights,
    cfg: SolveConfig = SolveConfig(),
    method: str = "iterate",
) -> ModelMatrix:
    """Fixed point of ``V = E_pi(base) V``: the policy model of ``pi``."""
    e = expectation_model(pi, base)
    if method == "solve":
        return value_model(_solve(sp.identity(e.n, format="csr") - e.trans, e.reward))
    if method != "iterate":
        raise ValueError(f"unknown method {method!r}")
    v = np.zeros(e.n)
    for _ in range(cfg.max_iters):
        new = e.reward + e.trans @ v
        if not np.all(np.isfinite(new)):
            break
        delta = np.abs(new - v).max()
        v = new
        if delta <= cfg.eps:
            return value_model(v)
    raise DivergenceError("policy evaluation did not converge; the policy may be improper")


def evaluate_option_model(
    base: Sequence[ModelMatrix],
    pi: PolicyWeights,
    beta,
    cfg: SolveConfig = SolveConfig(),
    method: str = "iterate",
) -> ModelMatrix:
    """Fixed point of ``M = E_pi(base) E_beta(I, M)``: the option model of ``<pi, beta>``."""
    e = expectation_model(pi, base)
    beta = check_termination(beta, e.n)
    if method == "solve":
        a = sp.identity(e.n, format="csr") - scale_cols(e.trans, 1.0 - beta)
        rhs = np.column_stack([e.reward, scale_cols(e.trans, beta).toarray()])
        x = _solve(a, rhs).reshape(e.n, e.n + 1)
        reward, trans = x[:, 0].copy(), x[:, 1:].copy()
        trans[np.abs(trans) < 1e-300] = 0.0
        return ModelMatrix(reward, np.clip(trans, 0.0, None))
    if method != "iterate":
        raise ValueError(f"unknown method {method!r}")
    m = value_model(np.zeros(e.n))
    for _ in range(cfg.max_iters):
        new = compose(e, termination_model(beta, m))
        if not np.all(np.isfinite(new.reward)):
            break
        delta = max(np.abs(new.reward - m.reward).max(), _max_abs(new.trans - m.trans))
        m = new
        if delta <= cfg.eps:
            return m
    raise DivergenceError("option evaluation did not converge; the option may never stop")


def _max_abs(mat) -> float:
    return float(np.abs(mat.data).max()) if mat.nnz else 0.0
