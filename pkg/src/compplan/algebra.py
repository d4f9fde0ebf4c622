"""Rasps and models in homogeneous coordinates.

A model is the block matrix ``[[1, 0], [R, P]]``; only ``R`` (``reward``) and
``P`` (``trans``) are stored.  ``P`` is kept as a CSR sparse matrix because the
option models built by the planners are mostly very sparse (deterministic
options have a single entry per row).  Discounting is already folded into
``P``, so composition is plain block multiplication.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-9


class DimensionError(ValueError):
    """Operands disagree on the number of states."""


@dataclass(frozen=True)
class TieRule:
    """Deterministic tie-breaking for argmax selections.

    A candidate only displaces the incumbent selection of a row when it improves
    the composed reward by more than ``tol``.  Rows without an incumbent take the
    lowest candidate index among the maximisers.
    """

    tol: float = 1e-12


def _as_csr(trans, n: int | None = None) -> sp.csr_array:
    if sp.issparse(trans):
        out = sp.csr_array(trans, dtype=float)
    else:
        arr = np.asarray(trans, dtype=float)
        if arr.ndim != 2:
            raise DimensionError(f"transition block must be 2-d, got shape {arr.shape}")
        out = sp.csr_array(arr)
    if out.shape[0] != out.shape[1] or (n is not None and out.shape[0] != n):
        raise DimensionError(f"transition block has shape {out.shape}, expected ({n}, {n})")
    out.eliminate_zeros()
    out.sort_indices()
    return out


def scale_rows(mat: sp.csr_array, w: np.ndarray) -> sp.csr_array:
    """``diag(w) @ mat`` without building the diagonal matrix."""
    mat = sp.csr_array(mat)
    data = mat.data * np.repeat(w, np.diff(mat.indptr))
    return sp.csr_array((data, mat.indices, mat.indptr), shape=mat.shape)


def scale_cols(mat: sp.csr_array, w: np.ndarray) -> sp.csr_array:
    """``mat @ diag(w)`` without building the diagonal matrix."""
    mat = sp.csr_array(mat)
    return sp.csr_array((mat.data * w[mat.indices], mat.indices, mat.indptr), shape=mat.shape)


@dataclass(frozen=True, eq=False)
class Rasp:
    """Reward and (discounted) state probabilities, ``[r | p]``."""

    reward: float
    dist: np.ndarray

    def __post_init__(self):
        dist = np.array(self.dist, dtype=float).ravel()
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "reward", float(self.reward))

    @classmethod
    def state(cls, s: int, n: int) -> "Rasp":
        """Deterministic rasp: in state ``s`` with probability one, zero reward."""
        dist = np.zeros(n)
        dist[s] = 1.0
        return cls(0.0, dist)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def validate(self) -> "Rasp":
        if np.any(self.dist < 0):
            raise ValueError("rasp has negative state probabilities")
        if self.dist.sum() > 1 + ROW_SUM_TOL:
            raise ValueError(f"rasp mass {self.dist.sum()} exceeds one")
        return self


class ModelMatrix:
    """Reward vector plus substochastic transition block.

    ``available`` marks the rows that exist; an action model is unavailable in
    states where the action is illegal.  Unavailable rows are stored as zeros and
    are skipped by expectation, max and argmax.  ``None`` means every row exists.
    Instances are treated as immutable.
    """

    __slots__ = ("reward", "trans", "available")

    def __init__(self, reward, trans, available=None):
        reward = np.array(reward, dtype=float).ravel()
        trans = _as_csr(trans, reward.shape[0])
        if available is not None:
            available = np.array(available, dtype=bool).ravel()
            if available.shape != reward.shape:
                raise DimensionError("availability mask does not match the state count")
            if available.all():
                available = None
            else:
                available.setflags(write=False)
        reward.setflags(write=False)
        self.reward = reward
        self.trans = trans
        self.available = available

    @property
    def n(self) -> int:
        return self.reward.shape[0]

    @property
    def is_value_model(self) -> bool:
        return self.trans.nnz == 0

    def row(self, s: int) -> Rasp:
        return Rasp(self.reward[s], self.trans[[s], :].toarray().ravel())

    def row_available(self) -> np.ndarray:
        if self.available is None:
            return np.ones(self.n, dtype=bool)
        return self.available

    def dense(self) -> np.ndarray:
        """The transition block as a dense array (small models only)."""
        return self.trans.toarray()

    def validate(self) -> "ModelMatrix":
        if not np.all(np.isfinite(self.reward)):
            raise ValueError("model reward is not finite")
        if self.trans.nnz and self.trans.data.min() < 0:
            raise ValueError("model has negative transition entries")
        sums = np.asarray(self.trans.sum(axis=1)).ravel()
        if sums.size and sums.max() > 1 + ROW_SUM_TOL:
            raise ValueError(f"model row sum {sums.max()} exceeds one")
        return self

    def __repr__(self):
        return f"ModelMatrix(n={self.n}, nnz={self.trans.nnz})"


def identity_model(n: int) -> ModelMatrix:
    return ModelMatrix(np.zeros(n), sp.identity(n, format="csr"))


def value_model(values) -> ModelMatrix:
    values = np.asarray(values, dtype=float).ravel()
    return ModelMatrix(values, sp.csr_array((values.shape[0], values.shape[0])))


def _check_same_n(*items):
    ns = {m.n for m in items}
    if len(ns) != 1:
        raise DimensionError(f"operands have different state counts: {sorted(ns)}")


def compose(m1: ModelMatrix, m2: ModelMatrix) -> ModelMatrix:
    """``m1`` followed by ``m2``: ``[R1 + P1 R2 | P1 P2]``."""
    _check_same_n(m1, m2)
    return ModelMatrix(
        m1.reward + m1.trans @ m2.reward, m1.trans @ m2.trans, m1.available
    )


def apply(x: Rasp, m: ModelMatrix) -> Rasp:
    """``[r | p] M = [r + p R | p P]``."""
    if x.n != m.n:
        raise DimensionError(f"rasp over {x.n} states applied to model over {m.n}")
    return Rasp(x.reward + x.dist @ m.reward, m.trans.T @ x.dist)


class PolicyWeights:
    """Per-state distribution over an indexed set of models.

    ``weights[s, k]`` is the probability of selecting model ``k`` in state
    ``s``; zero columns give state-dependent support.
    """

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 2:
            raise DimensionError("policy weights must be an (n, k) array")
        if np.any(w < 0):
            raise ValueError("policy weights must be non-negative")
        if not np.allclose(w.sum(axis=1), 1.0, rtol=0, atol=ROW_SUM_TOL):
            raise ValueError("policy weights must sum to one in every state")
        w.setflags(write=False)
        self.weights = w

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def k(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def deterministic(cls, choice, k: int) -> "PolicyWeights":
        choice = np.asarray(choice, dtype=int)
        w = np.zeros((choice.shape[0], k))
        w[np.arange(choice.shape[0]), choice] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, models: Sequence[ModelMatrix]) -> "PolicyWeights":
        """Uniform over the models available in each state."""
        avail = np.column_stack([m.row_available() for m in models]).astype(float)
        counts = avail.sum(axis=1, keepdims=True)
        if np.any(counts == 0):
            raise ValueError("some state has no available model")
        return cls(avail / counts)

    def support(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.weights[s])


def expectation_model(weights: PolicyWeights, models: Sequence[ModelMatrix]) -> ModelMatrix:
    """Row ``s`` is ``sum_k weights(s, k) * (row s of models[k])``."""
    if weights.k != len(models):
        raise IndexError(f"policy indexes {weights.k} models but {len(models)} were given")
    _check_same_n(*models)
    if weights.n != models[0].n:
        raise DimensionError("policy and models disagree on the state count")
    reward = np.zeros(weights.n)
    parts = []
    for k, m in enumerate(models):
        w = weights.weights[:, k]
        if not w.any():
            continue
        if m.available is not None and np.any(w[~m.available] > 0):
            bad = np.flatnonzero((w > 0) & ~m.available)
            raise IndexError(f"policy selects model {k} where it is unavailable: states {bad[:5]}")
        reward = reward + w * m.reward
        parts.append(m.trans if np.all(w == 1.0) else scale_rows(m.trans, w))
    if not parts:
        trans = sp.csr_array((weights.n, weights.n))
    elif len(parts) == 1:
        trans = parts[0]
    else:
        trans = sum(parts[1:], parts[0])
    return ModelMatrix(reward, trans)


def check_termination(beta, n: int | None = None) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if n is not None and beta.shape[0] != n:
        raise DimensionError(f"termination has {beta.shape[0]} entries, expected {n}")
    if np.any(beta < 0) or np.any(beta > 1) or not np.all(np.isfinite(beta)):
        raise ValueError("termination probabilities must lie in [0, 1]")
    return beta


def termination_model(beta, m: ModelMatrix) -> ModelMatrix:
    """Row ``s`` is ``beta[s] * (row s of I) + (1 - beta[s]) * (row s of m)``."""
    beta = check_termination(beta, m.n)
    keep = 1.0 - beta
    trans = sp.diags_array(beta, format="csr") + scale_rows(m.trans, keep)
    return ModelMatrix(keep * m.reward, trans)


def max_value_model(vs: Sequence[ModelMatrix]) -> ModelMatrix:
    """Elementwise max of the reward columns of a set of value models."""
    if not vs:
        raise ValueError("max over an empty set of value models")
    _check_same_n(*vs)
    stacked = np.vstack([np.where(v.row_available(), v.reward, -np.inf) for v in vs])
    return value_model(stacked.max(axis=0))


def tie_select(values: np.ndarray, incumbent: np.ndarray | None, tie: TieRule) -> np.ndarray:
    """Column chosen in each row of a ``(n, k)`` candidate value array.

    Lowest index among the maximisers, unless the row has an incumbent
    (``>= 0``) that no candidate beats by more than ``tie.tol``.
    """
    best = np.argmax(values, axis=1)
    if incumbent is None:
        return best
    rows = np.arange(values.shape[0])
    has = incumbent >= 0
    inc = np.where(has, incumbent, 0)
    keep = has & (values[rows, best] <= values[rows, inc] + tie.tol)
    return np.where(keep, inc, best)


def composed_values(ms: Sequence[ModelMatrix], v: ModelMatrix) -> np.ndarray:
    """``(n, k)`` array of ``s M_k V`` rewards; unavailable rows are ``-inf``."""
    cols = []
    for m in ms:
        val = m.reward + m.trans @ v.reward
        if m.available is not None:
            val = np.where(m.available, val, -np.inf)
        cols.append(val)
    return np.column_stack(cols)


def select_rows(ms: Sequence[ModelMatrix], selection: np.ndarray) -> ModelMatrix:
    """Model whose row ``s`` is row ``s`` of ``ms[selection[s]]``."""
    n = ms[0].n
    reward = np.zeros(n)
    parts = []
    for k in np.unique(selection):
        rows = np.flatnonzero(selection == k)
        reward[rows] = ms[k].reward[rows]
        parts.append((rows, ms[k].trans[rows]))
    return ModelMatrix(reward, assemble_rows(n, parts))


def assemble_rows(n: int, parts) -> sp.csr_array:
    """Build an ``n x n`` CSR matrix from ``(target_rows, block)`` pieces."""
    rows, cols, data = [], [], []
    for target, block in parts:
        coo = sp.coo_array(block)
        rows.append(np.asarray(target)[coo.row])
        cols.append(coo.col)
        data.append(coo.data)
    if not rows:
        return sp.csr_array((n, n))
    return sp.csr_array(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def argmax_model(
    ms: Sequence[ModelMatrix],
    v: ModelMatrix,
    tie: TieRule = TieRule(),
    incumbent: np.ndarray | None = None,
) -> tuple[ModelMatrix, np.ndarray]:
    """Per state, the row of the model in ``ms`` maximising ``s M V``.

    Rasps are ordered by reward only, so the comparison uses the reward of the
    composed rasp and never its distribution.
    """
    if not ms:
        raise ValueError("argmax over an empty set of models")
    _check_same_n(v, *ms)
    values = composed_values(ms, v)
    if np.any(np.all(np.isneginf(values), axis=1)):
        raise ValueError("some state has no available candidate model")
    selection = tie_select(values, incumbent, tie)
    return select_rows(ms, selection), selection
