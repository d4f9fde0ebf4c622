"""Compiled inner loops for the planners.

Candidate models are stacked state-major: the available rows of state ``s``
(one per candidate model offering it) are stored contiguously, each tagged
with its candidate index.  Keeping a state's candidates together keeps the
sweeps cache friendly on large state spaces.
"""
from __future__ import annotations

import numba
import numpy as np
import scipy.sparse as sp


class Stack:
    """Available rows of several models, grouped by state."""

    def __init__(self, models):
        self.k = k = len(models)
        self.n = n = models[0].n
        mat = sp.vstack([m.trans for m in models], format="csr")
        # stacked row c * n + s, visited in (s, c) order
        order = (np.arange(k)[None, :] * n + np.arange(n)[:, None]).ravel()
        keep = np.concatenate([m.row_available() for m in models])[order]
        picked = order[keep]
        sub = mat[picked]
        self.cand = picked // n
        # 32-bit offsets halve the index traffic of a sweep when they fit
        wide = max(picked.shape[0], sub.nnz) >= np.iinfo(np.int32).max
        offset = np.int64 if wide else np.int32
        self.sptr = np.searchsorted(picked % n, np.arange(n + 1)).astype(offset)
        self.indptr = sub.indptr.astype(offset)
        self.indices = sub.indices.astype(np.int32)
        self.data = sub.data
        self.reward = np.concatenate([m.reward for m in models])[picked]
        # rows with at most one entry (deterministic models) get a flat layout
        # that skips the per-row offset loop; -1 marks a row with no entry
        self.unit = sub.nnz == 0 or int(np.diff(sub.indptr).max()) <= 1
        if self.unit:
            has = np.diff(sub.indptr) > 0
            self.col = np.full(picked.shape[0], -1, dtype=np.int32)
            self.col[has] = sub.indices
            self.unit_data = np.zeros(picked.shape[0])
            self.unit_data[has] = sub.data

    def uncovered(self) -> np.ndarray:
        """States that no candidate is available in."""
        return np.flatnonzero(np.diff(self.sptr) == 0)

    def select(self, rows: np.ndarray, w: np.ndarray, incumbent: np.ndarray, tol: float) -> np.ndarray:
        """Tie-ruled argmax over ``(candidate, column)`` pairs of ``R_c[s] + P_c[s] @ w[:, b]``.

        Pairs are indexed ``c * nb + b``.  The lowest-indexed maximiser wins
        unless the row's incumbent (``>= 0``) is within ``tol`` of it.
        """
        return _select(
            self.sptr, self.cand, self.indptr, self.indices, self.data, self.reward,
            rows.astype(np.int64), np.ascontiguousarray(w, dtype=np.float64),
            incumbent.astype(np.int64), tol,
        )

    def max_backup(self, v: np.ndarray, changed: np.ndarray | None = None):
        """Per-state max over candidates of ``R + P v``.

        With ``changed`` given, only states with a changed successor are
        recomputed; the others keep their value, which is exact because their
        inputs are the same as in the previous sweep.  Returns the new values,
        the largest change, and the flags of the states that changed.
        """
        first = changed is None
        if first:
            changed = np.zeros(self.n, dtype=bool)
        if self.unit:
            return _max_backup_unit(self.sptr, self.col, self.unit_data, self.reward, v, changed, first)
        return _max_backup(
            self.sptr, self.indptr, self.indices, self.data, self.reward, v, changed, first
        )


@numba.njit(cache=True)
def _select(sptr, cand, indptr, indices, data, reward, rows, w, incumbent, tol):
    nb = w.shape[1]
    out = np.empty(rows.shape[0], dtype=np.int64)
    acc = np.empty(nb)
    for i in range(rows.shape[0]):
        s = rows[i]
        inc = incumbent[i]
        best = -1
        best_val = -np.inf
        inc_val = -np.inf
        for r in range(sptr[s], sptr[s + 1]):
            for b in range(nb):
                acc[b] = reward[r]
            for e in range(indptr[r], indptr[r + 1]):
                col = indices[e]
                p = data[e]
                for b in range(nb):
                    acc[b] += p * w[col, b]
            base = cand[r] * nb
            for b in range(nb):
                if best < 0 or acc[b] > best_val:
                    best = base + b
                    best_val = acc[b]
                if base + b == inc:
                    inc_val = acc[b]
        if inc >= 0 and best_val <= inc_val + tol:
            out[i] = inc
        else:
            out[i] = best
    return out


@numba.njit(cache=True)
def _max_backup(sptr, indptr, indices, data, reward, v, changed, first):
    n = v.shape[0]
    new = np.empty(n)
    out = np.zeros(n, dtype=np.bool_)
    res = 0.0
    for s in range(n):
        if not first:
            hit = False
            for e in range(indptr[sptr[s]], indptr[sptr[s + 1]]):
                if changed[indices[e]]:
                    hit = True
                    break
            if not hit:
                new[s] = v[s]
                continue
        best = -np.inf
        for r in range(sptr[s], sptr[s + 1]):
            acc = reward[r]
            for e in range(indptr[r], indptr[r + 1]):
                acc += data[e] * v[indices[e]]
            if acc > best:
                best = acc
        new[s] = best
        if best != v[s]:
            out[s] = True
            d = abs(best - v[s])
            if d > res:
                res = d
    return new, res, out


@numba.njit(cache=True)
def _max_backup_unit(sptr, col, data, reward, v, changed, first):
    n = v.shape[0]
    new = np.empty(n)
    out = np.zeros(n, dtype=np.bool_)
    res = 0.0
    for s in range(n):
        if not first:
            hit = False
            for r in range(sptr[s], sptr[s + 1]):
                c = col[r]
                if c >= 0 and changed[c]:
                    hit = True
                    break
            if not hit:
                new[s] = v[s]
                continue
        best = -np.inf
        for r in range(sptr[s], sptr[s + 1]):
            acc = reward[r]
            c = col[r]
            if c >= 0:
                acc += data[r] * v[c]
            if acc > best:
                best = acc
        new[s] = best
        if best != v[s]:
            out[s] = True
            d = abs(best - v[s])
            if d > res:
                res = d
    return new, res, out
