"""Iterative solvers for the model optimality equations, including OOMI.

Every solver is synchronous (Jacobi): a sweep reads a snapshot of the models
from the previous sweep.  One backup is one recomputation of one row of one
model.  Two counting conventions are supported:

``settled``
    a model's count stops at the last sweep that changed it (beyond the
    tolerance); the sweep that merely confirms convergence is not counted.
``recompute``
    every sweep performed is counted, including the confirming one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ._kernels import Stack
from .algebra import (
    ModelMatrix,
    PolicyWeights,
    TieRule,
    assemble_rows,
    check_termination,
    expectation_model,
    identity_model,
    termination_model,
    value_model,
)
from .mdp import Mdp, SubgoalSpec, action_models, floor_model, true_value_model

log = logging.getLogger(__name__)

COUNT_MODES = ("settled", "recompute")


@dataclass(frozen=True)
class PlannerConfig:
    """Convergence and accounting settings.

    With ``exact`` set, a model counts as converged only when an update leaves it
    bit-for-bit unchanged; deterministic domains use this so that counts do not
    depend on ``eps``.
    """

    eps: float = 1e-9
    max_iters: int = 10**6
    tie: TieRule = TieRule()
    count_mode: str = "settled"
    exact: bool = False

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.count_mode not in COUNT_MODES:
            raise ValueError(f"unknown count_mode {self.count_mode!r}")

    def settled(self, residual: float) -> bool:
        return residual == 0.0 if self.exact else residual <= self.eps

    def counted(self, sweeps: int, converged: bool) -> int:
        """Sweeps charged to a model that ran ``sweeps`` sweeps."""
        if self.count_mode == "settled" and converged:
            return sweeps - 1
        return sweeps


@dataclass
class ExperimentReport:
    n: int
    iterations: int = 0
    backups_total: int = 0
    models: list = field(default_factory=list)
    names: list = field(default_factory=list)
    per_iteration_residuals: list = field(default_factory=list)
    converged: bool = False
    model_converged: list = field(default_factory=list)
    stage_iterations: list = field(default_factory=list)

    @property
    def backups_per_state(self) -> float:
        return self.backups_total / self.n if self.n else 0.0

    def model(self, name: str) -> ModelMatrix:
        return self.models[self.names.index(name)]


def _max_abs(mat) -> float:
    return float(np.abs(mat.data).max()) if mat.nnz else 0.0


def residual(new: ModelMatrix, old: ModelMatrix) -> float:
    """Largest absolute change over reward and transition entries."""
    dr = np.abs(new.reward - old.reward)
    dr = float(dr.max()) if dr.size else 0.0
    return max(dr, _max_abs(new.trans - old.trans))


def continuation_model(continuations: Sequence[ModelMatrix | None], g: np.ndarray, tie: TieRule):
    """Row-wise best of the continuations against ``g``.

    Row ``s`` of the result is the continuation that gives the largest reward
    of ``s B G`` (``None`` is the identity model, i.e. stop in ``s``); a later
    continuation must beat an earlier one by more than ``tie.tol``.  Returns
    the model and the per-state values ``s B G``.
    """
    n = g.shape[0]
    w = np.column_stack([g if b is None else b.reward + b.trans @ g for b in continuations])
    pick = np.zeros(n, dtype=np.int64)
    best = w[:, 0].copy()
    for j in range(1, w.shape[1]):
        better = w[:, j] > best + tie.tol
        pick[better] = j
        best[better] = w[better, j]
    chosen = np.unique(pick)
    if chosen.size == 1:
        b = continuations[int(chosen[0])]
        return (identity_model(n) if b is None else b), best
    reward = np.zeros(n)
    parts = []
    for j in chosen:
        target = np.flatnonzero(pick == j)
        b = continuations[j]
        if b is None:
            parts.append((target, sp.csr_array((np.ones(target.size), (np.arange(target.size), target)),
                                               shape=(target.size, n))))
        else:
            reward[target] = b.reward[target]
            parts.append((target, b.trans[target]))
    return ModelMatrix(reward, assemble_rows(n, parts)), best


def greedy_update(
    candidates: Sequence[ModelMatrix],
    continuations: Sequence[ModelMatrix | None],
    g: np.ndarray,
    old: ModelMatrix,
    rows: np.ndarray,
    incumbent: np.ndarray,
    tie: TieRule,
    stack: Stack | None = None,
) -> ModelMatrix:
    """One argmax backup of the rows ``rows`` of ``old``.

    The continuation ``B`` is first chosen state by state from
    ``continuations`` (``None`` is termination, listed first so that it wins
    ties), so the option may stop in some successor states and carry on in
    others.  The row chosen in state ``s`` is then the candidate ``O``
    maximising the reward of ``s O B G``.  ``incumbent`` is updated in place
    with the chosen candidate indices.  ``stack`` may carry the candidates
    already stacked, to share that work between subgoals.
    """
    n = old.n
    full = rows.shape[0] == n
    cont, w = continuation_model(continuations, g, tie)
    if stack is None:
        stack = Stack(candidates)
    sel = stack.select(rows, w[:, None], incumbent[rows], tie.tol)
    if sel.size and sel.min() < 0:
        raise ValueError("some state has no available candidate model")
    incumbent[rows] = sel

    chosen = np.unique(sel)
    if full and chosen.size == 1:
        o = candidates[int(chosen[0])]
        return ModelMatrix(o.reward + o.trans @ cont.reward, o.trans @ cont.trans)
    reward = old.reward.copy()
    parts = []
    if not full:
        out = np.setdiff1d(np.arange(n), rows, assume_unique=True)
        parts.append((out, old.trans[out]))
    for c in chosen:
        o = candidates[int(c)]
        target = rows[sel == c]
        p = o.trans[target]
        reward[target] = o.reward[target] + p @ cont.reward
        parts.append((target, p @ cont.trans))
    return ModelMatrix(reward, assemble_rows(n, parts))


# -- single-model solvers -------------------------------------------------------


def optimality_iterate_value(
    base: Sequence[ModelMatrix],
    cfg: PlannerConfig = PlannerConfig(),
    init: ModelMatrix | None = None,
) -> tuple[ModelMatrix, ExperimentReport]:
    """Iterate ``V <- max_O O V`` from the true value model.

    With the primitive action models as ``base`` this is value iteration; with
    option models it converges to the hierarchically optimal policy model.
    """
    if not base:
        raise ValueError("empty base set")
    n = base[0].n
    v = (init if init is not None else floor_model(base)).reward.copy()
    stack = Stack(list(base))
    if stack.uncovered().size:
        raise ValueError("some state has no available base model")
    report = ExperimentReport(n=n, names=["value"])
    sweeps = 0
    changed = None
    while sweeps < cfg.max_iters:
        v, res, changed = stack.max_backup(v, changed)
        sweeps += 1
        report.per_iteration_residuals.append(res)
        if cfg.settled(res):
            report.converged = True
            break
    report.iterations = cfg.counted(sweeps, report.converged)
    report.backups_total = n * report.iterations
    result = value_model(v)
    report.models = [result]
    report.model_converged = [report.converged]
    if not report.converged:
        log.warning("value iteration stopped after %d sweeps", sweeps)
    return result, report


def _iterate_single(candidates, continuations_of, g: SubgoalSpec, cfg, init, n):
    m = init
    rows = g.rows()
    stack = Stack(candidates)
    incumbent = np.full(n, -1, dtype=np.int64)
    report = ExperimentReport(n=n, names=[g.name])
    sweeps = 0
    while sweeps < cfg.max_iters:
        new = greedy_update(
            candidates, continuations_of(m), g.g.reward, m, rows, incumbent, cfg.tie, stack
        )
        res = residual(new, m)
        m = new
        sweeps += 1
        report.per_iteration_residuals.append(res)
        if cfg.settled(res):
            report.converged = True
            break
    report.iterations = cfg.counted(sweeps, report.converged)
    report.backups_total = rows.shape[0] * report.iterations
    report.models = [m]
    report.model_converged = [report.converged]
    return m, report


def optimality_iterate_option(
    base: Sequence[ModelMatrix],
    g: SubgoalSpec,
    cfg: PlannerConfig = PlannerConfig(),
    init: ModelMatrix | None = None,
) -> tuple[ModelMatrix, ExperimentReport]:
    """Optimal option model for subgoal ``g`` over policies and terminations.

    ``M <- argmax_{O in base, B in {I, M}} O B G``.
    """
    init = init if init is not None else floor_model(base)
    base = list(base)
    return _iterate_single(base, lambda m: [None, m], g, cfg, init, init.n)


def optimality_iterate_beta_option(
    base: Sequence[ModelMatrix],
    beta,
    g: SubgoalSpec,
    cfg: PlannerConfig = PlannerConfig(),
    init: ModelMatrix | None = None,
) -> tuple[ModelMatrix, ExperimentReport]:
    """Optimal option model for ``g`` when the termination condition is fixed."""
    init = init if init is not None else floor_model(base)
    beta = check_termination(beta, init.n)
    base = list(base)
    return _iterate_single(
        base, lambda m: [termination_model(beta, m)], g, cfg, init, init.n
    )


def optimality_iterate_pi_option(
    base: Sequence[ModelMatrix],
    pi: PolicyWeights,
    g: SubgoalSpec,
    cfg: PlannerConfig = PlannerConfig(),
    init: ModelMatrix | None = None,
) -> tuple[ModelMatrix, ExperimentReport]:
    """Optimal (deterministic) termination for ``g`` when the policy is fixed."""
    init = init if init is not None else floor_model(base)
    step = [expectation_model(pi, list(base))]
    return _iterate_single(step, lambda m: [None, m], g, cfg, init, init.n)


# -- multi-subgoal solvers ----------------------------------------------------------


def _sweep_subgoals(base, subgoals, cfg, init, compose_learned: bool):
    n = init.n
    m = len(subgoals)
    models = [init] * m
    frozen = [False] * m
    incumbents = [np.full(n, -1, dtype=np.int64) for _ in range(m)]
    rows = [sg.rows() for sg in subgoals]
    report = ExperimentReport(n=n, names=[sg.name for sg in subgoals])
    sweeps = [0] * m
    total = 0
    stack = None
    while total < cfg.max_iters and not all(frozen):
        snapshot = list(models)
        candidates = list(base) + snapshot if compose_learned else list(base)
        if compose_learned or stack is None:
            stack = Stack(candidates)
        worst = 0.0
        for j, sg in enumerate(subgoals):
            if frozen[j]:
                continue
            new = greedy_update(
                candidates, [None, snapshot[j]], sg.g.reward, snapshot[j], rows[j],
                incumbents[j], cfg.tie, stack,
            )
            res = residual(new, snapshot[j])
            worst = max(worst, res)
            sweeps[j] += 1
            models[j] = new
            if cfg.settled(res):
                frozen[j] = True
        total += 1
        report.per_iteration_residuals.append(worst)
        log.debug("sweep %d: residual %.3g, %d/%d frozen", total, worst, sum(frozen), m)
    counted = [cfg.counted(c, f) for c, f in zip(sweeps, frozen)]
    report.iterations = max(counted) if counted else 0
    report.backups_total = sum(c * r.shape[0] for c, r in zip(counted, rows))
    report.models = models
    report.model_converged = list(frozen)
    report.converged = all(frozen)
    return report


def oomi(
    base: Sequence[ModelMatrix],
    subgoals: Sequence[SubgoalSpec],
    cfg: PlannerConfig = PlannerConfig(),
    init: ModelMatrix | None = None,
) -> tuple[list[ModelMatrix], ExperimentReport]:
    """Option-option model iteration.

    One option model per subgoal, all starting from the true value model.  Each
    iteration updates every unfrozen model with candidates drawn from the base
    set and every current model (itself included, so models can square).
    """
    if not base or not subgoals:
        raise ValueError("oomi needs a nonempty base set and at least one subgoal")
    init = init if init is not None else floor_model(base)
    report = _sweep_subgoals(base, subgoals, cfg, init, compose_learned=True)
    return report.models, report


def aopmi(
    mdp: Mdp,
    subgoals: Sequence[SubgoalSpec],
    cfg: PlannerConfig = PlannerConfig(),
) -> tuple[ModelMatrix, ExperimentReport]:
    """Two-level planning: build option models from actions, then plan over them.

    Subgoals flagged as the true value model are skipped in the first stage;
    planning for the overall goal is the second stage's job.
    """
    if not subgoals:
        raise ValueError("aopmi needs at least one subgoal")
    actions = action_models(mdp)
    init = true_value_model(mdp)
    option_goals = [sg for sg in subgoals if not sg.true_value]
    if option_goals:
        stage1 = _sweep_subgoals(actions, option_goals, cfg, init, compose_learned=False)
        options = stage1.models
    else:
        stage1 = ExperimentReport(n=mdp.n, converged=True)
        options = []
    v, stage2 = optimality_iterate_value(options + actions, cfg, init=init)
    report = ExperimentReport(
        n=mdp.n,
        iterations=stage1.iterations + stage2.iterations,
        backups_total=stage1.backups_total + stage2.backups_total,
        models=[v] + options,
        names=["value"] + [sg.name for sg in option_goals],
        per_iteration_residuals=stage1.per_iteration_residuals + stage2.per_iteration_residuals,
        converged=stage1.converged and stage2.converged,
        model_converged=[stage2.converged] + stage1.model_converged,
        stage_iterations=[stage1.iterations, stage2.iterations],
    )
    return v, report
