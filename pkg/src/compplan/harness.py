"""Benchmark runs: build a domain, plan with one algorithm, report and check the result."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import oracles
from .domains import (
    chain_mdp,
    hanoi_mdp,
    hanoi_subgoals,
    nine_rooms_mdp,
    nine_rooms_subgoals,
    random_mdp,
)
from .mdp import ConfigurationError, Mdp, SubgoalSpec, action_models, true_value_subgoal
from .algebra import value_model
from .planners import (
    ExperimentReport,
    PlannerConfig,
    aopmi,
    oomi,
    optimality_iterate_option,
    optimality_iterate_value,
)

DOMAINS = ("hanoi", "nine_rooms", "chain", "random")
ALGORITHMS = ("apmi", "aopmi", "oomi")
DEFAULT_SLIP = {"hanoi": 0.4, "nine_rooms": 0.05}
DEFAULT_K = {"hanoi": 1e4, "nine_rooms": 1e3}
STOCHASTIC_EPS = 1e-6
DETERMINISTIC_EPS = 1e-9
CSV_FIELDS = (
    "domain", "variant", "N", "algorithm", "iterations", "backups_per_state",
    "value_at_start", "eps", "runtime_ms",
)


@dataclass(frozen=True)
class RunSpec:
    """One benchmark run.

    ``eps=None`` picks the default threshold: ``1e-6`` for stochastic runs,
    and exact convergence (no change at all) for deterministic ones.
    """

    domain: str
    size: int
    algorithm: str = "oomi"
    stochastic: bool = False
    slip: float | None = None
    eps: float | None = None
    max_iters: int = 10**6
    subgoal_k: float | None = None
    goal_corner: str = "nw"
    count_mode: str = "settled"
    seed: int = 0

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigurationError(f"unknown domain {self.domain!r}; choose from {DOMAINS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.eps is not None and self.eps <= 0:
            raise ConfigurationError("eps must be positive")
        if self.stochastic and self.domain not in DEFAULT_SLIP:
            raise ConfigurationError(f"{self.domain} has no stochastic variant")

    @property
    def variant(self) -> str:
        return "stoch" if self.stochastic else "det"

    @property
    def threshold(self) -> float:
        if self.eps is not None:
            return self.eps
        return STOCHASTIC_EPS if self.stochastic else DETERMINISTIC_EPS

    def config(self) -> PlannerConfig:
        exact = self.eps is None and not self.stochastic
        return PlannerConfig(
            eps=self.threshold, max_iters=self.max_iters, count_mode=self.count_mode, exact=exact
        )

    def build(self) -> tuple[Mdp, list[SubgoalSpec]]:
        """The MDP and the subgoal list (true value model first)."""
        if self.domain == "hanoi":
            mdp = hanoi_mdp(self.size, self.stochastic, self._slip())
            return mdp, hanoi_subgoals(self.size, self._k(), mdp)
        if self.domain == "nine_rooms":
            mdp = nine_rooms_mdp(self.size, self.stochastic, self._slip(), self.goal_corner)
            extra = nine_rooms_subgoals(self.size, self._k()) if self.size >= 2 else []
            return mdp, [true_value_subgoal(mdp)] + extra
        if self.domain == "chain":
            mdp = chain_mdp(self.size)
        else:
            mdp = random_mdp(self.size, seed=self.seed)
        return mdp, [true_value_subgoal(mdp)]

    def _slip(self) -> float:
        return DEFAULT_SLIP[self.domain] if self.slip is None else self.slip

    def _k(self) -> float:
        return DEFAULT_K[self.domain] if self.subgoal_k is None else self.subgoal_k


@dataclass
class RunResult:
    spec: RunSpec
    mdp: Mdp
    report: ExperimentReport
    values: np.ndarray
    runtime_ms: float

    @property
    def value_at_start(self) -> float:
        return float(self.values[self.mdp.start])

    def row(self) -> dict:
        return {
            "domain": self.spec.domain,
            "variant": self.spec.variant,
            "N": self.spec.size,
            "algorithm": self.spec.algorithm,
            "iterations": self.report.iterations,
            "backups_per_state": self.report.backups_per_state,
            "value_at_start": self.value_at_start,
            "eps": 0.0 if self.spec.config().exact else self.spec.threshold,
            "runtime_ms": round(self.runtime_ms, 1),
        }


def run(spec: RunSpec) -> RunResult:
    """Plan ``spec`` and return the report with the overall value function."""
    mdp, subgoals = spec.build()
    cfg = spec.config()
    t0 = time.perf_counter()
    if spec.algorithm == "apmi":
        v, report = optimality_iterate_value(action_models(mdp), cfg)
        values = v.reward
    elif spec.algorithm == "aopmi":
        v, report = aopmi(mdp, subgoals, cfg)
        values = v.reward
    else:
        models, report = oomi(action_models(mdp), subgoals, cfg)
        values = models[0].reward
    return RunResult(spec, mdp, report, values, 1e3 * (time.perf_counter() - t0))


def oracle_values(mdp: Mdp, spec: RunSpec) -> np.ndarray:
    """Optimal values from an independent method."""
    if spec.domain == "hanoi" and not spec.stochastic:
        return -oracles.hanoi_distance(spec.size).astype(float)
    return oracles.value_iteration(mdp, eps=1e-12)


@dataclass
class VerificationReport:
    result: RunResult
    gap: float
    tol: float
    enumeration_gap: float | None = None
    notes: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.result.report.converged

    @property
    def ok(self) -> bool:
        gaps = [self.gap] + ([self.enumeration_gap] if self.enumeration_gap is not None else [])
        return self.converged and max(gaps) <= self.tol


def default_tolerance(spec: RunSpec) -> float:
    return 1e-4 if spec.stochastic else 1e-6


def enumeration_gap(mdp: Mdp, subgoals, seed: int = 0) -> float:
    """Largest gap between the iterated optimal option and brute-force enumeration.

    Checks every subgoal given plus one seeded subgoal with values in {-1, 0, 1}.
    """
    base = action_models(mdp)
    rng = np.random.default_rng(seed)
    extra = SubgoalSpec("probe", value_model(rng.choice([-1.0, 0.0, 1.0], size=mdp.n)))
    gap = 0.0
    for sg in list(subgoals) + [extra]:
        m, _ = optimality_iterate_option(base, sg, PlannerConfig(eps=1e-12))
        best = oracles.best_option_value(base, sg.g.reward)
        gap = max(gap, float(np.abs(oracles.option_value(m, sg.g.reward) - best).max()))
    return gap


def verify(spec: RunSpec, tol: float | None = None) -> VerificationReport:
    """Run ``spec`` and measure the max-norm gap to the oracle values.

    For MDPs with at most four states the optimal option model is also
    checked against brute-force enumeration of deterministic options.
    """
    tol = default_tolerance(spec) if tol is None else tol
    if tol <= 0:
        raise ConfigurationError("tolerance must be positive")
    result = run(spec)
    oracle = oracle_values(result.mdp, spec)
    rep = VerificationReport(result, float(np.abs(result.values - oracle).max()), tol)
    if result.mdp.n <= 4:
        rep.enumeration_gap = enumeration_gap(result.mdp, spec.build()[1], spec.seed)
        rep.notes.append("checked against exhaustive option enumeration")
    return rep


def _order(spec: RunSpec):
    return (spec.domain, spec.variant, spec.size, ALGORITHMS.index(spec.algorithm))


def bench_table(specs) -> tuple[str, str, list[RunResult]]:
    """Run every spec; return the CSV text, the grouped text table and the results.

    Results are sorted by domain, variant, size and algorithm whatever the
    input order.
    """
    specs = sorted(specs, key=_order)
    if not specs:
        raise ConfigurationError("no runs selected")
    results = [run(s) for s in specs]
    return to_csv(results), text_table(results), results


def to_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r.row())
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    """Parse :func:`to_csv` output back into typed rows."""
    kinds = {"N": int, "iterations": int, "backups_per_state": float,
             "value_at_start": float, "eps": float, "runtime_ms": float}
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        rows.append({k: kinds.get(k, str)(v) for k, v in raw.items()})
    return rows


def text_table(results) -> str:
    """Iterations and backups per state, one block per domain and variant.

    Rows are problem sizes; each algorithm contributes an iterations column
    and a backups-per-state column.
    """
    groups: dict = {}
    for r in results:
        key = (r.spec.domain, r.spec.variant)
        groups.setdefault(key, {}).setdefault(r.spec.size, {})[r.spec.algorithm] = r
    lines = []
    for (domain, variant), by_size in groups.items():
        algos = [a for a in ALGORITHMS if any(a in row for row in by_size.values())]
        lines.append(f"{domain} ({variant})")
        head = f"{'N':>4}" + "".join(f"{a.upper() + ' it':>12}{'bk/s':>10}" for a in algos)
        lines.append(head)
        for size in sorted(by_size):
            cells = []
            for a in algos:
                r = by_size[size].get(a)
                if r is None:
                    cells.append(f"{'-':>12}{'-':>10}")
                else:
                    mark = "" if r.report.converged else "*"
                    cells.append(f"{str(r.report.iterations) + mark:>12}{r.report.backups_per_state:>10.1f}")
            lines.append(f"{size:>4}" + "".join(cells))
        lines.append("")
    if any(not r.report.converged for r in results):
        lines.append("* did not converge within max_iters")
    return "\n".join(lines).rstrip() + "\n"


def sweep(domain: str, sizes, algorithms=ALGORITHMS, **kwargs) -> list[RunSpec]:
    return [RunSpec(domain, n, a, **kwargs) for n in sizes for a in algorithms]

