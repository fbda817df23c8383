"""
Adaptive Loop - The Conductor
The triple loop over meshes (l), linearization steps (k) and algebraic solver steps (j)
with the self-tuning algebraic stopping test (alpha_min, J_max, rho), the linearization
stopping test, Doerfler marking, bisection refinement and nested iteration.

Energy differences follow dl2(v, w) = E(w) - E(v); the accepted increment of step k is
dl2(u^{k,j}, u^{k-1,j_}) = E(u^{k-1,j_}) - E(u^{k,j}).
"""
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

import config
from estimator import IndicatorField, element_indicators
from exceptions import (
    EnergyIncreaseError,
    InvalidParameterError,
    NonFiniteError,
    StepCapExceeded,
)
from fem import Discretization, DofMap, FeFunction, prolongate
from interfaces import IAlgebraicSolver, ILinearization, LinearizedSystem, SolverStats
from linearizations import parse_method
from meshing import Mesh, refine
from problems import Benchmark
from solvers import SOLVERS, DirectSolver, MultigridSolver, MultilevelHierarchy
from utils.logger import setup_logger
from utils.safeguards import RunSafeguard

logger = setup_logger("ailfem.adaptive")

HISTORY_COLUMNS = [
    "ell", "k", "j", "dofs", "eta", "norm_inc_lin", "norm_inc_alg", "dl2_inc",
    "alpha_kj", "alpha_min", "J_max", "energy", "cum_cost",
]

TERMINATION_REASONS = ("tolerance-met", "step-cap", "exact-hit")


# ==================== PARAMETERS AND RECORDS ====================

@dataclass(frozen=True)
class AdaptiveParams:
    theta: float = config.THETA
    lambda_lin: float = config.LAMBDA_LIN
    rho: float = config.RHO
    alpha_min_init: float = config.ALPHA_MIN_INIT
    j_max_init: int = config.J_MAX_INIT
    tau: float = config.TAU
    c_mark: float = config.C_MARK
    method: Union[str, ILinearization] = config.DEFAULT_METHOD
    max_total_steps: int = config.MAX_TOTAL_STEPS
    eta_stop: Optional[float] = config.ETA_STOP
    solver: str = config.SOLVER
    exact_error: bool = False
    diagnostics: bool = False  # retain iterates and systems for quasi-error diagnostics
    measure_contraction: bool = config.MEASURE_CONTRACTION

    def __post_init__(self):
        if isinstance(self.method, str):
            object.__setattr__(self, "method", parse_method(self.method))
        checks = [
            (0 < self.theta <= 1, f"theta must lie in (0, 1], got {self.theta}"),
            (self.lambda_lin > 0, f"lambda_lin must be positive, got {self.lambda_lin}"),
            (0 < self.rho < 1, f"rho must lie in (0, 1), got {self.rho}"),
            (self.alpha_min_init > 0, f"alpha_min must be positive, got {self.alpha_min_init}"),
            (int(self.j_max_init) == self.j_max_init and self.j_max_init >= 1,
             f"J_max must be an integer >= 1, got {self.j_max_init}"),
            (self.tau >= 0, f"tau must be nonnegative, got {self.tau}"),
            (self.c_mark >= 1, f"C_mark must be >= 1, got {self.c_mark}"),
            (self.max_total_steps >= 1, f"max_total_steps must be >= 1, got {self.max_total_steps}"),
            (self.eta_stop is None or self.eta_stop > 0, f"eta_stop must be positive, got {self.eta_stop}"),
            (self.eta_stop is not None or self.tau > 0,
             "No stop rule can fire: set eta_stop or a positive tau"),
            (self.solver in SOLVERS, f"Unknown solver '{self.solver}'. Choose from {list(SOLVERS)}"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidParameterError(message)

    def describe(self) -> dict:
        values = asdict(self)
        values["method"] = self.method.name
        return values


@dataclass
class LoopState:
    """Counters and iterates of the triple loop"""
    ell: int
    k: int
    j: int
    alpha_min: float
    j_max: int
    mesh: Mesh
    dofs: DofMap
    u: FeFunction  # u^{k,j}
    u_accepted: FeFunction  # u^{k-1,j_}


@dataclass(frozen=True)
class StepRecord:
    ell: int
    k: int
    j: int
    dofs: int
    eta: float
    norm_inc_lin: float  # ||u^{k,j} - u^{k-1,j_}||
    norm_inc_alg: float  # ||u^{k,j} - u^{k,j-1}||
    dl2_inc: float  # dl2(u^{k,j}, u^{k-1,j_})
    alpha_kj: float
    alpha_min: float
    J_max: int
    energy: float
    cum_cost: int
    exact_error: Optional[float] = None

    @property
    def index(self) -> Tuple[int, int, int]:
        return self.ell, self.k, self.j


@dataclass(frozen=True)
class LevelSummary:
    ell: int
    n_triangles: int
    n_dofs: int
    n_marked: int
    k_final: int
    eta: float
    energy: float
    alpha_min: float
    j_max: int
    exact_error: Optional[float] = None


@dataclass
class RetainedStep:
    """Iterate and system of one record, kept in diagnostic runs"""
    record_index: int
    ell: int
    coefficients: np.ndarray
    system: Optional[LinearizedSystem]


@dataclass
class RetainedLevel:
    ell: int
    disc: Discretization
    accepted: List[np.ndarray] = field(default_factory=list)  # u^{0,0}, u^{1,j_}, ..., u^{k_,j_}


@dataclass
class RunHistory:
    problem: str
    params: AdaptiveParams
    records: List[StepRecord] = field(default_factory=list)
    levels: List[LevelSummary] = field(default_factory=list)
    termination_reason: Optional[str] = None
    solver_stats: SolverStats = field(default_factory=SolverStats)
    weight_ranges: List[Tuple[int, int, float, float]] = field(default_factory=list)  # (l, k, min, max)
    retained_steps: List[RetainedStep] = field(default_factory=list)
    retained_levels: List[RetainedLevel] = field(default_factory=list)
    final_mesh: Optional[Mesh] = None
    meshes: List[Mesh] = field(default_factory=list)
    wall_time: float = 0.0

    def append(self, record: StepRecord):
        if self.records:
            last = self.records[-1]
            if record.index <= last.index or record.cum_cost <= last.cum_cost:
                raise InvalidParameterError(f"Record {record.index} does not follow {last.index}")
        self.records.append(record)

    @property
    def diagnostics_retained(self) -> bool:
        return bool(self.retained_steps)

    @property
    def final_record(self) -> StepRecord:
        return self.records[-1]

    @property
    def n_algebraic_steps(self) -> int:
        return sum(1 for r in self.records if r.j > 0)

    def level_final_records(self) -> List[StepRecord]:
        """Last record of every mesh level"""
        final = {}
        for r in self.records:
            final[r.ell] = r
        return [final[ell] for ell in sorted(final)]

    def to_frame(self) -> pd.DataFrame:
        columns = list(HISTORY_COLUMNS)
        if any(r.exact_error is not None for r in self.records):
            columns.append("exact_error")
        rows = [asdict(r) for r in self.records]
        return pd.DataFrame(rows, columns=columns)

    def to_csv(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format=config.CSV_FLOAT_FORMAT)


# ==================== MARKING ====================

def doerfler_mark(ind: IndicatorField, theta: float) -> np.ndarray:
    """
    Minimal set M with theta * eta^2 <= eta(M)^2: largest indicators first,
    ties by triangle index. Returns sorted indices.
    """
    if not 0 < theta <= 1:
        raise InvalidParameterError(f"theta must lie in (0, 1], got {theta}")
    values = ind.values
    total = float(values.sum())
    if total <= 0:
        return np.zeros(0, dtype=np.int64)

    if theta == 1:
        return np.flatnonzero(values > 0).astype(np.int64)

    order = np.lexsort((np.arange(len(values)), -values))
    cumulative = np.cumsum(values[order])
    target = theta * total * (1.0 - config.DOERFLER_RTOL)
    count = min(int(np.searchsorted(cumulative, target, side="left")) + 1, len(values))
    return np.sort(order[:count]).astype(np.int64)


# ==================== THE LOOP ====================

class AdaptiveRunner:
    """
    Runs the adaptive loop for one problem. on_level is called with every finished LevelSummary.
    """

    def __init__(
        self,
        problem: Benchmark,
        params: AdaptiveParams,
        on_level: Optional[Callable[[LevelSummary], None]] = None,
        on_event: Optional[Callable[[str, str, str], None]] = None,
    ):
        self.problem = problem
        self.params = params
        self.nonlinearity = problem.nonlinearity
        self.data = problem.data
        self.method = params.method.bind(problem.nonlinearity)
        self.safeguard = RunSafeguard(params.max_total_steps, on_event=on_event)
        self.on_level = on_level
        self.track_exact = params.exact_error and problem.data.has_exact_solution
        if params.exact_error and not self.track_exact:
            logger.warning(f"Problem '{problem.name}' has no exact solution; exact errors are not recorded")

        self.history = RunHistory(problem=problem.name, params=params)
        self._cum_cost = 0
        self._hierarchy: Optional[MultilevelHierarchy] = None
        self._solver: Optional[IAlgebraicSolver] = None

    # ---------- helpers ----------

    def _make_solver(self) -> IAlgebraicSolver:
        if self.params.solver == "direct":
            return DirectSolver()
        return MultigridSolver(self._hierarchy, measure=self.params.measure_contraction)

    def _record(
        self,
        state: LoopState,
        disc: Discretization,
        eta: float,
        inc_lin: float,
        inc_alg: float,
        dl2: float,
        alpha: float,
        energy: float,
        system: Optional[LinearizedSystem] = None,
    ):
        self._cum_cost += state.mesh.n_triangles
        exact = disc.exact_error(state.u.coefficients) if self.track_exact else None
        record = StepRecord(
            ell=state.ell, k=state.k, j=state.j, dofs=disc.n_dofs, eta=eta,
            norm_inc_lin=inc_lin, norm_inc_alg=inc_alg, dl2_inc=dl2, alpha_kj=alpha,
            alpha_min=state.alpha_min, J_max=state.j_max, energy=energy,
            cum_cost=self._cum_cost, exact_error=exact,
        )
        self.history.append(record)
        if self.params.diagnostics:
            self.history.retained_steps.append(RetainedStep(
                record_index=len(self.history.records) - 1,
                ell=state.ell,
                coefficients=state.u.coefficients,
                system=system,
            ))
        logger.debug(
            f"({state.ell},{state.k},{state.j}) eta={eta:.6e} |inc_lin|={inc_lin:.3e} "
            f"|inc_alg|={inc_alg:.3e} alpha={alpha:.4g} E={energy:.12g}"
        )

    def _check_finite(self, name: str, values):
        ok, reason = self.safeguard.check_finite(name, values)
        if not ok:
            raise NonFiniteError(reason)

    # ---------- inner loop ----------

    def algebraic_inner_loop(
        self, state: LoopState, disc: Discretization, system: LinearizedSystem, energy_prev: float
    ) -> Tuple[Optional[str], np.ndarray, float]:
        """
        Solver steps until the algebraic stopping test holds, then the J_max / alpha_min update.
        Returns: (termination reason or None, squared indicators of u^{k,j_}, E(u^{k,j_}))
        """
        p = self.params
        u_accepted = state.u_accepted.coefficients
        state.j = 0
        while True:
            previous = state.u
            self.safeguard.register_step()
            state.j += 1
            state.u = self._solver.one_step(system, previous)
            self._check_finite("algebraic iterate", state.u.coefficients)

            eta_sq = element_indicators(disc, state.u.coefficients)
            eta = float(np.sqrt(eta_sq.sum()))
            inc_lin = disc.norm(state.u.coefficients - u_accepted)
            inc_alg = disc.norm(state.u.coefficients - previous.coefficients)
            energy = disc.energy(state.u.coefficients)
            self._check_finite("energy", energy)
            dl2 = energy_prev - energy

            equal = inc_lin <= config.EQUALITY_TOL * max(1.0, disc.norm(state.u.coefficients))
            if equal:
                alpha = float("nan")
            else:
                scale = max(abs(energy), abs(energy_prev))
                alpha = self.safeguard.clamp_roundoff(dl2, scale) / inc_lin ** 2
            self._record(state, disc, eta, inc_lin, inc_alg, dl2, alpha, energy, system)

            three_term = eta + inc_lin + inc_alg
            if three_term <= p.tau:
                return ("exact-hit" if three_term == 0 else "tolerance-met"), eta_sq, energy

            if equal or alpha >= state.alpha_min or (alpha > 0 and state.j > state.j_max):
                break

        if state.j > state.j_max:
            logger.debug(
                f"J_max {state.j_max} -> {state.j}, alpha_min {state.alpha_min:g} -> {p.rho * state.alpha_min:g}"
            )
            state.j_max = state.j
            state.alpha_min *= p.rho
        return None, eta_sq, energy

    # ---------- linearization loop ----------

    def linearization_loop(
        self, state: LoopState, disc: Discretization, retained: Optional[RetainedLevel]
    ) -> Tuple[Optional[str], np.ndarray, float]:
        """
        Linearization steps until dl2(u^{k,j_}, u^{k-1,j_}) <= lambda_lin eta(u^{k,j_})^2 (k_ >= 1).
        Returns: (termination reason or None, squared indicators, energy of u^{k_,j_})
        """
        energy_prev = disc.energy(state.u.coefficients)
        state.k = 0
        while True:
            state.k += 1
            state.u_accepted = state.u
            system = self.method.build_system(disc, state.u)
            self.history.weight_ranges.append((state.ell, state.k) + tuple(system.weight_range))

            reason, eta_sq, energy = self.algebraic_inner_loop(state, disc, system, energy_prev)
            if reason is not None:
                return reason, eta_sq, energy

            ok, dl2, why = self.safeguard.validate_increment(
                energy_prev - energy, max(abs(energy), abs(energy_prev))
            )
            if not ok:
                raise EnergyIncreaseError(f"Level {state.ell}, step {state.k}: {why}")
            if retained is not None:
                retained.accepted.append(state.u.coefficients)
            energy_prev = energy

            if dl2 <= self.params.lambda_lin * float(eta_sq.sum()):
                return None, eta_sq, energy

    # ---------- mesh loop ----------

    def run(self) -> RunHistory:
        p = self.params
        start = time.perf_counter()
        mesh = self.problem.initial_mesh()
        self._hierarchy = MultilevelHierarchy(mesh)
        self._solver = self._make_solver()
        dofs = self._hierarchy.finest
        zero = FeFunction.zeros(dofs)
        state = LoopState(
            ell=0, k=0, j=0, alpha_min=p.alpha_min_init, j_max=int(p.j_max_init),
            mesh=mesh, dofs=dofs, u=zero, u_accepted=zero,
        )
        logger.info(
            f"Run {self.problem.name} | {self.method.name} | theta={p.theta} lambda_lin={p.lambda_lin} "
            f"tau={p.tau} eta_stop={p.eta_stop} solver={p.solver}"
        )

        reason = None
        try:
            while reason is None:
                reason = self._run_level(state)
                if reason is None:
                    state.ell += 1
        except StepCapExceeded as e:
            reason = "step-cap"
            logger.warning(f"{e} at ({state.ell},{state.k},{state.j}); returning partial history")

        self.history.termination_reason = reason
        self.history.final_mesh = state.mesh
        self.history.solver_stats = self._solver.stats
        self.history.wall_time = time.perf_counter() - start
        final = self.history.final_record
        logger.info(
            f"Finished: {reason} | levels={state.ell + 1} dofs={final.dofs} eta={final.eta:.4e} "
            f"steps={self.history.n_algebraic_steps} time={self.history.wall_time:.2f}s"
        )
        return self.history

    def _run_level(self, state: LoopState) -> Optional[str]:
        """One mesh level; returns a termination reason or None after refining"""
        p = self.params
        disc = Discretization(state.dofs, self.data, self.nonlinearity)
        retained = None
        if p.diagnostics:
            retained = RetainedLevel(ell=state.ell, disc=disc, accepted=[state.u.coefficients])
            self.history.retained_levels.append(retained)
        self.history.meshes.append(state.mesh)

        # (l, 0, 0): nested iteration start
        state.k, state.j = 0, 0
        eta_sq = element_indicators(disc, state.u.coefficients)
        self._record(state, disc, float(np.sqrt(eta_sq.sum())), 0.0, 0.0, 0.0, float("nan"),
                     disc.energy(state.u.coefficients))

        reason, eta_sq, energy = self.linearization_loop(state, disc, retained)
        eta = float(np.sqrt(eta_sq.sum()))
        if reason is None and p.eta_stop is not None and eta < p.eta_stop:
            reason = "tolerance-met"

        marked = np.zeros(0, dtype=np.int64)
        if reason is None:
            marked = doerfler_mark(IndicatorField(state.mesh, eta_sq), p.theta)
            if len(marked) == 0:
                reason = "exact-hit"

        summary = LevelSummary(
            ell=state.ell,
            n_triangles=state.mesh.n_triangles,
            n_dofs=disc.n_dofs,
            n_marked=len(marked),
            k_final=state.k,
            eta=eta,
            energy=energy,
            alpha_min=state.alpha_min,
            j_max=state.j_max,
            exact_error=self.history.final_record.exact_error,
        )
        self.history.levels.append(summary)
        logger.info(
            f"Level {state.ell:3d} | #T={summary.n_triangles:7d} dofs={summary.n_dofs:7d} "
            f"eta={eta:.4e} k_={state.k} J_max={state.j_max} alpha_min={state.alpha_min:.4g}"
        )
        if self.on_level is not None:
            self.on_level(summary)
        if reason is not None:
            return reason

        state.mesh = refine(state.mesh, marked)
        state.dofs = self._hierarchy.extend(state.mesh)
        state.u = prolongate(state.u, state.dofs)
        state.u_accepted = state.u
        return None


def run(problem: Benchmark, params: AdaptiveParams, **kwargs) -> RunHistory:
    return AdaptiveRunner(problem, params, **kwargs).run()
