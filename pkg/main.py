"""
Adaptive Solver CLI - The Conductor
Orchestrates all components: problem registry, adaptive loop, diagnostics, run store, artifacts.

    python main.py run --config run.json
    python main.py sweep --config sweep.json
    python main.py verify
    python main.py report [--db ailfem_runs.db] [--run-id N]
"""
import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import numpy as np
import pandas as pd
import psutil

import analysis
import config
from adaptive import AdaptiveParams, LevelSummary, RunHistory, run
from database import RunDatabase
from exceptions import AilfemError, ConfigError
from meshing import dump_mesh
from problems import get_problem
from utils.logger import setup_logger

logger = setup_logger("ailfem.cli")


# ==================== CONFIGURATION ====================

def _matches(value, annotation) -> bool:
    """JSON value against a field annotation; ints pass as floats, bools never pass as numbers"""
    origin = get_origin(annotation)
    if origin is Union:
        return any(_matches(value, arg) for arg in get_args(annotation))
    if origin is list:
        (item,) = get_args(annotation)
        return isinstance(value, list) and all(_matches(v, item) for v in value)
    if annotation is type(None):
        return value is None
    if isinstance(value, bool):
        return annotation is bool
    if annotation is float:
        return isinstance(value, (int, float))
    return isinstance(value, annotation)


def _type_name(annotation) -> str:
    return getattr(annotation, "__name__", None) or str(annotation).replace("typing.", "")

@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; JSON keys map one-to-one onto these fields"""
    problem: str = "lshape"
    method: str = config.DEFAULT_METHOD
    theta: float = config.THETA
    lambda_lin: float = config.LAMBDA_LIN
    rho: float = config.RHO
    alpha_min: float = config.ALPHA_MIN_INIT
    j_max: int = config.J_MAX_INIT
    tau: float = config.TAU
    eta_stop: Optional[float] = config.ETA_STOP
    c_mark: float = config.C_MARK
    max_total_steps: int = config.MAX_TOTAL_STEPS
    solver: str = config.SOLVER
    output: Optional[str] = config.OUTPUT_DIR
    diagnostics: bool = False
    exact_error: Optional[bool] = None  # None: record whenever the problem has an exact solution
    measure_contraction: bool = config.MEASURE_CONTRACTION
    dump_meshes: bool = False
    pre_asymptotic_cutoff: float = config.PRE_ASYMPTOTIC_CUTOFF
    record_db: bool = config.ENABLE_RUN_RECORDING
    db_path: str = config.DB_PATH
    thetas: List[float] = field(default_factory=lambda: list(config.SWEEP_THETAS))
    lambdas: List[float] = field(default_factory=lambda: list(config.SWEEP_LAMBDAS))
    workers: int = config.SWEEP_WORKERS

    @classmethod
    def from_dict(cls, values: Dict) -> "RunConfig":
        if not isinstance(values, dict):
            raise ConfigError("Run configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {unknown}")
        hints = get_type_hints(cls)
        wrong = sorted(name for name, value in values.items() if not _matches(value, hints[name]))
        if wrong:
            raise ConfigError(
                "Config values of the wrong type: "
                + ", ".join(f"{name}={values[name]!r} (expected {_type_name(hints[name])})" for name in wrong)
            )
        return cls(**values)

    @classmethod
    def from_file(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls()
        try:
            values = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"Cannot read config '{path}': {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config '{path}' is not valid JSON: {e}") from e
        return cls.from_dict(values)

    def to_params(self, has_exact_solution: bool = False) -> AdaptiveParams:
        exact = has_exact_solution if self.exact_error is None else self.exact_error
        return AdaptiveParams(
            theta=self.theta,
            lambda_lin=self.lambda_lin,
            rho=self.rho,
            alpha_min_init=self.alpha_min,
            j_max_init=self.j_max,
            tau=self.tau,
            c_mark=self.c_mark,
            method=self.method,
            max_total_steps=self.max_total_steps,
            eta_stop=self.eta_stop,
            solver=self.solver,
            exact_error=exact,
            diagnostics=self.diagnostics,
            measure_contraction=self.measure_contraction,
        )


# ==================== SINGLE RUN ====================

class AdaptiveConductor:
    """
    Runs one configured benchmark and writes its artifacts
    """

    def __init__(self, run_config: RunConfig):
        self.config = run_config
        # validate everything before touching the filesystem
        self.problem = get_problem(run_config.problem)
        self.params = run_config.to_params(self.problem.data.has_exact_solution)
        self.db: Optional[RunDatabase] = None
        self.run_id: Optional[int] = None
        self.peak_rss = 0

    def _sample_memory(self):
        self.peak_rss = max(self.peak_rss, psutil.Process().memory_info().rss)

    def _on_level(self, level: LevelSummary):
        self._sample_memory()
        if self.db is not None:
            self.db.insert_level(self.run_id, level)

    def _on_event(self, event_type: str, message: str, severity: str):
        if self.db is not None:
            self.db.log_event(event_type, message, severity, run_id=self.run_id)

    def start(self) -> Tuple[RunHistory, Dict]:
        print("\n" + "="*60)
        print(f"🔺 ADAPTIVE RUN | {self.problem.name} | {self.params.method.name}")
        print("="*60 + "\n")

        if self.config.record_db:
            self.db = RunDatabase(self.config.db_path)
            self.run_id = self.db.start_run(self.problem.name, self.params.method.name, self.params.describe())
            self.db.log_event("RUN_START", f"Run {self.run_id} started", "INFO", run_id=self.run_id)

        history = run(self.problem, self.params, on_level=self._on_level, on_event=self._on_event)
        self._sample_memory()

        summary = analysis.summarize(history, self.config.pre_asymptotic_cutoff)
        summary["peak_rss_mb"] = self.peak_rss / 2**20
        if self.params.diagnostics:
            summary["diagnostics"] = self._diagnostics(history)

        if self.db is not None:
            self.db.bulk_insert_steps(self.run_id, history.records)
            self.db.finish_run(self.run_id, summary)
            self.db.log_event("RUN_STOP", f"Run finished: {history.termination_reason}", "INFO", run_id=self.run_id)
            summary["run_id"] = self.run_id
            self.db.close()
        if self.config.output:
            self._write_artifacts(history, summary)

        self._print_final_summary(summary)
        return history, summary

    def _diagnostics(self, history: RunHistory) -> Dict:
        references = analysis.reference_solutions(history)
        quasi = analysis.quasi_error(history, references)
        contraction = analysis.energy_contraction_ratios(history, references)
        equivalence = analysis.estimator_equivalence(history, references)
        result = {
            "energy_contraction_max": float(contraction.max()) if len(contraction) else None,
            "estimator_equivalence": [float(equivalence.min()), float(equivalence.max())] if len(equivalence) else None,
        }
        try:
            q, c = analysis.r_linear_fit(quasi)
            result["r_linear"] = {"q": q, "C": c}
        except AilfemError:
            result["r_linear"] = None
        if self.config.output:
            frame = history.to_frame()[["ell", "k", "j"]].iloc[[s.record_index for s in history.retained_steps]]
            frame = frame.assign(quasi_error=quasi)
            out = Path(self.config.output)
            out.mkdir(parents=True, exist_ok=True)
            frame.to_csv(out / "quasi_error.csv", index=False, float_format=config.CSV_FLOAT_FORMAT)
        return result

    def _write_artifacts(self, history: RunHistory, summary: Dict):
        out = Path(self.config.output)
        out.mkdir(parents=True, exist_ok=True)
        history.to_csv(out / config.HISTORY_FILE)
        (out / config.SUMMARY_FILE).write_text(json.dumps(summary, indent=2, default=str))
        if self.config.dump_meshes:
            for ell, mesh in enumerate(history.meshes):
                dump_mesh(mesh, out / config.MESH_DUMP_DIR / f"level_{ell:03d}.txt")
        logger.info(f"Artifacts written to {out}")

    def _print_final_summary(self, summary: Dict):
        """Print final run summary"""
        rates = summary.get("rates") or {}
        print("\n" + "="*60)
        print("📈 FINAL SUMMARY")
        print("="*60)
        print(f"Termination:     {summary['termination_reason']}")
        print(f"Mesh levels:     {summary['levels']}")
        print(f"Final dofs:      {summary['final_dofs']}")
        print(f"Final eta:       {summary['final_eta']:.6e}")
        print(f"Solver steps:    {summary['algebraic_steps']}")
        print(f"Cumulative cost: {summary['cum_cost']}")
        if summary.get("q_alg") is not None:
            print(f"Measured q_alg:  {summary['q_alg']:.4f}")
        if rates:
            print(f"Slope (dofs):    {rates['slope_dofs']:.3f}")
            print(f"Slope (cost):    {rates['slope_cost']:.3f}")
        if summary.get("effectivity"):
            print(f"Effectivity:     {summary['effectivity']['min']:.3f} .. {summary['effectivity']['max']:.3f}")
        print(f"Wall time:       {summary['wall_time']:.2f}s | peak RSS {summary['peak_rss_mb']:.0f} MB")
        print("="*60 + "\n")


def cmd_run(run_config: RunConfig) -> int:
    try:
        conductor = AdaptiveConductor(run_config)
        history, _ = conductor.start()
    except (AilfemError, OSError) as e:
        logger.error(f"Run failed: {e}")
        return 1
    if history.termination_reason == "step-cap":
        logger.error("Run stopped at the step cap")
        return 1
    return 0


# ==================== SWEEP ====================

def estimator_weighted_cost(history: RunHistory) -> float:
    """eta * (cumulative cost)^(1/2) at the final record"""
    final = history.final_record
    return float(final.eta * np.sqrt(final.cum_cost))


def _sweep_cell(values: Dict) -> Dict:
    """One (theta, lambda_lin) cell; failures are reported, never raised"""
    cell_config = RunConfig.from_dict(values)
    result = {"theta": cell_config.theta, "lambda_lin": cell_config.lambda_lin}
    try:
        problem = get_problem(cell_config.problem)
        history = run(problem, cell_config.to_params(False))
        final = history.final_record
        capped = history.termination_reason == "step-cap"
        result.update(
            metric=float("nan") if capped else estimator_weighted_cost(history),
            final_eta=final.eta,
            cum_cost=final.cum_cost,
            steps=history.n_algebraic_steps,
            termination_reason=history.termination_reason,
            error=f"step-cap: stopped after {history.n_algebraic_steps} algebraic steps" if capped else None,
        )
    except Exception as e:
        result.update(metric=float("nan"), error=f"{type(e).__name__}: {e}")
    return result


def sweep_cells(run_config: RunConfig) -> pd.DataFrame:
    base = asdict(replace(run_config, record_db=False, output=None, dump_meshes=False,
                          diagnostics=False, exact_error=False))
    cells = [dict(base, theta=t, lambda_lin=lam) for t in run_config.thetas for lam in run_config.lambdas]
    logger.info(f"Sweep over {len(cells)} cells with {run_config.workers} worker(s)")
    if run_config.workers > 1:
        with ProcessPoolExecutor(max_workers=run_config.workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(cell) for cell in cells]
    for r in results:
        if r["error"]:
            logger.warning(f"Cell theta={r['theta']} lambda_lin={r['lambda_lin']} failed: {r['error']}")
    return pd.DataFrame(results)


def sweep_summary(cells: pd.DataFrame) -> Dict:
    matrix = cells.pivot(index="theta", columns="lambda_lin", values="metric")
    summary = {
        "row_minima": {str(t): _argmin(row) for t, row in matrix.iterrows()},
        "column_minima": {str(lam): _argmin(col) for lam, col in matrix.items()},
        "failures": cells.loc[cells["error"].notna(), ["theta", "lambda_lin", "error"]].to_dict("records"),
    }
    finite = cells[np.isfinite(cells["metric"])]
    if len(finite):
        best = finite.loc[finite["metric"].idxmin()]
        summary["grid_minimum"] = {"theta": float(best["theta"]), "lambda_lin": float(best["lambda_lin"]),
                                   "metric": float(best["metric"])}
    else:
        summary["grid_minimum"] = None
    return summary


def _argmin(series: pd.Series) -> Optional[float]:
    series = series.dropna()
    return None if series.empty else float(series.idxmin())


def cmd_sweep(run_config: RunConfig) -> int:
    try:
        get_problem(run_config.problem)
        run_config.to_params(False)
        cells = sweep_cells(run_config)
        summary = sweep_summary(cells)
        out = Path(run_config.output or config.OUTPUT_DIR)
        out.mkdir(parents=True, exist_ok=True)
        matrix = cells.pivot(index="theta", columns="lambda_lin", values="metric")
        matrix.to_csv(out / config.SWEEP_FILE, float_format=config.CSV_FLOAT_FORMAT)
        (out / config.SWEEP_SUMMARY_FILE).write_text(json.dumps(summary, indent=2, default=str))
    except (AilfemError, OSError) as e:
        logger.error(f"Sweep failed: {e}")
        return 1
    print(f"✅ Sweep written to {out} | best cell: {summary['grid_minimum']}")
    return 0


# ==================== VERIFY / REPORT ====================

def cmd_verify() -> int:
    import diagnostic
    return 0 if diagnostic.run_all() else 1


def cmd_report(db_path: str = config.DB_PATH, run_id: Optional[int] = None) -> int:
    import dashboard
    if not Path(db_path).exists():
        logger.error(f"No run database at {db_path}")
        return 1
    dashboard.main(db_path, run_id)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Adaptive iteratively linearized finite elements")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one adaptive computation")
    p_run.add_argument("--config", help="JSON run configuration")

    p_sweep = sub.add_parser("sweep", help="theta x lambda_lin parameter study")
    p_sweep.add_argument("--config", help="JSON run configuration (thetas, lambdas, workers)")

    sub.add_parser("verify", help="run the invariant suites")

    p_report = sub.add_parser("report", help="show stored runs")
    p_report.add_argument("--db", default=config.DB_PATH)
    p_report.add_argument("--run-id", type=int)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point"""
    args = build_parser().parse_args(argv)
    if args.command in ("run", "sweep"):
        try:
            run_config = RunConfig.from_file(args.config)
        except (AilfemError, TypeError) as e:
            logger.error(f"Invalid configuration: {e}")
            return 1
        return cmd_run(run_config) if args.command == "run" else cmd_sweep(run_config)
    if args.command == "verify":
        return cmd_verify()
    return cmd_report(args.db, args.run_id)


if __name__ == "__main__":
    sys.exit(main())
