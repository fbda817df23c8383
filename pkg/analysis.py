"""
Run Diagnostics - The Report Card
Quasi-error, convergence rates, energy contraction, estimator equivalence,
R-linear envelope fits and algebraic step statistics of a finished run.
"""
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

import config
from adaptive import RunHistory
from estimator import element_indicators
from exceptions import DiagnosticModeError, InsufficientDataError
from linearizations import oversolve
from solvers import direct_solve, estimate_contraction
from utils.logger import setup_logger

logger = setup_logger("ailfem.analysis")

References = Dict[int, np.ndarray]


@dataclass(frozen=True)
class RateSummary:
    slope_dofs: float
    slope_cost: float
    n_points: int
    first_level: int


def _require_diagnostics(history: RunHistory):
    if not history.diagnostics_retained:
        raise DiagnosticModeError("Run did not retain iterates; rerun with diagnostics enabled")


def reference_solutions(history: RunHistory) -> References:
    """Over-solved discrete solution u_l* per mesh level, started from the level's last accepted iterate"""
    _require_diagnostics(history)
    references = {}
    for level in history.retained_levels:
        start = level.disc.function(level.accepted[-1])
        references[level.ell] = oversolve(level.disc, start).coefficients
    return references


def quasi_error(history: RunHistory, references: Optional[References] = None) -> np.ndarray:
    """
    H = ||u_l* - u^{k,j}|| + ||u^{k,*} - u^{k,j}|| + eta(u^{k,j}) per record.
    u^{k,*} is the exact solution of the recorded linearized system; u^{0,*} = u^{0,0}.
    """
    _require_diagnostics(history)
    references = reference_solutions(history) if references is None else references
    discs = {level.ell: level.disc for level in history.retained_levels}

    exact_linearized = {}
    values = np.empty(len(history.retained_steps))
    for i, step in enumerate(history.retained_steps):
        disc = discs[step.ell]
        u = step.coefficients
        discretization_error = disc.norm(references[step.ell] - u)
        algebraic_error = 0.0
        if step.system is not None:
            key = id(step.system)
            if key not in exact_linearized:
                exact_linearized[key] = direct_solve(step.system).coefficients
            algebraic_error = disc.norm(exact_linearized[key] - u)
        eta = float(np.sqrt(element_indicators(disc, u).sum()))
        values[i] = discretization_error + algebraic_error + eta
    return values


def energy_contraction_ratios(history: RunHistory, references: Optional[References] = None) -> np.ndarray:
    """dl2(u_l*, u^{k,j_}) / dl2(u_l*, u^{k-1,j_}) for every accepted step k >= 1"""
    _require_diagnostics(history)
    references = reference_solutions(history) if references is None else references
    ratios = []
    for level in history.retained_levels:
        disc = level.disc
        e_star = disc.energy(references[level.ell])
        gaps = np.array([disc.energy(u) - e_star for u in level.accepted])
        floor = config.DL2_ROUNDOFF * max(abs(e_star), np.finfo(float).tiny)
        for before, after in zip(gaps[:-1], gaps[1:]):
            if before > floor:
                ratios.append(max(after, 0.0) / before)
    return np.array(ratios)


def estimator_equivalence(history: RunHistory, references: Optional[References] = None) -> np.ndarray:
    """eta(u^{k_,j_}) / eta(u_l*) per mesh level"""
    _require_diagnostics(history)
    references = reference_solutions(history) if references is None else references
    ratios = []
    for level in history.retained_levels:
        eta_final = np.sqrt(element_indicators(level.disc, level.accepted[-1]).sum())
        eta_star = np.sqrt(element_indicators(level.disc, references[level.ell]).sum())
        if eta_star > 0:
            ratios.append(eta_final / eta_star)
    return np.array(ratios)


def rates(history: RunHistory, cutoff: float = config.PRE_ASYMPTOTIC_CUTOFF) -> RateSummary:
    """
    Least-squares log-log slopes of the level-final estimator against dofs and
    against cumulative cost, excluding the first `cutoff` fraction of levels.
    """
    final = history.level_final_records()
    if len(final) < 2:
        raise InsufficientDataError(f"Rate fit needs at least 2 mesh levels, got {len(final)}")
    first = int(np.floor(cutoff * len(final)))
    used = [r for r in final[first:] if r.dofs > 0 and r.eta > 0]
    if len(used) < 2:
        raise InsufficientDataError("Fewer than 2 usable levels after the pre-asymptotic cutoff")

    log_eta = np.log([r.eta for r in used])
    slope_dofs = np.polyfit(np.log([r.dofs for r in used]), log_eta, 1)[0]
    slope_cost = np.polyfit(np.log([r.cum_cost for r in used]), log_eta, 1)[0]
    return RateSummary(float(slope_dofs), float(slope_cost), len(used), first)


def r_linear_fit(values) -> Tuple[float, float]:
    """
    Fit H_i <= C q^(i - i') H_i' for all i >= i'.
    q comes from the regression slope of log H; C is the smallest constant for that q.
    Non-positive entries are skipped but keep their step index. q > 1 is reported as is.
    """
    h = np.asarray(values, dtype=float).reshape(-1)
    usable = np.isfinite(h) & (h > 0)
    steps = np.flatnonzero(usable)
    h = h[usable]
    if len(h) < 2:
        raise InsufficientDataError("R-linear fit needs at least 2 positive values")
    log_q = np.polyfit(steps, np.log(h), 1)[0]
    shifted = np.log(h) - steps * log_q
    log_c = np.max(shifted - np.minimum.accumulate(shifted))
    return float(np.exp(log_q)), float(np.exp(log_c))


def closure_ratio(history: RunHistory) -> float:
    """max over l >= 1 of (#T_l - #T_0) / sum_{l' < l} #M_l'"""
    levels = history.levels
    if len(levels) < 2:
        raise InsufficientDataError("Closure ratio needs at least 2 mesh levels")
    marked = np.cumsum([lv.n_marked for lv in levels])
    ratios = [
        (levels[i].n_triangles - levels[0].n_triangles) / marked[i - 1]
        for i in range(1, len(levels)) if marked[i - 1] > 0
    ]
    return float(max(ratios))


def effectivity(history: RunHistory) -> np.ndarray:
    """exact_error / eta at the end of every mesh level"""
    values = [
        r.exact_error / r.eta for r in history.level_final_records()
        if r.exact_error is not None and r.eta > 0
    ]
    return np.array(values)


def algebraic_step_statistics(history: RunHistory, skip_levels: int = 3) -> Dict:
    """j_ per (l, k), the modal j_ after `skip_levels` levels and the last J_max update"""
    j_final = defaultdict(int)
    for r in history.records:
        if r.k > 0:
            j_final[(r.ell, r.k)] = max(j_final[(r.ell, r.k)], r.j)

    late = [j for (ell, _), j in j_final.items() if ell >= skip_levels]
    last_update = 0
    inner = [r for r in history.records if r.j > 0]
    for i in range(1, len(inner)):
        if inner[i].J_max != inner[i - 1].J_max:
            last_update = i

    return {
        "j_final": dict(j_final),
        "max_j": max(j_final.values()) if j_final else 0,
        "modal_j_after_skip": Counter(late).most_common(1)[0][0] if late else None,
        "last_jmax_update_step": last_update,
        "inner_steps": len(inner),
        "jmax_stable_fraction": 1.0 - last_update / len(inner) if inner else 1.0,
    }


def summarize(history: RunHistory, cutoff: float = config.PRE_ASYMPTOTIC_CUTOFF) -> Dict:
    """Everything the summary JSON reports; quantities that need more data are None"""
    final = history.final_record
    k_final = [lv.k_final for lv in history.levels]
    summary = {
        "problem": history.problem,
        "params": history.params.describe(),
        "termination_reason": history.termination_reason,
        "levels": len(history.levels),
        "final_eta": final.eta,
        "final_dofs": final.dofs,
        "final_triangles": history.final_mesh.n_triangles if history.final_mesh is not None else None,
        "final_energy": final.energy,
        "final_exact_error": final.exact_error,
        "algebraic_steps": history.n_algebraic_steps,
        "cum_cost": final.cum_cost,
        "k_final_max": max(k_final) if k_final else None,
        "k_final_mean": float(np.mean(k_final)) if k_final else None,
        "final_alpha_min": final.alpha_min,
        "final_J_max": final.J_max,
        "wall_time": history.wall_time,
    }

    steps = algebraic_step_statistics(history)
    summary["max_j"] = steps["max_j"]
    summary["modal_j_after_3_levels"] = steps["modal_j_after_skip"]
    summary["jmax_stable_fraction"] = steps["jmax_stable_fraction"]

    try:
        summary["q_alg"] = estimate_contraction(history.solver_stats)
    except InsufficientDataError:
        summary["q_alg"] = None
    try:
        summary["rates"] = asdict(rates(history, cutoff))
    except InsufficientDataError as e:
        logger.info(f"No rate fit: {e}")
        summary["rates"] = None
    try:
        summary["closure_ratio"] = closure_ratio(history)
    except InsufficientDataError:
        summary["closure_ratio"] = None

    eff = effectivity(history)
    summary["effectivity"] = {"min": float(eff.min()), "max": float(eff.max())} if len(eff) else None
    if history.weight_ranges:
        ranges = np.array([w[2:] for w in history.weight_ranges], dtype=float)
        summary["weight_range"] = [float(np.nanmin(ranges[:, 0])), float(np.nanmax(ranges[:, 1]))]
    else:
        summary["weight_range"] = None
    return summary


def level_table(history: RunHistory) -> List[Dict]:
    return [asdict(level) for level in history.levels]
