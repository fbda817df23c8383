import itertools
from collections import defaultdict
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

import adaptive
from adaptive import (
    HISTORY_COLUMNS,
    AdaptiveParams,
    AdaptiveRunner,
    LoopState,
    RunHistory,
    StepRecord,
    doerfler_mark,
    run,
)
from estimator import IndicatorField
from exceptions import InvalidParameterError, UnknownNameError
from meshing import make_domain, uniform_refine
from nonlinearity import builtin
from problems import Benchmark, ProblemData, get_problem, zero_scalar, zero_vector


@pytest.fixture(scope="module")
def lshape_history():
    return run(get_problem("lshape"), AdaptiveParams(eta_stop=0.3, exact_error=True))


def _brute_force_doerfler(values, theta):
    target = theta * values.sum() * (1 - 1e-12)
    for size in range(1, len(values) + 1):
        best = max(itertools.combinations(range(len(values)), size), key=lambda c: values[list(c)].sum())
        if values[list(best)].sum() >= target:
            return sorted(best)
    return list(range(len(values)))


def test_doerfler_minimal_against_brute_force(rng):
    meshes = [make_domain("lshape"), make_domain("zshape"), uniform_refine(uniform_refine(make_domain("square"))),
              uniform_refine(make_domain("lshape"))]
    assert all(m.n_triangles <= 15 for m in meshes)
    for i in range(200):
        mesh = meshes[i % len(meshes)]
        values = rng.exponential(size=mesh.n_triangles)
        theta = rng.uniform(0.05, 0.95)
        marked = doerfler_mark(IndicatorField(mesh, values), theta)
        assert marked.tolist() == _brute_force_doerfler(values, theta)


def test_doerfler_edge_cases():
    mesh = make_domain("lshape")
    assert doerfler_mark(IndicatorField(mesh, np.zeros(6)), 0.5).size == 0
    values = np.array([0.0, 1.0, 2.0, 0.0, 3.0, 1.0])
    assert doerfler_mark(IndicatorField(mesh, values), 1.0).tolist() == [1, 2, 4, 5]
    # ties go to the smaller triangle index
    assert doerfler_mark(IndicatorField(mesh, np.ones(6)), 0.5).tolist() == [0, 1, 2]
    with pytest.raises(InvalidParameterError):
        doerfler_mark(IndicatorField(mesh, values), 0.0)
    with pytest.raises(InvalidParameterError):
        doerfler_mark(IndicatorField(mesh, values), 1.5)


@pytest.mark.parametrize("kwargs", [
    {"theta": 0.0}, {"theta": 1.1}, {"lambda_lin": 0.0}, {"rho": 1.0}, {"alpha_min_init": 0.0},
    {"j_max_init": 0}, {"j_max_init": 1.5}, {"tau": -1.0}, {"c_mark": 0.5}, {"max_total_steps": 0},
    {"eta_stop": 0.0}, {"solver": "jacobi"},
])
def test_invalid_params(kwargs):
    with pytest.raises(InvalidParameterError):
        AdaptiveParams(**kwargs)


def test_method_strings_are_parsed():
    params = AdaptiveParams(method="zarantonello:0.1")
    assert params.method.name == "zarantonello:0.1"
    assert params.describe()["method"] == "zarantonello:0.1"
    with pytest.raises(UnknownNameError):
        AdaptiveParams(method="gauss-newton")


def test_lshape_run_terminates(lshape_history):
    history = lshape_history
    assert history.termination_reason == "tolerance-met"
    assert history.final_record.eta < 0.3
    assert len(history.levels) == history.final_record.ell + 1
    assert history.final_mesh.n_triangles == history.levels[-1].n_triangles


def test_record_order_and_cost(lshape_history):
    records = lshape_history.records
    assert all(a.index < b.index for a, b in zip(records, records[1:]))
    assert all(a.cum_cost < b.cum_cost for a, b in zip(records, records[1:]))
    triangles = {lv.ell: lv.n_triangles for lv in lshape_history.levels}
    assert records[-1].cum_cost == sum(triangles[r.ell] for r in records)


def test_every_level_starts_with_nested_iterate(lshape_history):
    first = {}
    for r in lshape_history.records:
        first.setdefault(r.ell, r)
    for ell, record in first.items():
        assert (record.k, record.j) == (0, 0)
        assert record.norm_inc_lin == 0.0 and np.isnan(record.alpha_kj)


def test_energy_decreases_along_accepted_steps(lshape_history):
    accepted = defaultdict(dict)
    for r in lshape_history.records:
        accepted[r.ell][r.k] = r.energy
    for ell, energies in accepted.items():
        values = [energies[k] for k in sorted(energies)]
        for before, after in zip(values, values[1:]):
            assert after <= before + 1e-12 * abs(before)


def test_linearization_stop_holds_at_level_end(lshape_history):
    params = lshape_history.params
    final = lshape_history.level_final_records()
    for record in final:
        assert record.dl2_inc <= params.lambda_lin * record.eta ** 2 * (1 + 1e-12)


def test_kacanov_weights_within_bounds(lshape_history):
    n = builtin("lshape")
    for _, _, low, high in lshape_history.weight_ranges:
        assert n.alpha - 1e-12 <= low <= high <= n.growth_upper + 1e-12


def test_history_frame_and_csv(lshape_history, tmp_path):
    frame = lshape_history.to_frame()
    assert list(frame.columns) == HISTORY_COLUMNS + ["exact_error"]
    assert len(frame) == len(lshape_history.records)
    path = tmp_path / "out" / "history.csv"
    lshape_history.to_csv(path)
    loaded = pd.read_csv(path)
    assert list(loaded.columns) == list(frame.columns)
    assert np.array_equal(loaded["cum_cost"].to_numpy(), frame["cum_cost"].to_numpy())
    assert np.allclose(loaded["eta"].to_numpy(), frame["eta"].to_numpy(), rtol=0, atol=0)


def test_algebraic_state_updates(lshape_history):
    records = [r for r in lshape_history.records if r.j > 0]
    for before, after in zip(records, records[1:]):
        assert after.J_max >= before.J_max
        assert after.alpha_min <= before.alpha_min


def test_zshape_run():
    history = run(get_problem("zshape"), AdaptiveParams(eta_stop=0.3))
    assert history.termination_reason == "tolerance-met"
    assert "exact_error" not in history.to_frame().columns


def test_zarantonello_run():
    problem = get_problem("lshape")
    history = run(problem, AdaptiveParams(method=f"zarantonello:{problem.zarantonello_delta!r}", eta_stop=0.5))
    assert history.termination_reason == "tolerance-met"


def test_direct_solver_repeats_exact_solution():
    history = run(get_problem("lshape"), AdaptiveParams(eta_stop=0.5, solver="direct"))
    assert history.termination_reason == "tolerance-met"
    assert all(r.norm_inc_alg == 0.0 for r in history.records if r.j >= 2)


def test_step_cap_returns_partial_history():
    events = []
    history = run(get_problem("lshape"), AdaptiveParams(max_total_steps=3),
                  on_event=lambda *event: events.append(event))
    assert history.termination_reason == "step-cap"
    assert history.n_algebraic_steps == 3
    assert events and events[0][0] == "STEP_CAP"


def test_exact_hit_for_zero_data():
    problem = Benchmark(
        name="zero",
        domain="square",
        nonlinearity=builtin("lshape"),
        data=ProblemData(f=zero_scalar, f_vec=zero_vector, name="zero"),
        zarantonello_delta=1.0 / 6.0,
    )
    history = run(problem, AdaptiveParams())
    assert history.termination_reason == "exact-hit"
    assert history.final_record.eta == 0.0


def test_level_callback_and_diagnostics():
    levels = []
    history = run(get_problem("lshape"), AdaptiveParams(eta_stop=0.5, diagnostics=True), on_level=levels.append)
    assert [lv.ell for lv in levels] == list(range(len(history.levels)))
    assert history.diagnostics_retained
    assert len(history.retained_steps) == len(history.records)
    assert len(history.retained_levels) == len(history.levels)
    for level in history.retained_levels:
        assert len(level.accepted) == history.levels[level.ell].k_final + 1


def test_history_rejects_out_of_order_records():
    history = RunHistory(problem="lshape", params=AdaptiveParams())
    record = StepRecord(ell=0, k=1, j=1, dofs=0, eta=1.0, norm_inc_lin=0.0, norm_inc_alg=0.0, dl2_inc=0.0,
                        alpha_kj=np.nan, alpha_min=100.0, J_max=1, energy=0.0, cum_cost=6)
    history.append(record)
    with pytest.raises(InvalidParameterError):
        history.append(record)


# ---------- stopping tests on both sides of their thresholds ----------
# Iterates are 1-vectors x; the energy and the squared estimator are looked up by x,
# so every alpha = (E_prev - E(x)) / |x - x_accepted|^2 is fixed by the test.

class ScriptedDisc:
    n_dofs = 1

    def __init__(self, energies, eta_sq=None):
        self.energies = energies
        self.eta_sq = eta_sq or {}

    def norm(self, coefficients):
        return float(abs(coefficients[0]))

    def energy(self, coefficients):
        return self.energies[float(coefficients[0])]


class ScriptedSolver:
    def __init__(self, values):
        self.values = iter(values)

    def one_step(self, system, previous):
        return SimpleNamespace(coefficients=np.array([next(self.values)]))


@pytest.fixture
def scripted(monkeypatch):
    monkeypatch.setattr(adaptive, "element_indicators",
                        lambda disc, c: np.array([disc.eta_sq.get(float(c[0]), 1.0)]))

    def make(values, alpha_min=100.0, j_max=1, **params):
        runner = AdaptiveRunner(get_problem("lshape"), AdaptiveParams(**params))
        runner._solver = ScriptedSolver(values)
        runner.method = SimpleNamespace(build_system=lambda disc, u: SimpleNamespace(weight_range=(1.0, 1.0)))
        zero = SimpleNamespace(coefficients=np.zeros(1))
        state = LoopState(ell=0, k=1, j=0, alpha_min=alpha_min, j_max=j_max,
                          mesh=SimpleNamespace(n_triangles=1), dofs=None, u=zero, u_accepted=zero)
        return runner, state
    return make


def test_alpha_at_alpha_min_stops(scripted):
    runner, state = scripted([1.0], alpha_min=2.0)
    reason, _, energy = runner.algebraic_inner_loop(state, ScriptedDisc({1.0: -2.0}), None, 0.0)
    assert reason is None and energy == -2.0
    assert state.j == 1
    assert runner.history.final_record.alpha_kj == 2.0
    assert (state.j_max, state.alpha_min) == (1, 2.0)


def test_alpha_below_alpha_min_continues_and_updates(scripted):
    runner, state = scripted([1.0, 2.0], alpha_min=np.nextafter(2.0, np.inf), rho=0.25)
    alpha_min = state.alpha_min
    runner.algebraic_inner_loop(state, ScriptedDisc({1.0: -2.0, 2.0: -4.0}), None, 0.0)
    assert state.j == 2
    assert [r.alpha_kj for r in runner.history.records] == [2.0, 1.0]
    assert state.j_max == 2
    assert state.alpha_min == alpha_min * 0.25


def test_positive_alpha_stops_only_above_j_max(scripted):
    runner, state = scripted([1.0, 2.0, 3.0], alpha_min=100.0, j_max=2)
    runner.algebraic_inner_loop(state, ScriptedDisc({1.0: -1.0, 2.0: -2.0, 3.0: -3.0}), None, 0.0)
    assert state.j == 3
    assert (state.j_max, state.alpha_min) == (3, 50.0)


def test_nonpositive_alpha_never_stops(scripted):
    runner, state = scripted([1.0, 2.0, 3.0], alpha_min=100.0, j_max=1)
    runner.algebraic_inner_loop(state, ScriptedDisc({1.0: 1.0, 2.0: 0.0, 3.0: -9.0}), None, 0.0)
    assert [r.alpha_kj for r in runner.history.records] == [-1.0, 0.0, 1.0]
    assert state.j == 3 and state.j_max == 3


def test_equal_iterates_stop_with_nan_alpha(scripted):
    runner, state = scripted([0.0], alpha_min=100.0, j_max=1)
    reason, _, _ = runner.algebraic_inner_loop(state, ScriptedDisc({0.0: 0.0}), None, 0.0)
    assert reason is None and state.j == 1
    assert np.isnan(runner.history.final_record.alpha_kj)
    assert (state.j_max, state.alpha_min) == (1, 100.0)


def test_tau_is_checked_before_alpha(scripted):
    # eta = 0.5, |inc_lin| = |inc_alg| = 1: three-term value 2.5, alpha = 2 >= alpha_min
    disc = ScriptedDisc({1.0: -2.0}, {1.0: 0.25})
    runner, state = scripted([1.0], alpha_min=1.0, tau=2.5)
    reason, _, _ = runner.algebraic_inner_loop(state, disc, None, 0.0)
    assert reason == "tolerance-met" and state.j == 1

    runner, state = scripted([1.0], alpha_min=1.0, tau=np.nextafter(2.5, 0.0))
    reason, _, _ = runner.algebraic_inner_loop(state, disc, None, 0.0)
    assert reason is None and state.j == 1


def test_zero_three_term_value_is_exact_hit(scripted):
    runner, state = scripted([0.0])
    reason, _, _ = runner.algebraic_inner_loop(state, ScriptedDisc({0.0: 0.0}, {0.0: 0.0}), None, 0.0)
    assert reason == "exact-hit"


def test_linearization_stops_at_lambda_eta_squared(scripted):
    # dl2 = 2 against lambda_lin * eta^2 = 0.5 * 4
    runner, state = scripted([1.0], alpha_min=1e-3, lambda_lin=0.5)
    disc = ScriptedDisc({0.0: 0.0, 1.0: -2.0}, {1.0: 4.0})
    reason, eta_sq, _ = runner.linearization_loop(state, disc, None)
    assert reason is None and state.k == 1
    assert eta_sq.tolist() == [4.0]


def test_linearization_continues_just_above_threshold(scripted):
    runner, state = scripted([1.0, 3.0], alpha_min=1e-3, lambda_lin=0.5)
    disc = ScriptedDisc({0.0: 0.0, 1.0: -2.0, 3.0: -2.5}, {1.0: np.nextafter(4.0, 0.0), 3.0: 1.0})
    reason, _, energy = runner.linearization_loop(state, disc, None)
    assert reason is None and state.k == 2
    assert [r.index for r in runner.history.records] == [(0, 1, 1), (0, 2, 1)]
    assert [r.dl2_inc for r in runner.history.records] == [2.0, 0.5]
    assert energy == -2.5


def test_large_tau_ends_at_first_algebraic_step():
    history = run(get_problem("lshape"), AdaptiveParams(tau=1e6))
    assert history.termination_reason == "tolerance-met"
    assert [r.index for r in history.records] == [(0, 0, 0), (0, 1, 1)]
    assert len(history.levels) == 1


def test_no_stop_rule_is_rejected():
    with pytest.raises(InvalidParameterError):
        AdaptiveParams(eta_stop=None)
    assert AdaptiveParams(eta_stop=None, tau=1e-3).eta_stop is None
    assert AdaptiveParams().eta_stop == 1e-2
