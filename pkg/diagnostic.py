#!/usr/bin/env python3
"""
Solver Diagnostic - The Checkup
Runs the invariant suites of every module at small scale. Used by `main.py verify`.
"""
import itertools
import sys
import tempfile
from pathlib import Path

import numpy as np


def check_dependencies():
    """Check if required packages are installed"""
    print("🔍 Checking dependencies...")

    required = {
        'numpy': 'numpy',
        'scipy': 'scipy',
        'pandas': 'pandas',
        'psutil': 'psutil',
    }

    missing = []
    for module, package in required.items():
        try:
            __import__(module)
            print(f"  ✅ {package}")
        except ImportError:
            print(f"  ❌ {package} - MISSING")
            missing.append(package)

    if missing:
        print(f"\n⚠️  Missing packages: {', '.join(missing)}")
        print("Install with: pip install -r requirements.txt")
        return False
    return True


def check_nonlinearities():
    """Builtin laws: growth condition, Jacobian against finite differences"""
    print("\n🔍 Checking nonlinearities...")
    from nonlinearity import BUILTINS, builtin, check_growth_condition, describe, flux, flux_jacobian

    ok = True
    rng = np.random.default_rng(0)
    for name in BUILTINS:
        n = builtin(name)
        holds, worst = check_growth_condition(n)
        g = rng.uniform(-3, 3, size=(50, 2))
        h = 1e-6
        fd = np.stack([(flux(n, g + h * e) - flux(n, g - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
        jac_ok = np.allclose(flux_jacobian(n, g), fd, rtol=1e-6, atol=1e-8)
        status = "✅" if holds and jac_ok else "❌"
        print(f"  {status} {describe(n, holds)} | worst={worst:.2e} | jacobian={'ok' if jac_ok else 'MISMATCH'}")
        ok &= holds and jac_ok
    return ok


def check_meshes():
    """Domains, conformity after refinement, bounded shape regularity"""
    print("\n🔍 Checking meshes...")
    from meshing import DOMAINS, check_conformity, make_domain, refine, shape_regularity

    expected_area = {"square": 1.0, "lshape": 3.0, "zshape": 3.5}
    rng = np.random.default_rng(1)
    ok = True
    for name in DOMAINS:
        mesh = make_domain(name)
        area_ok = abs(mesh.total_area - expected_area[name]) < 1e-12
        initial_regularity = shape_regularity(mesh)
        conforming, reason = True, ""
        for _ in range(6):
            marked = rng.choice(mesh.n_triangles, size=max(1, mesh.n_triangles // 4), replace=False)
            mesh = refine(mesh, marked)
            conforming, reason = check_conformity(mesh)
            if not conforming:
                break
        regular = shape_regularity(mesh) <= 4 * initial_regularity
        status = "✅" if area_ok and conforming and regular else "❌"
        print(f"  {status} {name}: #T={mesh.n_triangles} area_ok={area_ok} {reason}")
        ok &= area_ok and conforming and regular
    return ok


def _flat_problem():
    """f = 1, f_vec = 0: piecewise-constant data, the estimator is evaluated without projection error"""
    from problems import ProblemData, one_scalar, zero_vector
    return ProblemData(f=one_scalar, f_vec=zero_vector, name="flat")


def check_energy_calculus():
    """dl2 antisymmetry and additivity on random triples"""
    print("\n🔍 Checking energy differences...")
    from fem import Discretization
    from meshing import make_domain, uniform_refine
    from nonlinearity import builtin

    rng = np.random.default_rng(2)
    mesh = uniform_refine(uniform_refine(uniform_refine(make_domain("lshape"))))
    disc = Discretization.for_mesh(mesh, _flat_problem(), builtin("lshape"))
    worst = 0.0
    for _ in range(100):
        u, v, w = (rng.standard_normal(disc.n_dofs) for _ in range(3))
        eu, ev, ew = disc.energy(u), disc.energy(v), disc.energy(w)
        scale = max(abs(eu), abs(ev), abs(ew), 1.0)
        worst = max(worst, abs((ew - eu) + (eu - ew)) / scale, abs((ew - eu) - ((ev - eu) + (ew - ev))) / scale)
    ok = worst <= 1e-12
    print(f"  {'✅' if ok else '❌'} worst relative defect {worst:.2e}")
    return ok


def check_estimator_reduction():
    """eta_h(T_h minus T_H, v_H) <= 2^(-1/4) eta_H(T_H minus T_h, v_H)"""
    print("\n🔍 Checking estimator reduction...")
    from estimator import element_indicators
    from fem import Discretization, prolongate
    from meshing import make_domain, uniform_refine
    from nonlinearity import builtin

    rng = np.random.default_rng(3)
    data, n = _flat_problem(), builtin("lshape")
    ok = True
    for name in ("square", "lshape", "zshape"):
        coarse = uniform_refine(uniform_refine(make_domain(name)))
        fine = uniform_refine(coarse)
        disc_c = Discretization.for_mesh(coarse, data, n)
        disc_f = Discretization.for_mesh(fine, data, n)
        fine_mask = fine.refined_mask(coarse)
        coarse_mask = fine.coarse_refined_mask(coarse)
        violations = 0
        for _ in range(20):
            v = disc_c.function(rng.standard_normal(disc_c.n_dofs))
            v_fine = prolongate(v, disc_f.dofs)
            left = np.sqrt(element_indicators(disc_f, v_fine.coefficients)[fine_mask].sum())
            right = np.sqrt(element_indicators(disc_c, v.coefficients)[coarse_mask].sum())
            violations += left > 2 ** -0.25 * right * (1 + 1e-12)
        print(f"  {'✅' if violations == 0 else '❌'} {name}: {violations} violations")
        ok &= violations == 0
    return ok


def check_linearizations():
    """Fixed points and coercivity of the three iteration maps"""
    print("\n🔍 Checking linearizations...")
    from fem import Discretization
    from linearizations import parse_method
    from meshing import make_domain, uniform_refine
    from nonlinearity import builtin
    from solvers import direct_solve

    rng = np.random.default_rng(4)
    n = builtin("lshape")
    mesh = uniform_refine(uniform_refine(uniform_refine(make_domain("lshape"))))
    disc = Discretization.for_mesh(mesh, _flat_problem(), n)
    ok = True
    for text in ("kacanov", "zarantonello:0.16666666666666666", "newton:1.0"):
        method = parse_method(text).bind(n)
        c_star = method.coercivity_constant(n)
        worst = np.inf
        for _ in range(10):
            u = disc.function(0.3 * rng.standard_normal(disc.n_dofs))
            phi = direct_solve(method.build_system(disc, u))
            dl2 = disc.energy(u.coefficients) - disc.energy(phi.coefficients)
            gap = disc.norm(phi.coefficients - u.coefficients) ** 2
            if gap > 0:
                worst = min(worst, dl2 / gap)
        passed = worst >= c_star * (1 - 1e-8)
        print(f"  {'✅' if passed else '❌'} {method.name}: min dl2/||inc||^2 = {worst:.4f} >= C* = {c_star:.4f}")
        ok &= passed
    return ok


def check_multigrid():
    """a-norm contraction of the local V-cycle on an adaptively refined L-shape"""
    print("\n🔍 Checking multigrid...")
    from fem import FeFunction
    from interfaces import LinearizedSystem
    from fem import assemble_weighted_stiffness
    from meshing import make_domain, refine
    from solvers import MultigridSolver, MultilevelHierarchy, estimate_contraction

    mesh = make_domain("lshape")
    hierarchy = MultilevelHierarchy(mesh)
    for _ in range(8):
        near_corner = np.flatnonzero(np.linalg.norm(mesh.vertices[mesh.triangles].mean(axis=1), axis=1) < 0.5)
        marked = near_corner if len(near_corner) else np.arange(mesh.n_triangles)
        mesh = refine(mesh, np.union1d(marked, np.arange(0, mesh.n_triangles, 3)))
        hierarchy.extend(mesh)
    dofs = hierarchy.finest
    matrix = assemble_weighted_stiffness(dofs, 1.0)
    system = LinearizedSystem(matrix, np.ones(dofs.n_dofs), FeFunction.zeros(dofs))
    solver = MultigridSolver(hierarchy, measure=True)
    u = FeFunction.zeros(dofs)
    for _ in range(10):
        u = solver.one_step(system, u)
    q = estimate_contraction(solver.stats)
    ok = q < 0.9 and hierarchy.coverage()
    print(f"  {'✅' if ok else '❌'} {hierarchy.n_levels} levels, {dofs.n_dofs} dofs, q_alg = {q:.3f}")
    return ok


def check_marking():
    """Doerfler sets against brute force on small fields"""
    print("\n🔍 Checking Doerfler marking...")
    from adaptive import doerfler_mark
    from estimator import IndicatorField
    from meshing import make_domain

    mesh = make_domain("zshape")
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(30):
        values = rng.exponential(size=mesh.n_triangles)
        theta = rng.uniform(0.05, 1.0)
        marked = doerfler_mark(IndicatorField(mesh, values), theta)
        target = theta * values.sum()
        best = next(
            size for size in range(1, mesh.n_triangles + 1)
            if max(values[list(c)].sum() for c in itertools.combinations(range(mesh.n_triangles), size))
            >= target * (1 - 1e-12)
        )
        mismatches += len(marked) != best or values[marked].sum() < target * (1 - 1e-12)
    print(f"  {'✅' if mismatches == 0 else '❌'} {mismatches} mismatches on {mesh.n_triangles} triangles")
    return mismatches == 0


def check_adaptive_run():
    """Short L-shape run: termination, index order, energy monotonicity"""
    print("\n🔍 Checking adaptive loop...")
    from adaptive import AdaptiveParams, run
    from problems import get_problem

    history = run(get_problem("lshape"), AdaptiveParams(eta_stop=0.3))
    accepted = [r for r in history.records if r.j == 0]
    ok = history.termination_reason == "tolerance-met" and history.final_record.eta < 0.3
    ok &= all(a.index < b.index for a, b in zip(history.records, history.records[1:]))
    ok &= all(lv.k_final >= 1 for lv in history.levels)
    print(f"  {'✅' if ok else '❌'} {len(history.levels)} levels, {history.n_algebraic_steps} steps, "
          f"eta={history.final_record.eta:.3e}, {len(accepted)} level starts")
    return ok


def check_database():
    """Check database round trip"""
    print("\n🔍 Checking database...")
    try:
        from database import RunDatabase

        with tempfile.TemporaryDirectory() as tmp:
            db = RunDatabase(str(Path(tmp) / "check.db"))
            run_id = db.start_run("lshape", "kacanov", {"theta": 0.5})
            db.log_event("DIAGNOSTIC", "Database check", "INFO", run_id=run_id)
            found = db.get_run(run_id) is not None
            db.close()
        print(f"  {'✅' if found else '❌'} Database initialized successfully")
        return found
    except Exception as e:
        print(f"  ❌ Database error: {e}")
        return False


CHECKS = [
    ("Dependencies", check_dependencies),
    ("Nonlinearities", check_nonlinearities),
    ("Meshes", check_meshes),
    ("Energy calculus", check_energy_calculus),
    ("Estimator reduction", check_estimator_reduction),
    ("Linearizations", check_linearizations),
    ("Multigrid", check_multigrid),
    ("Doerfler marking", check_marking),
    ("Adaptive loop", check_adaptive_run),
    ("Database", check_database),
]


def run_all() -> bool:
    """Run all diagnostic checks"""
    print("="*60)
    print("🏥 ADAPTIVE SOLVER DIAGNOSTIC")
    print("="*60)

    results = {}
    for name, check_func in CHECKS:
        try:
            results[name] = bool(check_func())
        except Exception as e:
            print(f"  ❌ {name} raised {type(e).__name__}: {e}")
            results[name] = False

    # Summary
    print("\n" + "="*60)
    print("📊 DIAGNOSTIC SUMMARY")
    print("="*60)
    for name, passed in results.items():
        status = "✅ PASS" if passed else "❌ FAIL"
        print(f"{status} - {name}")
    print("="*60)

    all_passed = all(results.values())
    if all_passed:
        print("\n🎉 All checks passed!")
    else:
        print("\n⚠️  Some checks failed. See the sections above.")
    return all_passed


if __name__ == "__main__":
    sys.exit(0 if run_all() else 1)
