#!/usr/bin/env python3
"""
Run Dashboard - Inspect Stored Runs
Shows recent runs, the per-level history of one run and its events.
"""
from datetime import datetime
from typing import Optional

import config
from database import RunDatabase


def print_banner(text):
    """Print a fancy banner"""
    print("\n" + "="*70)
    print(f"  {text}")
    print("="*70)


def _fmt(value, spec: str) -> str:
    return "-" if value is None else format(value, spec)


def show_recent_runs(db: RunDatabase, limit: int = 15):
    """Display the most recent runs"""
    print_banner("📋 RECENT RUNS")

    runs = db.get_runs(limit=limit)
    if not runs:
        print("No runs recorded yet.")
        return

    print(f"\n{'Id':<5} {'Problem':<9} {'Method':<22} {'Stop':<14} {'Lvls':<5} {'Dofs':<8} "
          f"{'eta':<11} {'Steps':<7} {'q_alg':<7} {'Slope':<7} {'Time'}")
    print("-" * 110)
    for run in runs:
        status = "🟢" if run['termination_reason'] in ("tolerance-met", "exact-hit") else "🔴"
        print(f"{run['run_id']:<5} {run['problem']:<9} {run['method'][:22]:<22} "
              f"{status} {str(run['termination_reason']):<11} {_fmt(run['levels'], '<5')} "
              f"{_fmt(run['final_dofs'], '<8')} {_fmt(run['final_eta'], '<11.4e')} "
              f"{_fmt(run['algebraic_steps'], '<7')} {_fmt(run['q_alg'], '<7.3f')} "
              f"{_fmt(run['slope_dofs'], '<7.3f')} {_fmt(run['wall_time'], '.1f')}s")


def show_run_levels(db: RunDatabase, run_id: int):
    """Display the mesh levels of one run"""
    print_banner(f"📈 LEVELS OF RUN {run_id}")

    levels = db.get_levels(run_id)
    if levels.empty:
        print("No levels recorded for this run.")
        return

    print(f"\n{'l':<5} {'#T':<9} {'Dofs':<9} {'Marked':<8} {'k_':<4} {'eta':<12} {'J_max':<6} {'alpha_min'}")
    print("-" * 70)
    for row in levels.itertuples():
        print(f"{row.ell:<5} {row.n_triangles:<9} {row.n_dofs:<9} {row.n_marked:<8} {row.k_final:<4} "
              f"{row.eta:<12.4e} {row.j_max:<6} {row.alpha_min:.4g}")


def show_events(db: RunDatabase, run_id: Optional[int] = None):
    """Display warnings and safeguard events"""
    print_banner("⚠️ RUN EVENTS")

    events = db.get_events(run_id)
    if not events:
        print("No events recorded.")
        return

    for event in events:
        ts = datetime.fromisoformat(event['timestamp']).strftime("%m-%d %H:%M:%S")
        print(f"{ts:<17} run {str(event['run_id']):<5} {event['severity']:<9} {event['event_type']:<16} "
              f"{event['message']}")


def main(db_path: str = config.DB_PATH, run_id: Optional[int] = None):
    """Main dashboard"""
    db = RunDatabase(db_path)
    print("\n" + "="*70)
    print("  🔺 ADAPTIVE SOLVER DASHBOARD")
    print("="*70)
    print(f"  Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')} | {db_path}")
    print("="*70)

    show_recent_runs(db)
    if run_id is None:
        runs = db.get_runs(limit=1)
        run_id = runs[0]['run_id'] if runs else None
    if run_id is not None:
        show_run_levels(db, run_id)
    show_events(db, run_id)

    print("\n" + "="*70)
    print("  Dashboard complete.")
    print("="*70 + "\n")
    db.close()


if __name__ == "__main__":
    main()
