"""
Database Layer - The Memory
Persists runs, their (l,k,j) step histories, per-level summaries and run events.
"""
import json
import math
import sqlite3
import threading
from contextlib import contextmanager
from datetime import datetime
from typing import Dict, Iterable, List, Optional

import pandas as pd

import config


def _real(value):
    """sqlite stores NaN as NULL"""
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


class RunDatabase:
    """Thread-safe store of adaptive runs"""

    def __init__(self, db_path: str = config.DB_PATH):
        self.db_path = db_path
        self.local = threading.local()
        self.init_tables()

    @contextmanager
    def get_connection(self):
        """Thread-safe connection manager"""
        if not hasattr(self.local, 'conn'):
            self.local.conn = sqlite3.connect(self.db_path, check_same_thread=False)
            self.local.conn.row_factory = sqlite3.Row
        try:
            yield self.local.conn
        except Exception as e:
            self.local.conn.rollback()
            raise e

    def close(self):
        if hasattr(self.local, 'conn'):
            self.local.conn.close()
            del self.local.conn

    def init_tables(self):
        """Create all necessary tables"""
        with self.get_connection() as conn:
            cursor = conn.cursor()

            # 1. Runs (one row per adaptive run)
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                    started TEXT NOT NULL,
                    finished TEXT,
                    problem TEXT NOT NULL,
                    method TEXT NOT NULL,
                    params TEXT NOT NULL,
                    termination_reason TEXT,
                    levels INTEGER,
                    final_dofs INTEGER,
                    final_eta REAL,
                    algebraic_steps INTEGER,
                    cum_cost INTEGER,
                    q_alg REAL,
                    slope_dofs REAL,
                    wall_time REAL,
                    summary TEXT
                )
            ''')

            # 2. Steps (every (l,k,j))
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS steps (
                    run_id INTEGER NOT NULL,
                    ell INTEGER NOT NULL,
                    k INTEGER NOT NULL,
                    j INTEGER NOT NULL,
                    dofs INTEGER NOT NULL,
                    eta REAL,
                    norm_inc_lin REAL,
                    norm_inc_alg REAL,
                    dl2_inc REAL,
                    alpha_kj REAL,
                    alpha_min REAL,
                    J_max INTEGER,
                    energy REAL,
                    cum_cost INTEGER,
                    exact_error REAL,
                    PRIMARY KEY (run_id, ell, k, j),
                    FOREIGN KEY (run_id) REFERENCES runs(run_id)
                )
            ''')

            # 3. Levels (one row per mesh)
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS levels (
                    run_id INTEGER NOT NULL,
                    ell INTEGER NOT NULL,
                    n_triangles INTEGER NOT NULL,
                    n_dofs INTEGER NOT NULL,
                    n_marked INTEGER NOT NULL,
                    k_final INTEGER NOT NULL,
                    eta REAL,
                    energy REAL,
                    alpha_min REAL,
                    j_max INTEGER,
                    exact_error REAL,
                    PRIMARY KEY (run_id, ell),
                    FOREIGN KEY (run_id) REFERENCES runs(run_id)
                )
            ''')

            # 4. Run events (warnings, clamps, caps)
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS run_events (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER,
                    timestamp TEXT NOT NULL,
                    event_type TEXT NOT NULL,
                    message TEXT,
                    severity TEXT DEFAULT 'INFO'
                )
            ''')
            conn.commit()

    # ==================== RUN OPERATIONS ====================

    def start_run(self, problem: str, method: str, params: Dict) -> int:
        """Register a run; returns its id"""
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO runs (started, problem, method, params)
                VALUES (?, ?, ?, ?)
            ''', (datetime.now().isoformat(), problem, method, json.dumps(params, default=str)))
            conn.commit()
            return cursor.lastrowid

    def finish_run(self, run_id: int, summary: Dict):
        rates = summary.get("rates") or {}
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                UPDATE runs
                SET finished = ?, termination_reason = ?, levels = ?, final_dofs = ?, final_eta = ?,
                    algebraic_steps = ?, cum_cost = ?, q_alg = ?, slope_dofs = ?, wall_time = ?, summary = ?
                WHERE run_id = ?
            ''', (datetime.now().isoformat(), summary.get("termination_reason"), summary.get("levels"),
                  summary.get("final_dofs"), _real(summary.get("final_eta")), summary.get("algebraic_steps"),
                  summary.get("cum_cost"), _real(summary.get("q_alg")), _real(rates.get("slope_dofs")),
                  _real(summary.get("wall_time")), json.dumps(summary, default=str), run_id))
            conn.commit()

    # ==================== STEP OPERATIONS ====================

    def bulk_insert_steps(self, run_id: int, records: Iterable):
        """Insert StepRecords efficiently"""
        if not config.ENABLE_STEP_RECORDING:
            return
        data = [
            (run_id, r.ell, r.k, r.j, r.dofs, _real(r.eta), _real(r.norm_inc_lin), _real(r.norm_inc_alg),
             _real(r.dl2_inc), _real(r.alpha_kj), _real(r.alpha_min), r.J_max, _real(r.energy),
             r.cum_cost, _real(r.exact_error))
            for r in records
        ]
        if not data:
            return
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.executemany('''
                INSERT INTO steps (run_id, ell, k, j, dofs, eta, norm_inc_lin, norm_inc_alg, dl2_inc,
                                   alpha_kj, alpha_min, J_max, energy, cum_cost, exact_error)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', data)
            conn.commit()

    def insert_level(self, run_id: int, level):
        """Record a finished mesh level (LevelSummary)"""
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO levels (run_id, ell, n_triangles, n_dofs, n_marked, k_final, eta, energy,
                                    alpha_min, j_max, exact_error)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', (run_id, level.ell, level.n_triangles, level.n_dofs, level.n_marked, level.k_final,
                  _real(level.eta), _real(level.energy), _real(level.alpha_min), level.j_max,
                  _real(level.exact_error)))
            conn.commit()

    # ==================== QUERIES ====================

    def get_runs(self, limit: int = 20) -> List[Dict]:
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                SELECT run_id, started, finished, problem, method, termination_reason, levels,
                       final_dofs, final_eta, algebraic_steps, cum_cost, q_alg, slope_dofs, wall_time
                FROM runs
                ORDER BY run_id DESC
                LIMIT ?
            ''', (limit,))
            return [dict(row) for row in cursor.fetchall()]

    def get_run(self, run_id: int) -> Optional[Dict]:
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('SELECT * FROM runs WHERE run_id = ?', (run_id,))
            row = cursor.fetchone()
            return dict(row) if row else None

    def get_steps(self, run_id: int) -> pd.DataFrame:
        with self.get_connection() as conn:
            return pd.read_sql_query(
                'SELECT * FROM steps WHERE run_id = ? ORDER BY ell, k, j', conn, params=(run_id,)
            )

    def get_levels(self, run_id: int) -> pd.DataFrame:
        with self.get_connection() as conn:
            return pd.read_sql_query(
                'SELECT * FROM levels WHERE run_id = ? ORDER BY ell', conn, params=(run_id,)
            )

    def get_events(self, run_id: Optional[int] = None) -> List[Dict]:
        with self.get_connection() as conn:
            cursor = conn.cursor()
            if run_id is None:
                cursor.execute('SELECT * FROM run_events ORDER BY id')
            else:
                cursor.execute('SELECT * FROM run_events WHERE run_id = ? ORDER BY id', (run_id,))
            return [dict(row) for row in cursor.fetchall()]

    def log_event(self, event_type: str, message: str, severity: str = "INFO", run_id: Optional[int] = None):
        """Log run events"""
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO run_events (run_id, timestamp, event_type, message, severity)
                VALUES (?, ?, ?, ?, ?)
            ''', (run_id, datetime.now().isoformat(), event_type, message, severity))
            conn.commit()
