"""
Results Store
SQLite history of analysis runs: which plant, which pairings were chosen,
the PID settings and the closed-loop metrics of every recorded invocation.
"""

import logging
import sqlite3
from datetime import datetime
from typing import Dict, List

from analysis_report import AnalysisReport

logger = logging.getLogger(__name__)


class ResultsStore:
    def __init__(self, db_path="rnga_runs.db"):
        self.db_path = db_path
        self.init_database()

    def _connect(self) -> sqlite3.Connection:
        # deleting a run must cascade to its pairings, tunings and metrics
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA foreign_keys = ON")
        conn.execute("PRAGMA journal_mode = WAL")
        conn.execute("PRAGMA synchronous = NORMAL")
        return conn

    def init_database(self):
        """Create the history tables if they do not exist yet"""
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS plants (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                name TEXT UNIQUE NOT NULL,
                outputs INTEGER NOT NULL,
                inputs INTEGER NOT NULL
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS analysis_runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                plant_id INTEGER NOT NULL,
                command TEXT NOT NULL,
                created_at TEXT NOT NULL,
                properties_passed INTEGER NOT NULL,
                FOREIGN KEY (plant_id) REFERENCES plants (id) ON DELETE CASCADE
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS pairings (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                basis TEXT NOT NULL,
                output_name TEXT NOT NULL,
                input_name TEXT NOT NULL,
                element REAL NOT NULL,
                FOREIGN KEY (run_id) REFERENCES analysis_runs (id) ON DELETE CASCADE
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS loop_tunings (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                basis TEXT NOT NULL,
                loop TEXT NOT NULL,
                kc REAL NOT NULL,
                tau_i REAL NOT NULL,
                tau_d REAL NOT NULL,
                lambda_f REAL NOT NULL,
                FOREIGN KEY (run_id) REFERENCES analysis_runs (id) ON DELETE CASCADE
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS loop_metrics (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                scenario TEXT NOT NULL,
                basis TEXT NOT NULL,
                metric TEXT NOT NULL CHECK (metric IN ('IAE', 'ISCI')),
                signal TEXT NOT NULL,
                value REAL NOT NULL,
                FOREIGN KEY (run_id) REFERENCES analysis_runs (id) ON DELETE CASCADE
            )
        ''')

        conn.commit()
        conn.close()

    def record_report(self, report: AnalysisReport, command: str = "analyze") -> int:
        """Store one report and return its run id"""
        conn = self._connect()
        try:
            cursor = conn.cursor()
            k = report.arrays.get("K")
            outputs, inputs = (k.rows, k.cols) if k is not None else (0, 0)
            cursor.execute(
                "INSERT INTO plants (name, outputs, inputs) VALUES (?, ?, ?) "
                "ON CONFLICT(name) DO UPDATE SET outputs = excluded.outputs, inputs = excluded.inputs",
                (report.plant_name, outputs, inputs),
            )
            cursor.execute("SELECT id FROM plants WHERE name = ?", (report.plant_name,))
            plant_id = cursor.fetchone()[0]

            cursor.execute(
                "INSERT INTO analysis_runs (plant_id, command, created_at, properties_passed) "
                "VALUES (?, ?, ?, ?)",
                (plant_id, command, datetime.now().isoformat(timespec="seconds"),
                 int(report.all_properties_passed)),
            )
            run_id = cursor.lastrowid

            for basis, plan in (report.plans or {}).items():
                cursor.executemany(
                    "INSERT INTO pairings (run_id, basis, output_name, input_name, element) "
                    "VALUES (?, ?, ?, ?, ?)",
                    [(run_id, basis, p.output_name, p.input_name, p.value) for p in plan.pairs],
                )
            for basis, loops in (report.tunings or {}).items():
                cursor.executemany(
                    "INSERT INTO loop_tunings (run_id, basis, loop, kc, tau_i, tau_d, lambda_f) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?)",
                    [(run_id, basis, l.label, l.settings.kc, l.settings.tau_i, l.settings.tau_d,
                      l.settings.lambda_f) for l in loops],
                )
            for s in report.scenarios or []:
                rows = [(run_id, s.scenario, s.basis, "IAE", name, v) for name, v in s.iae]
                rows += [(run_id, s.scenario, s.basis, "ISCI", name, v) for name, v in s.isci]
                cursor.executemany(
                    "INSERT INTO loop_metrics (run_id, scenario, basis, metric, signal, value) "
                    "VALUES (?, ?, ?, ?, ?, ?)",
                    rows,
                )
            conn.commit()
        except Exception:
            conn.rollback()
            raise
        finally:
            conn.close()
        logger.info("recorded run %d for plant %s", run_id, report.plant_name)
        return run_id

    def list_runs(self) -> List[Dict]:
        """Every recorded run, oldest first, with its pairing and metric counts"""
        conn = self._connect()
        try:
            rows = conn.execute('''
                SELECT r.id, p.name AS plant, r.command, r.created_at, r.properties_passed,
                       (SELECT COUNT(*) FROM pairings WHERE run_id = r.id) AS pairs,
                       (SELECT COUNT(*) FROM loop_metrics WHERE run_id = r.id) AS metrics
                FROM analysis_runs r JOIN plants p ON p.id = r.plant_id
                ORDER BY r.id
            ''').fetchall()
        finally:
            conn.close()
        runs = [dict(row) for row in rows]
        for run in runs:
            run["properties_passed"] = bool(run["properties_passed"])
        return runs

    def metrics_for_run(self, run_id: int) -> List[Dict]:
        conn = self._connect()
        try:
            if conn.execute("SELECT 1 FROM analysis_runs WHERE id = ?", (run_id,)).fetchone() is None:
                raise ValueError(f"no recorded run with id {run_id} in {self.db_path}")
            rows = conn.execute(
                "SELECT scenario, basis, metric, signal, value FROM loop_metrics "
                "WHERE run_id = ? ORDER BY id",
                (run_id,),
            ).fetchall()
        finally:
            conn.close()
        return [dict(row) for row in rows]
