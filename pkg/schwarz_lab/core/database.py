"""
SQLite store for experiment runs and their per-step traces.
Uses WAL mode so concurrent batch jobs can record results.
"""

import json
import logging
import math
import sqlite3
import threading
import time
from pathlib import Path
from typing import Dict, List, Optional

from .iteration import RunReport

logger = logging.getLogger(__name__)


class ResultStore:
    """SQLite database of runs and step records."""

    SCHEMA = """
    CREATE TABLE IF NOT EXISTS runs (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        timestamp INTEGER,
        command TEXT,
        config_hash TEXT,
        seed INTEGER,
        method TEXT,
        fault_kind TEXT,
        reason TEXT,
        iterations INTEGER,
        epsilon_init REAL,
        epsilon_final REAL,
        config TEXT
    );

    CREATE INDEX IF NOT EXISTS idx_config_hash ON runs(config_hash);
    CREATE INDEX IF NOT EXISTS idx_timestamp ON runs(timestamp);

    CREATE TABLE IF NOT EXISTS steps (
        run_id INTEGER REFERENCES runs(id) ON DELETE CASCADE,
        m INTEGER,
        p_m INTEGER,
        f_m INTEGER,
        xi_m REAL,
        epsilon REAL,
        flags TEXT,
        PRIMARY KEY (run_id, m)
    );
    """

    ORDER_COLUMNS = ('id', 'timestamp', 'command', 'config_hash', 'seed', 'method',
                     'fault_kind', 'reason', 'iterations')

    def __init__(self, db_path: str):
        """
        Initialize database connection.

        Args:
            db_path: Path to SQLite database file
        """
        self.db_path = db_path
        self.conn = None
        self._lock = threading.Lock()
        self.init_database()

    def init_database(self) -> None:
        """Initialize database with schema and WAL mode."""
        if self.db_path != ':memory:':
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)

        self.conn = sqlite3.connect(self.db_path, check_same_thread=False)
        self.conn.row_factory = sqlite3.Row
        self.conn.execute("PRAGMA journal_mode=WAL")
        self.conn.execute("PRAGMA synchronous=NORMAL")
        self.conn.execute("PRAGMA foreign_keys=ON")
        self.conn.executescript(self.SCHEMA)
        self.conn.commit()

    def close(self) -> None:
        """Close database connection."""
        if self.conn:
            self.conn.close()
            self.conn = None

    def add_run(self, report: RunReport, command: str, config_hash: str) -> int:
        """
        Store a run with all of its step records.

        Args:
            report: Finished run report
            command: CLI command or job label that produced it
            config_hash: Hash of the experiment configuration

        Returns:
            Run ID
        """
        config = report.config
        final = report.records[-1].epsilon if report.records else None
        with self._lock:
            cursor = self.conn.execute("""
                INSERT INTO runs
                (timestamp, command, config_hash, seed, method, fault_kind, reason,
                 iterations, epsilon_init, epsilon_final, config)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (int(time.time()), command, config_hash, int(report.seed),
                  config.get('method'), config.get('fault_kind'), report.reason,
                  report.iterations, _real(report.epsilon_init), _real(final),
                  json.dumps(config, sort_keys=True, default=str)))
            run_id = cursor.lastrowid
            self.conn.executemany("""
                INSERT INTO steps (run_id, m, p_m, f_m, xi_m, epsilon, flags)
                VALUES (?, ?, ?, ?, ?, ?, ?)
            """, [(run_id, r.m, r.p_m, r.f_m, float(r.xi_m), _real(r.epsilon), ','.join(r.flags))
                  for r in report.records])
            self.conn.commit()
        logger.debug("Stored run %d (%s, %d steps)", run_id, command, len(report.records))
        return run_id

    def get_run(self, run_id: int) -> Optional[Dict]:
        """
        Get run metadata.

        Args:
            run_id: Run ID

        Returns:
            Dictionary of run metadata or None if not found
        """
        cursor = self.conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
        row = cursor.fetchone()
        return dict(row) if row else None

    def get_runs(self, limit: int = None, offset: int = 0, order_by: str = 'id') -> List[Dict]:
        """
        Get multiple runs with pagination.

        Args:
            limit: Maximum number of runs to return
            offset: Number of runs to skip
            order_by: Column to order by

        Returns:
            List of run dictionaries
        """
        if order_by not in self.ORDER_COLUMNS:
            raise ValueError(f"cannot order runs by '{order_by}'")
        query = f"SELECT * FROM runs ORDER BY {order_by}"
        params = ()
        if limit:
            query += " LIMIT ? OFFSET ?"
            params = (int(limit), int(offset))
        cursor = self.conn.execute(query, params)
        return [dict(row) for row in cursor.fetchall()]

    def get_steps(self, run_id: int) -> List[Dict]:
        """Step records of a run in cycle order."""
        cursor = self.conn.execute(
            "SELECT m, p_m, f_m, xi_m, epsilon, flags FROM steps WHERE run_id = ? ORDER BY m",
            (run_id,)
        )
        return [dict(row) for row in cursor.fetchall()]

    def get_runs_by_hash(self, config_hash: str) -> List[Dict]:
        """All runs of one configuration, oldest first."""
        cursor = self.conn.execute(
            "SELECT * FROM runs WHERE config_hash = ? ORDER BY id", (config_hash,)
        )
        return [dict(row) for row in cursor.fetchall()]

    def remove_run(self, run_id: int) -> None:
        with self._lock:
            self.conn.execute("DELETE FROM steps WHERE run_id = ?", (run_id,))
            self.conn.execute("DELETE FROM runs WHERE id = ?", (run_id,))
            self.conn.commit()

    def vacuum(self) -> None:
        """Reclaim unused space in database."""
        self.conn.execute("VACUUM")


def _real(value) -> Optional[float]:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)
