# db/database.py - Omega Provisioner run ledger
"""
Optional SQLite ledger of simulation runs, enabled with `run --ledger` or
OMEGA_PROVISIONER_LEDGER. One row per run; `history` reads it back.
"""

import logging
import os
import sqlite3
from datetime import datetime
from typing import List, Optional

logger = logging.getLogger(__name__)

DEFAULT_LEDGER = "~/.omega-provisioner/runs.db"


def ledger_path(path: Optional[str] = None) -> str:
    return os.path.expanduser(path or os.getenv("OMEGA_PROVISIONER_LEDGER") or DEFAULT_LEDGER)


def get_connection(path: Optional[str] = None):
    db_path = ledger_path(path)
    directory = os.path.dirname(db_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(path: Optional[str] = None):
    """Create tables if they don't exist."""
    conn = get_connection(path)
    conn.executescript("""
        CREATE TABLE IF NOT EXISTS runs (
            id              INTEGER PRIMARY KEY AUTOINCREMENT,
            scenario        TEXT,
            seed            INTEGER,
            exit_code       INTEGER,
            events          INTEGER,
            samples         INTEGER,
            peak_nodes      INTEGER,
            completed_jobs  INTEGER,
            created_at      DATETIME
        );
    """)
    conn.commit()
    conn.close()


def log_run(scenario: str, seed: int, exit_code: int, events: int, samples: int,
            peak_nodes: int, completed_jobs: int, path: Optional[str] = None) -> int:
    init_db(path)
    conn = get_connection(path)
    cursor = conn.execute(
        "INSERT INTO runs (scenario, seed, exit_code, events, samples, peak_nodes, completed_jobs, created_at) "
        "VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
        (scenario, seed, exit_code, events, samples, peak_nodes, completed_jobs, datetime.now().isoformat())
    )
    conn.commit()
    run_id = cursor.lastrowid
    conn.close()
    logger.debug(f"[Ledger] recorded run {run_id} for '{scenario}' in {ledger_path(path)}")
    return run_id


def get_recent_runs(limit: int = 10, path: Optional[str] = None) -> List[dict]:
    init_db(path)
    conn = get_connection(path)
    rows = conn.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,)).fetchall()
    conn.close()
    return [dict(r) for r in rows]
