"""SQLite storage for quantile bundles."""

import logging
import sqlite3
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import BundleError

logger = logging.getLogger(__name__)


class BundleStore:
    """SQLite file holding one grid and the quantile vectors of labelled records."""

    # Current bundle schema version
    DB_VERSION = 1

    def __init__(self, db_path: Path, create: bool = False):
        self.db_path = Path(db_path)
        if create:
            self.db_path.parent.mkdir(parents=True, exist_ok=True)
            if self.db_path.exists():
                self.db_path.unlink()
            self._init_db()
        elif not self.db_path.exists():
            raise BundleError(f"Bundle not found: {self.db_path}")
        self._check_version()

    @contextmanager
    def _get_connection(self):
        """Get a database connection with context management."""
        conn = sqlite3.connect(str(self.db_path))
        conn.row_factory = sqlite3.Row
        try:
            yield conn
            conn.commit()
        except sqlite3.DatabaseError as e:
            conn.rollback()
            raise BundleError(f"Bundle {self.db_path} is unreadable: {e}") from e
        except Exception:
            conn.rollback()
            raise
        finally:
            conn.close()

    def _init_db(self) -> None:
        """Initialize bundle tables."""
        with self._get_connection() as conn:
            cursor = conn.cursor()

            cursor.execute("""
                CREATE TABLE IF NOT EXISTS grid (
                    m INTEGER NOT NULL,
                    omega_lo REAL NOT NULL,
                    omega_hi REAL NOT NULL
                )
            """)

            cursor.execute("""
                CREATE TABLE IF NOT EXISTS records (
                    id INTEGER PRIMARY KEY,
                    label TEXT NOT NULL UNIQUE,
                    position INTEGER NOT NULL
                )
            """)

            # One row per (record, knot); q stored as an 8-byte IEEE double
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS quantiles (
                    record_id INTEGER NOT NULL REFERENCES records(id),
                    j INTEGER NOT NULL,
                    t REAL NOT NULL,
                    q REAL NOT NULL,
                    PRIMARY KEY (record_id, j)
                )
            """)

            cursor.execute("""
                CREATE TABLE IF NOT EXISTS db_version (
                    version INTEGER PRIMARY KEY
                )
            """)
            cursor.execute(
                "INSERT OR REPLACE INTO db_version (version) VALUES (?)", (self.DB_VERSION,)
            )

    def _check_version(self) -> None:
        with self._get_connection() as conn:
            cursor = conn.cursor()
            try:
                cursor.execute("SELECT version FROM db_version ORDER BY version DESC LIMIT 1")
            except sqlite3.OperationalError as e:
                raise BundleError(f"{self.db_path} is not a quantile bundle") from e
            row = cursor.fetchone()
            version = row["version"] if row else None
        if version != self.DB_VERSION:
            raise BundleError(
                f"Bundle version {version} not supported (expected {self.DB_VERSION})"
            )

    # ============ WRITE ============

    def write(
        self,
        labels: List[str],
        knots: np.ndarray,
        matrix: np.ndarray,
        omega: Tuple[float, float],
    ) -> None:
        """Store the grid and one quantile row per label."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape != (len(labels), knots.size):
            raise BundleError(
                f"Quantile matrix shape {matrix.shape} does not match "
                f"{len(labels)} records x {knots.size} knots"
            )
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("DELETE FROM grid")
            cursor.execute(
                "INSERT INTO grid (m, omega_lo, omega_hi) VALUES (?, ?, ?)",
                (int(knots.size), float(omega[0]), float(omega[1])),
            )
            for position, (label, row) in enumerate(zip(labels, matrix)):
                cursor.execute(
                    "INSERT INTO records (label, position) VALUES (?, ?)", (label, position)
                )
                record_id = cursor.lastrowid
                cursor.executemany(
                    "INSERT INTO quantiles (record_id, j, t, q) VALUES (?, ?, ?, ?)",
                    [(record_id, j, float(t), float(q)) for j, (t, q) in enumerate(zip(knots, row))],
                )
        logger.debug("Bundle: wrote %d records to %s", len(labels), self.db_path)

    # ============ READ ============

    def read_grid(self) -> Tuple[int, float, float]:
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT m, omega_lo, omega_hi FROM grid")
            rows = cursor.fetchall()
        if len(rows) != 1:
            raise BundleError(f"Bundle must hold exactly one grid, found {len(rows)}")
        row = rows[0]
        return int(row["m"]), float(row["omega_lo"]), float(row["omega_hi"])

    def read_records(self) -> Tuple[List[str], np.ndarray, np.ndarray]:
        """Labels in stored order, knots, and the (n, m) quantile matrix."""
        m, _, _ = self.read_grid()
        with self._get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT id, label FROM records ORDER BY position")
            records = cursor.fetchall()
            labels = [row["label"] for row in records]
            matrix = np.empty((len(records), m))
            knots: Optional[np.ndarray] = None
            for i, record in enumerate(records):
                cursor.execute(
                    "SELECT j, t, q FROM quantiles WHERE record_id = ? ORDER BY j",
                    (record["id"],),
                )
                rows = cursor.fetchall()
                if len(rows) != m or [r["j"] for r in rows] != list(range(m)):
                    raise BundleError(
                        f"Record {record['label']!r} has {len(rows)} knots, grid has {m}"
                    )
                matrix[i] = [r["q"] for r in rows]
                t = np.array([r["t"] for r in rows])
                if knots is None:
                    knots = t
                elif not np.array_equal(knots, t):
                    raise BundleError(f"Record {record['label']!r} uses a different grid")
        if knots is None:
            knots = (np.arange(m) + 0.5) / m
        return labels, knots, matrix
