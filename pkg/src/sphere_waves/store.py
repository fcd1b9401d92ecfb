"""DuckDB-backed run store: tabular results and their CSV exports."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any

import duckdb

from sphere_waves.harness import ConvergenceReport, SweepRow
from sphere_waves.limit import DiscriminatorReport
from sphere_waves.trajectory import DIAGNOSTIC_COLUMNS, Trajectory

logger = logging.getLogger(__name__)


RUN_SCHEMA = """
CREATE TABLE IF NOT EXISTS sweep_results (
    run_id VARCHAR NOT NULL,
    mu DOUBLE NOT NULL,
    replica INTEGER NOT NULL,
    l4h1_error DOUBLE,
    sup_R_mu DOUBLE,
    sup_h1_sq DOUBLE,
    sup_h2_sq DOUBLE,
    scaled_sup_v_sq DOUBLE,
    scaled_int_v_h1 DOUBLE,
    excluded BOOLEAN NOT NULL,
    reason VARCHAR,
    PRIMARY KEY (run_id, mu, replica)
);

CREATE TABLE IF NOT EXISTS sweep_summaries (
    run_id VARCHAR NOT NULL,
    mu DOUBLE NOT NULL,
    dt DOUBLE NOT NULL,
    n_included INTEGER NOT NULL,
    n_excluded INTEGER NOT NULL,
    mean_error DOUBLE,
    stderr_error DOUBLE,  -- NULL with fewer than two replicas
    q25 DOUBLE,
    q50 DOUBLE,
    q75 DOUBLE,
    q90 DOUBLE,
    mean_sup_R_mu DOUBLE,
    stderr_sup_R_mu DOUBLE,
    PRIMARY KEY (run_id, mu)
);

CREATE TABLE IF NOT EXISTS discriminator_checkpoints (
    run_id VARCHAR NOT NULL,
    t DOUBLE NOT NULL,
    mean_gap DOUBLE NOT NULL,
    stderr DOUBLE,
    predicted_first_order_gap DOUBLE NOT NULL,
    distinguished BOOLEAN NOT NULL,
    PRIMARY KEY (run_id, t)
);
"""

SWEEP_COLUMNS = (
    "mu",
    "replica",
    "l4h1_error",
    "sup_R_mu",
    "sup_h1_sq",
    "sup_h2_sq",
    "scaled_sup_v_sq",
    "scaled_int_v_h1",
    "excluded",
    "reason",
)


def _sql_literal(value: str | Path) -> str:
    return "'" + str(value).replace("'", "''") + "'"


def _nullable(value: float | None) -> float | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def file_sha256(path: str | Path) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def trajectory_columns(n_modes: int) -> list[str]:
    return (
        ["step", "t"]
        + [f"c{j}" for j in range(1, n_modes + 1)]
        + [f"d{j}" for j in range(1, n_modes + 1)]
        + list(DIAGNOSTIC_COLUMNS)
    )


class RunStore:
    """DuckDB store for sweep rows, discriminator checkpoints and trajectory exports."""

    def __init__(self, database: str = ":memory:"):
        """Initialize run store.

        Args:
            database: DuckDB database path, in-memory by default
        """
        self.database = database
        self._conn: duckdb.DuckDBPyConnection | None = None

    def connect(self) -> None:
        """Open the connection and create the schema."""
        self._conn = duckdb.connect(self.database)
        self._init_schema()

    def _init_schema(self) -> None:
        if not self._conn:
            raise RuntimeError("Not connected to database")
        self._conn.execute(RUN_SCHEMA)

    def close(self) -> None:
        if self._conn:
            self._conn.close()
            self._conn = None

    def __enter__(self) -> "RunStore":
        self.connect()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.close()

    @property
    def conn(self) -> duckdb.DuckDBPyConnection:
        if not self._conn:
            raise RuntimeError("Not connected to database")
        return self._conn

    def write_trajectory_csv(self, tr: Trajectory, path: Path) -> str:
        """Export a trajectory as CSV and return the file's SHA-256.

        Columns: step, t, c1..cN (u), d1..dN (v, NULL for first-order paths), diagnostics.
        """
        n_modes = tr.basis.n_modes
        columns = trajectory_columns(n_modes)
        ddl = ", ".join(
            f"{name} {'BIGINT' if name == 'step' else 'DOUBLE'}" for name in columns
        )
        self.conn.execute("DROP TABLE IF EXISTS trajectory_export")
        self.conn.execute(f"CREATE TEMP TABLE trajectory_export ({ddl})")

        empty_v = [None] * n_modes
        rows = []
        for i in range(tr.n_steps + 1):
            v_row = empty_v if tr.v is None else [float(x) for x in tr.v[i]]
            diag = [_nullable(float(tr.diagnostics[c][i])) if c in tr.diagnostics else None
                    for c in DIAGNOSTIC_COLUMNS]
            rows.append([i, float(tr.times[i]), *(float(x) for x in tr.u[i]), *v_row, *diag])
        placeholders = ", ".join("?" for _ in columns)
        self.conn.executemany(f"INSERT INTO trajectory_export VALUES ({placeholders})", rows)

        path.parent.mkdir(parents=True, exist_ok=True)
        self.conn.execute(
            f"COPY (SELECT * FROM trajectory_export ORDER BY step) TO {_sql_literal(path)} "
            "(HEADER, DELIMITER ',')"
        )
        self.conn.execute("DROP TABLE trajectory_export")
        digest = file_sha256(path)
        logger.debug("wrote %d trajectory rows to %s (sha256 %s)", tr.n_steps + 1, path, digest)
        return digest

    def insert_sweep(self, run_id: str, report: ConvergenceReport) -> None:
        """Store per-(mu, replica) rows and per-mu summaries of a sweep."""
        self.insert_sweep_rows(run_id, report.rows)
        for s in report.summaries:
            q = s.error_quantiles
            self.conn.execute(
                "INSERT OR REPLACE INTO sweep_summaries VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                [
                    run_id, s.mu, s.dt, s.n_included, s.n_excluded,
                    _nullable(s.mean_error), _nullable(s.stderr_error),
                    q.get("q25"), q.get("q50"), q.get("q75"), q.get("q90"),
                    _nullable(s.mean_sup_R_mu), _nullable(s.stderr_sup_R_mu),
                ],
            )

    def insert_sweep_rows(self, run_id: str, rows: list[SweepRow]) -> None:
        values = []
        for r in rows:
            values.append(
                [
                    run_id, r.mu, r.replica,
                    _nullable(r.l4h1_error), _nullable(r.sup_R_mu),
                    _nullable(r.sup_h1_sq), _nullable(r.sup_h2_sq),
                    _nullable(r.scaled_sup_v_sq), _nullable(r.scaled_int_v_h1),
                    r.excluded, r.reason or None,
                ]
            )
        if values:
            self.conn.executemany(
                "INSERT OR REPLACE INTO sweep_results VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                values,
            )

    def insert_checkpoints(self, run_id: str, report: DiscriminatorReport) -> None:
        values = [
            [run_id, t, m, _nullable(se), report.predicted_first_order_gap, report.distinguished]
            for t, m, se in zip(report.t, report.mean_gap, report.stderr)
        ]
        self.conn.executemany(
            "INSERT OR REPLACE INTO discriminator_checkpoints VALUES (?, ?, ?, ?, ?, ?)", values
        )

    def sweep_rows(self, run_id: str) -> list[tuple[Any, ...]]:
        return self.conn.execute(
            f"SELECT {', '.join(SWEEP_COLUMNS)} FROM sweep_results WHERE run_id = ? "
            "ORDER BY mu DESC, replica",
            [run_id],
        ).fetchall()

    def export_sweep_csv(self, run_id: str, rows_path: Path, summary_path: Path) -> None:
        """Flat per-replica CSV and the per-mu convergence curve (plot data)."""
        rows_path.parent.mkdir(parents=True, exist_ok=True)
        self.conn.execute(
            f"COPY (SELECT {', '.join(SWEEP_COLUMNS)} FROM sweep_results "
            f"WHERE run_id = {_sql_literal(run_id)} ORDER BY mu DESC, replica) "
            f"TO {_sql_literal(rows_path)} (HEADER, DELIMITER ',')"
        )
        self.conn.execute(
            "COPY (SELECT * EXCLUDE (run_id) FROM sweep_summaries "
            f"WHERE run_id = {_sql_literal(run_id)} ORDER BY mu DESC) "
            f"TO {_sql_literal(summary_path)} (HEADER, DELIMITER ',')"
        )

    def export_checkpoints_csv(self, run_id: str, path: Path) -> None:
        """Discriminator gap against time together with the first-order prediction."""
        path.parent.mkdir(parents=True, exist_ok=True)
        self.conn.execute(
            "COPY (SELECT * EXCLUDE (run_id) FROM discriminator_checkpoints "
            f"WHERE run_id = {_sql_literal(run_id)} ORDER BY t) "
            f"TO {_sql_literal(path)} (HEADER, DELIMITER ',')"
        )


def write_run_metadata(directory: Path, metadata: dict[str, Any]) -> Path:
    """Write run.json beside the outputs of a run."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "run.json"
    with open(path, "w") as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
    return path
