"""Wall-clock timing of integrator runs and verification suites."""

import json
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any


@dataclass
class OperationMetrics:
    """Timing of a single operation."""

    operation: str
    duration_seconds: float
    steps_processed: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def steps_per_second(self) -> float:
        if self.duration_seconds > 0 and self.steps_processed > 0:
            return self.steps_processed / self.duration_seconds
        return 0.0


@dataclass
class TimingReport:
    """Timings collected over one command (a sweep, a verify run)."""

    name: str
    operations: list[OperationMetrics] = field(default_factory=list)

    @property
    def total_duration_seconds(self) -> float:
        return sum(op.duration_seconds for op in self.operations)

    @property
    def total_steps_processed(self) -> int:
        return sum(op.steps_processed for op in self.operations)

    def add_operation(self, metrics: OperationMetrics) -> None:
        self.operations.append(metrics)

    def to_dict(self) -> dict[str, Any]:
        """Convert report to dictionary for serialization."""
        return {
            "name": self.name,
            "total_duration_seconds": self.total_duration_seconds,
            "total_steps_processed": self.total_steps_processed,
            "operations": [asdict(op) for op in self.operations],
        }

    def save_json(self, filepath: Path) -> None:
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_json(cls, filepath: Path) -> "TimingReport":
        with open(filepath) as f:
            data = json.load(f)
        operations = [OperationMetrics(**op) for op in data.pop("operations", [])]
        return cls(name=data["name"], operations=operations)


class OperationTimer:
    """Context manager for timing operations."""

    def __init__(self, operation_name: str, steps_processed: int = 0):
        self.operation_name = operation_name
        self.steps_processed = steps_processed
        self.start_time = 0.0
        self.duration = 0.0
        self.metadata: dict[str, Any] = {}

    def __enter__(self) -> "OperationTimer":
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.duration = time.perf_counter() - self.start_time

    def get_metrics(self) -> OperationMetrics:
        return OperationMetrics(
            operation=self.operation_name,
            duration_seconds=self.duration,
            steps_processed=self.steps_processed,
            metadata=self.metadata,
        )


@contextmanager
def measure_operation(operation_name: str, steps_processed: int = 0) -> Iterator[OperationTimer]:
    """Time a block and yield the timer.

    Usage:
        with measure_operation("sweep", steps_processed=n) as timer:
            run()
            timer.metadata["replicas"] = 200
        metrics = timer.get_metrics()
    """
    timer = OperationTimer(operation_name, steps_processed)
    with timer:
        yield timer
