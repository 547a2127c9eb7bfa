"""
Benchmark sweeps with materialization accounting
"""

import csv
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Literal, Tuple, Union

from pydantic import BaseModel, Field

from ..core.config import DEFAULT_LEARNING_RATE, DEFAULT_SEED, ENTRY_BUDGET
from ..core.errors import DataError
from ..models.tuplestats import TupleStats
from .dataset_service import Dataset, replicate
from .trainer import Engine, TrainConfig, train_mlp

logger = logging.getLogger(__name__)

CSV_HEADER = [
    "dataset", "engine", "hidden", "batch", "iters", "wall_ms", "tuples_per_s",
    "peak_entries", "peak_bytes_rel", "peak_bytes_dense", "status",
]

STATUS_OK = "ok"
STATUS_SKIPPED = "skipped(budget)"

BatchSize = Union[Literal["full"], int]


class BenchSweep(BaseModel):
    hidden_dims: List[int] = Field(default_factory=lambda: [20])
    batch_sizes: List[BatchSize] = Field(default_factory=lambda: ["full"])
    replications: List[int] = Field(default_factory=lambda: [1])
    engines: List[Engine] = Field(default_factory=lambda: [Engine.RELATIONAL])
    iterations: int = Field(1, ge=0)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0)
    seed: int = Field(DEFAULT_SEED, ge=0)
    entry_budget: int = Field(ENTRY_BUDGET, ge=1)
    jobs: int = Field(1, ge=1)

    def cells(self) -> List[Tuple[int, int, BatchSize, Engine]]:
        """(replication, hidden, batch, engine) in a fixed order"""
        return list(itertools.product(self.replications, self.hidden_dims, self.batch_sizes, self.engines))


class BenchRecord(BaseModel):
    dataset: str
    engine: Engine
    hidden_dim: int
    batch_size: BatchSize
    iterations: int
    wall_time_ms: float = 0.0
    tuples_per_second: float = 0.0
    peak_entries: int = 0
    peak_bytes_relational: int = 0
    peak_bytes_dense: int = 0
    status: str = STATUS_OK

    def csv_row(self) -> list:
        return [
            self.dataset, self.engine.value, self.hidden_dim, self.batch_size, self.iterations,
            f"{self.wall_time_ms:.3f}", f"{self.tuples_per_second:.1f}", self.peak_entries,
            self.peak_bytes_relational, self.peak_bytes_dense, self.status,
        ]


def estimate_peak_entries(rows: int, attrs: int, hidden: int, classes: int, batch: int) -> int:
    """Upper estimate of live entries in one step: data, weights and the largest matmul join"""
    data = rows * (attrs + classes)
    weights = attrs * hidden + hidden * classes
    largest_join = batch * hidden * max(attrs, classes)
    # the step keeps roughly four n x h intermediates alive
    intermediates = 4 * batch * (hidden + classes)
    return data + weights + largest_join + intermediates


def run_cell(ds: Dataset, hidden: int, batch: BatchSize, engine: Engine, sweep: BenchSweep) -> BenchRecord:
    record = BenchRecord(
        dataset=ds.name, engine=engine, hidden_dim=hidden, batch_size=batch, iterations=sweep.iterations,
    )
    rows_per_step = ds.rows if batch == "full" else min(batch, ds.rows)
    estimate = estimate_peak_entries(ds.rows, ds.num_attributes, hidden, ds.num_classes, rows_per_step)
    if estimate > sweep.entry_budget:
        logger.info(f"Skipping {ds.name} h={hidden} batch={batch} {engine.value}: "
                    f"~{estimate} entries over budget {sweep.entry_budget}")
        record.status = STATUS_SKIPPED
        return record

    cfg = TrainConfig(
        learning_rate=sweep.learning_rate, iterations=sweep.iterations, hidden_dim=hidden,
        batch_size=batch, seed=sweep.seed, engine=engine,
    )
    stats = TupleStats()
    started = time.perf_counter()
    train_mlp(ds.features, ds.labels, cfg, num_classes=ds.num_classes, stats=stats)
    wall_ms = (time.perf_counter() - started) * 1000.0

    record.wall_time_ms = wall_ms
    record.tuples_per_second = ds.rows * sweep.iterations / (wall_ms / 1000.0) if wall_ms > 0 else 0.0
    record.peak_entries = stats.peak_entries
    record.peak_bytes_relational = stats.peak_bytes
    record.peak_bytes_dense = stats.peak_dense_bytes
    logger.info(f"{ds.name} h={hidden} batch={batch} {engine.value}: "
                f"{wall_ms:.1f} ms, peak {stats.peak_entries} entries")
    return record


def bench(ds: Dataset, sweep: BenchSweep) -> List[BenchRecord]:
    """One record per sweep cell, in sweep order; cells run on up to sweep.jobs threads"""
    datasets = {k: replicate(ds, k) for k in sweep.replications}
    for k, replicated in datasets.items():
        for batch in sweep.batch_sizes:
            if batch != "full" and batch > replicated.rows:
                raise DataError(f"Batch size {batch} exceeds the {replicated.rows} rows of {replicated.name}")

    def run(cell) -> BenchRecord:
        k, hidden, batch, engine = cell
        return run_cell(datasets[k], hidden, batch, engine, sweep)

    cells = sweep.cells()
    logger.info(f"Running {len(cells)} benchmark cells on {sweep.jobs} worker(s)")
    with ThreadPoolExecutor(max_workers=sweep.jobs) as executor:
        return list(executor.map(run, cells))


def write_bench_csv(records: List[BenchRecord], path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow(record.csv_row())
