"""
Materialization arithmetic for the one-hidden-layer network
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

from ..core.errors import DataError
from ..models.tuplestats import TupleStats
from .relengine import dense_footprint_bytes, relational_footprint_bytes

KIB = 1024


@dataclass(frozen=True)
class MemRow:
    variable: str
    rows: int
    cols: int

    @property
    def entries(self) -> int:
        return self.rows * self.cols

    @property
    def dense_bytes(self) -> int:
        return dense_footprint_bytes(self.rows, self.cols)

    @property
    def relational_bytes(self) -> int:
        return relational_footprint_bytes(self.rows, self.cols)


@dataclass
class MemReport:
    dims: Tuple[int, int, int, int]
    rows: List[MemRow] = field(default_factory=list)
    inference_variables: Tuple[str, ...] = ()

    @property
    def training_entries(self) -> int:
        return sum(r.entries for r in self.rows)

    @property
    def inference_entries(self) -> int:
        """x, a_xh, a_ho, y_ones and both weights"""
        return sum(r.entries for r in self.rows if r.variable in self.inference_variables)

    def totals(self) -> List[Tuple[str, int]]:
        return [("training total", self.training_entries), ("inference subtotal", self.inference_entries)]

    def format_table(self) -> str:
        header = f"{'variable':<20}{'shape':>10}{'entries':>10}{'dense_B':>12}{'rel_B':>12}{'dense_KiB':>12}"
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.variable:<20}{f'{r.rows}x{r.cols}':>10}{r.entries:>10}"
                f"{r.dense_bytes:>12}{r.relational_bytes:>12}{r.dense_bytes / KIB:>12.2f}"
            )
        for label, entries in self.totals():
            dense = entries * TupleStats.dense_bytes_per_entry
            rel = entries * TupleStats.bytes_per_entry
            lines.append(f"{label:<20}{'':>10}{entries:>10}{dense:>12}{rel:>12}{dense / KIB:>12.2f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["variable", "rows", "cols", "entries", "dense_bytes", "relational_bytes"])
            for r in self.rows:
                writer.writerow([r.variable, r.rows, r.cols, r.entries, r.dense_bytes, r.relational_bytes])
            for label, entries in self.totals():
                writer.writerow([label, "", "", entries, entries * TupleStats.dense_bytes_per_entry,
                                 entries * TupleStats.bytes_per_entry])


def mem_report(n: int, m: int, h: int, l: int) -> MemReport:
    """Entry counts of every training variable for n rows, m attributes, h hidden and l classes"""
    if min(n, m, h, l) < 1:
        raise DataError(f"Dimensions must be at least 1, got n={n} m={m} h={h} l={l}")
    rows = [
        MemRow("x", n, m),
        MemRow("a_xh", n, h),
        MemRow("l_xh", n, h),
        MemRow("d_xh", n, h),
        MemRow("a_ho", n, l),
        MemRow("l_ho", n, l),
        MemRow("d_ho", n, l),
        MemRow("y_ones", n, l),
        MemRow("w_xh", m, h),
        MemRow("w_ho", h, l),
    ]
    return MemReport(
        dims=(n, m, h, l),
        rows=rows,
        inference_variables=("x", "a_xh", "a_ho", "y_ones", "w_xh", "w_ho"),
    )
