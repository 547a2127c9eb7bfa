"""
Materialization counters for RelGrad
"""

from dataclasses import asdict, dataclass
from typing import ClassVar, Dict, Iterable


@dataclass
class TupleStats:
    """Counts tuples produced by the relational building blocks

    peak_entries is the largest sum of live operand, join and result entries
    at any operation boundary; peak_dense_entries is the same without join
    intermediates, which is what a dense engine holds.
    """
    joined_tuples: int = 0
    output_tuples: int = 0
    peak_entries: int = 0
    peak_dense_entries: int = 0
    operations: int = 0

    bytes_per_entry: ClassVar[int] = 24  # i, j, v at 8 bytes each
    dense_bytes_per_entry: ClassVar[int] = 8

    def observe(self, sizes: Iterable[int]) -> None:
        """register matrices that are live without being produced by an operation"""
        live = sum(sizes)
        self.peak_entries = max(self.peak_entries, live)
        self.peak_dense_entries = max(self.peak_dense_entries, live)

    def record(self, operand_sizes: Iterable[int], output: int, joined: int = 0) -> None:
        live = sum(operand_sizes) + output
        self.joined_tuples += joined
        self.output_tuples += output
        self.operations += 1
        self.peak_dense_entries = max(self.peak_dense_entries, live)
        self.peak_entries = max(self.peak_entries, live + joined)

    @property
    def peak_bytes(self) -> int:
        return self.peak_entries * self.bytes_per_entry

    @property
    def peak_dense_bytes(self) -> int:
        return self.peak_dense_entries * self.dense_bytes_per_entry

    def as_dict(self) -> Dict[str, int]:
        stats = asdict(self)
        stats["peak_bytes"] = self.peak_bytes
        stats["peak_dense_bytes"] = self.peak_dense_bytes
        return stats
