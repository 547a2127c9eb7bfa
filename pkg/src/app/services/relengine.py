"""
Relational matrix engine for RelGrad

A matrix is a dense set of (i, j, v) tuples with 1-based indices. Matrix
multiplication is a join on the inner index followed by a grouped sum, the
elementwise operations are equi-joins on both indices and transpose only
renames the indices.
"""

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import DataError, GraphError, ShapeError
from ..models.exprgraph import ExprGraph, Fn, Op, Shape
from ..models.tuplestats import TupleStats
from .denseengine import DenseMatrix

logger = logging.getLogger(__name__)

Entry = Tuple[int, int, float]


@dataclass(frozen=True)
class RelMatrix:
    """rows x cols matrix stored as (i, j, v) tuples"""
    rows: int
    cols: int
    entries: Tuple[Entry, ...]

    @property
    def shape(self) -> Shape:
        return Shape(self.rows, self.cols)

    def __len__(self) -> int:
        return len(self.entries)

    def is_dense(self) -> bool:
        if len(self.entries) != self.rows * self.cols:
            return False
        cells = {(i, j) for i, j, _ in self.entries}
        return len(cells) == len(self.entries) and all(
            1 <= i <= self.rows and 1 <= j <= self.cols for i, j in cells
        )

    def values(self) -> np.ndarray:
        """values in (i, j) order"""
        return np.array([v for _, _, v in sorted(self.entries)], dtype=np.float64)


def _build(rows: int, cols: int, entries: Iterable[Entry]) -> RelMatrix:
    return RelMatrix(rows, cols, tuple(sorted(entries)))


def _check_same(m: RelMatrix, n: RelMatrix, what: str) -> None:
    if (m.rows, m.cols) != (n.rows, n.cols):
        raise ShapeError(f"{what} operands differ in shape: {m.rows}x{m.cols} and {n.rows}x{n.cols}")


def _record(stats: Optional[TupleStats], operands: Sequence[RelMatrix], out: RelMatrix, joined: int = 0) -> None:
    if stats is not None:
        stats.record([len(m) for m in operands], len(out), joined)


def matmul(m: RelMatrix, n: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    """join on m.j = n.i, then SUM(m.v*n.v) grouped by (m.i, n.j)"""
    if m.cols != n.rows:
        raise ShapeError(f"MatMul inner dimensions differ: {m.rows}x{m.cols} and {n.rows}x{n.cols}")

    # hash table on the build side, keyed by the join index
    build: Dict[int, List[Tuple[int, float]]] = defaultdict(list)
    for k, j, v in sorted(n.entries):
        build[k].append((j, v))

    sums: Dict[Tuple[int, int], float] = {}
    joined = 0
    # probing in (i, k) order keeps every group's summation ascending in k
    for i, k, mv in sorted(m.entries):
        for j, nv in build.get(k, ()):
            sums[(i, j)] = sums.get((i, j), 0.0) + mv * nv
            joined += 1

    out = _build(m.rows, n.cols, ((i, j, v) for (i, j), v in sums.items()))
    _record(stats, (m, n), out, joined)
    return out


def combine(m: RelMatrix, n: RelMatrix, fn: Callable[[float, float], float],
            stats: Optional[TupleStats] = None, what: str = "Combine") -> RelMatrix:
    """equi-join on (i, j) and project fn(m.v, n.v)"""
    _check_same(m, n, what)
    right = {(i, j): v for i, j, v in n.entries}
    joined = [(i, j, fn(v, right[(i, j)])) for i, j, v in m.entries if (i, j) in right]
    out = _build(m.rows, m.cols, joined)
    _record(stats, (m, n), out, len(joined))
    return out


def hadamard(m: RelMatrix, n: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    return combine(m, n, lambda a, b: a * b, stats, "Hadamard")


def add(m: RelMatrix, n: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    return combine(m, n, lambda a, b: a + b, stats, "Add")


def sub(m: RelMatrix, n: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    return combine(m, n, lambda a, b: a - b, stats, "Sub")


def project(m: RelMatrix, fn: Callable[[float], float], stats: Optional[TupleStats] = None) -> RelMatrix:
    out = RelMatrix(m.rows, m.cols, tuple((i, j, fn(v)) for i, j, v in m.entries))
    _record(stats, (m,), out)
    return out


def scalar_mul(c: float, m: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    return project(m, lambda v: c * v, stats)


def one_minus(m: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    return project(m, lambda v: 1.0 - v, stats)


def square(m: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    return project(m, lambda v: v * v, stats)


def sigmoid(values: np.ndarray) -> np.ndarray:
    """1/(1+exp(-v)), shared with the plan interpreter"""
    return 1.0 / (1.0 + np.exp(-values))


def map_sigmoid(m: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    values = sigmoid(np.array([v for _, _, v in m.entries], dtype=np.float64))
    out = RelMatrix(m.rows, m.cols, tuple(
        (i, j, float(s)) for (i, j, _), s in zip(m.entries, values)
    ))
    _record(stats, (m,), out)
    return out


def apply(fn: Fn, m: RelMatrix, stats: Optional[TupleStats] = None) -> RelMatrix:
    if fn is Fn.SIGMOID:
        return map_sigmoid(m, stats)
    if fn is Fn.SQUARE:
        return square(m, stats)
    if fn is Fn.ONE_MINUS:
        return one_minus(m, stats)
    return m


def transpose(m: RelMatrix) -> RelMatrix:
    return _build(m.cols, m.rows, ((j, i, v) for i, j, v in m.entries))


def one_hot(labels: Sequence[int], num_rows: int, num_classes: int) -> RelMatrix:
    """row i holds a 1 at column labels[i-1]+1 and zeros elsewhere"""
    if num_rows != len(labels):
        raise DataError(f"one_hot got {len(labels)} labels for {num_rows} rows")
    for row, label in enumerate(labels, start=1):
        if not 0 <= label < num_classes:
            raise DataError(f"Label {label} in row {row} outside [0, {num_classes})")
    entries = [
        (i, j, 1.0 if j == labels[i - 1] + 1 else 0.0)
        for i in range(1, num_rows + 1)
        for j in range(1, num_classes + 1)
    ]
    return RelMatrix(num_rows, num_classes, tuple(entries))


def from_dense(d: DenseMatrix) -> RelMatrix:
    d = np.asarray(d, dtype=np.float64)
    rows, cols = d.shape
    return RelMatrix(rows, cols, tuple(
        (i + 1, j + 1, float(d[i, j])) for i in range(rows) for j in range(cols)
    ))


def to_dense(r: RelMatrix) -> DenseMatrix:
    """row-major array ordered by i, then j"""
    if not r.is_dense():
        raise ShapeError(f"Entry set is not a dense {r.rows}x{r.cols} matrix")
    return r.values().reshape(r.rows, r.cols)


def footprint_bytes(m: RelMatrix) -> int:
    """Bytes of the (i, j, v) form, three 8-byte fields per entry"""
    return relational_footprint_bytes(m.rows, m.cols)


def relational_footprint_bytes(rows: int, cols: int) -> int:
    return rows * cols * TupleStats.bytes_per_entry


def dense_footprint_bytes(rows: int, cols: int) -> int:
    return rows * cols * TupleStats.dense_bytes_per_entry


def matmul_join_cardinality(a: int, b: int, c: int) -> int:
    """tuples produced by joining an a x b with a b x c matrix"""
    return a * b * c


def evaluate(
    graph: ExprGraph,
    bindings: Dict[str, RelMatrix],
    targets: Optional[Iterable[int]] = None,
    stats: Optional[TupleStats] = None,
) -> Dict[int, RelMatrix]:
    """Evaluate an expression graph with the relational building blocks"""
    order = graph.topo_order() if targets is None else graph.reachable(targets)
    values: Dict[int, RelMatrix] = {}
    for node_id in order:
        node = graph.nodes[node_id]
        if node.is_leaf:
            if node.name not in bindings:
                raise GraphError(f"Unbound leaf '{node.name}'")
            value = bindings[node.name]
        else:
            args = [values[c] for c in node.children]
            if node.op is Op.ADD:
                value = add(*args, stats)
            elif node.op is Op.SUB:
                value = sub(*args, stats)
            elif node.op is Op.HADAMARD:
                value = hadamard(*args, stats)
            elif node.op is Op.MATMUL:
                value = matmul(*args, stats)
            elif node.op is Op.TRANSPOSE:
                value = transpose(args[0])
            elif node.op is Op.SCALAR_MUL:
                value = scalar_mul(node.scalar, args[0], stats)
            else:
                value = apply(node.fn, args[0], stats)
        values[node_id] = value
    return values


def dump_csv(m: RelMatrix, path: Path) -> None:
    """CSV with header i,j,v sorted by (i, j)"""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["i", "j", "v"])
        for i, j, v in sorted(m.entries):
            writer.writerow([i, j, f"{v:.17g}"])


def load_csv(path: Path) -> RelMatrix:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        entries = [(int(row["i"]), int(row["j"]), float(row["v"])) for row in reader]
    if not entries:
        raise DataError(f"No entries in {path}")
    rows = max(i for i, _, _ in entries)
    cols = max(j for _, j, _ in entries)
    return _build(rows, cols, entries)
