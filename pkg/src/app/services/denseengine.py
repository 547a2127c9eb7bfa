"""
Dense matrix engine for RelGrad

Row-major float64 numpy arrays. This is the numerical oracle the relational
engine and the plan interpreter are compared against, so matmul accumulates
over the inner index in ascending order instead of calling into BLAS.
"""

import csv
import logging
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np
import numpy.typing as npt

from ..core.errors import GraphError, ShapeError
from ..models.exprgraph import ExprGraph, Fn, Op, Shape
from ..models.tuplestats import TupleStats

logger = logging.getLogger(__name__)

DenseMatrix = npt.NDArray[np.float64]

MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator; identical sequence on every platform"""

    def __init__(self, seed: int):
        self.state = seed & MASK64
        self.draws = 0

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        self.draws += 1
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """uniform in [0, 1) from the top 53 bits"""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def init_uniform(prng: SplitMix64, rows: int, cols: int) -> DenseMatrix:
    """Weights drawn row-major as 2u-1"""
    Shape(rows, cols)
    values = [2.0 * prng.next_float() - 1.0 for _ in range(rows * cols)]
    return np.array(values, dtype=np.float64).reshape(rows, cols)


def _check_same(a: DenseMatrix, b: DenseMatrix, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what} operands differ in shape: {a.shape} and {b.shape}")


def _record(stats: Optional[TupleStats], operands: Iterable[DenseMatrix], out: DenseMatrix, joined: int = 0) -> None:
    if stats is not None:
        stats.record([a.size for a in operands], out.size, joined)


def matmul(a: DenseMatrix, b: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"MatMul inner dimensions differ: {a.shape} and {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    # one rank-1 update per k keeps the per-entry summation order ascending in k
    for k in range(a.shape[1]):
        out += np.outer(a[:, k], b[k, :])
    _record(stats, (a, b), out, joined=a.shape[0] * a.shape[1] * b.shape[1])
    return out


def hadamard(a: DenseMatrix, b: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    _check_same(a, b, "Hadamard")
    out = a * b
    _record(stats, (a, b), out, joined=out.size)
    return out


def add(a: DenseMatrix, b: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    _check_same(a, b, "Add")
    out = a + b
    _record(stats, (a, b), out, joined=out.size)
    return out


def sub(a: DenseMatrix, b: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    _check_same(a, b, "Sub")
    out = a - b
    _record(stats, (a, b), out, joined=out.size)
    return out


def scalar_mul(c: float, a: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    out = c * a
    _record(stats, (a,), out)
    return out


def one_minus(a: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    out = 1.0 - a
    _record(stats, (a,), out)
    return out


def square(a: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    out = a * a
    _record(stats, (a,), out)
    return out


def map_sigmoid(a: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    out = 1.0 / (1.0 + np.exp(-a))
    _record(stats, (a,), out)
    return out


def transpose(a: DenseMatrix) -> DenseMatrix:
    return np.ascontiguousarray(a.T)


def apply(fn: Fn, a: DenseMatrix, stats: Optional[TupleStats] = None) -> DenseMatrix:
    if fn is Fn.SIGMOID:
        return map_sigmoid(a, stats)
    if fn is Fn.SQUARE:
        return square(a, stats)
    if fn is Fn.ONE_MINUS:
        return one_minus(a, stats)
    return a


def argmax_row(m: DenseMatrix) -> List[int]:
    """1-based column of each row maximum; ties go to the lowest index"""
    return [int(k) + 1 for k in np.argmax(m, axis=1)]


def evaluate(
    graph: ExprGraph,
    bindings: Dict[str, DenseMatrix],
    targets: Optional[Iterable[int]] = None,
    stats: Optional[TupleStats] = None,
    on_node: Optional[Callable[[int], None]] = None,
) -> Dict[int, DenseMatrix]:
    """Evaluate nodes in topological order, each exactly once

    With targets, only the nodes they reach are computed, so leaves outside
    that subgraph may stay unbound.
    """
    order = graph.topo_order() if targets is None else graph.reachable(targets)
    values: Dict[int, DenseMatrix] = {}
    for node_id in order:
        node = graph.nodes[node_id]
        if node.is_leaf:
            if node.name not in bindings:
                raise GraphError(f"Unbound leaf '{node.name}'")
            value = np.asarray(bindings[node.name], dtype=np.float64)
            declared = graph.shapes.get(node_id)
            if declared is not None and value.shape != (declared.rows, declared.cols):
                raise ShapeError(f"Leaf '{node.name}' bound to {value.shape}, declared {declared}")
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
        if on_node is not None:
            on_node(node_id)
    return values


def dump_csv(m: DenseMatrix, path: Path) -> None:
    """One matrix row per line, 17 significant digits"""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in m:
            writer.writerow([f"{v:.17g}" for v in row])


def load_csv(path: Path) -> DenseMatrix:
    with open(path, newline="") as f:
        rows = [[float(v) for v in row] for row in csv.reader(f) if row]
    return np.array(rows, dtype=np.float64)
