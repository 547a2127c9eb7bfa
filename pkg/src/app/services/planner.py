"""
Query planner for RelGrad

Lowers gradient programs to relational plans, interprets those plans on the
relational engine and analyzes their pipelines. SQL text is produced from the
same plans by sql_renderer and is never read back here.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.errors import PlanError, ShapeError
from ..models.exprgraph import ExprGraph, Fn, Op, Shape
from ..models.plan import (
    Accuracy, ArrayTransform, BinOp, BreakerEstimate, Const, GroupAggregate, JoinInner,
    JoinPredicate, LinRegLoop, OneHotTransform, Operand, PipelineReport, PlanNode, Project,
    Rank, RecursiveLoop, Ref, Scan, Sigmoid, Union, ValueExpr, WeightInit, eval_value,
)
from ..models.tuplestats import TupleStats
from . import relengine
from .autodiff import GradientProgram
from .relengine import RelMatrix

logger = logging.getLogger(__name__)

# leaf name -> table name
TABLE_NAMES = {"x": "img", "y_ones": "one_hot"}

ALIASES = ("m", "n")


def table_name(leaf: str) -> str:
    return TABLE_NAMES.get(leaf, leaf)


def mean_abs(values: np.ndarray) -> float:
    """Training loss metric, mean(abs(l_ho))"""
    return float(np.mean(np.abs(np.ravel(values))))


class _Lowering:
    """Translate expression nodes into plan nodes

    Named nodes become scans of their CTE; weights scan the id-tagged weight
    table when one is given, their own table otherwise.
    """

    def __init__(self, graph: ExprGraph, names: Dict[int, str], weight_table: Optional[str]):
        self.graph = graph
        self.names = names
        self.weight_table = weight_table
        self.weight_ids = {name: idx for idx, (name, _) in enumerate(graph.params())}

    def relation(self, node_id: int) -> PlanNode:
        node = self.graph.nodes[node_id]
        shape = self.graph.shape(node_id)
        if node_id in self.names:
            return Scan(table=self.names[node_id], shape=shape)
        if node.op is Op.INPUT:
            return Scan(table=table_name(node.name), shape=shape)
        if node.op is Op.PARAM:
            if self.weight_table is None:
                return Scan(table=node.name, param=node.name, shape=shape)
            return Scan(table=self.weight_table, param=node.name,
                        weight_id=self.weight_ids[node.name], shape=shape)
        return self.lower(node_id)

    def operand(self, node_id: int, alias: str) -> Operand:
        node = self.graph.nodes[node_id]
        if node.op is Op.TRANSPOSE and node_id not in self.names:
            return Operand(self.relation(node.children[0]), alias, transposed=True)
        return Operand(self.relation(node_id), alias)

    def _is_aggregate(self, node_id: int) -> bool:
        node = self.graph.nodes[node_id]
        if node.op is Op.MATMUL:
            return True
        return (node.op is Op.MAP and node.fn is Fn.SIGMOID
                and self.graph.nodes[node.children[0]].op is Op.MATMUL)

    def lower(self, node_id: int, name: Optional[str] = None, tag: Optional[int] = None) -> PlanNode:
        node = self.graph.nodes[node_id]
        shape = self.graph.shape(node_id)
        if node.op is Op.MATMUL:
            return self._aggregate(node_id, None, shape, name, tag)
        if self._is_aggregate(node_id):
            return self._aggregate(node.children[0], Fn.SIGMOID, shape, name, tag)
        return self._project(node_id, shape, name, tag)

    def _aggregate(self, matmul_id: int, finisher: Optional[Fn], shape: Shape,
                   name: Optional[str], tag: Optional[int]) -> GroupAggregate:
        left, right = self.graph.nodes[matmul_id].children
        join = JoinInner(
            left=self.operand(left, "m"),
            right=self.operand(right, "n"),
            predicate=JoinPredicate.INNER_INDEX,
        )
        return GroupAggregate(join=join, finisher=finisher, tag=tag, name=name, shape=shape)

    def _project(self, node_id: int, shape: Shape, name: Optional[str], tag: Optional[int]) -> Project:
        operands: List[int] = []
        expr = self._value(node_id, operands, top=True)
        if len(operands) > len(ALIASES):
            raise PlanError(f"Entrywise expression of node {node_id} spans more than two relations")
        if len(operands) == 1:
            source = self.operand(operands[0], "m")
        else:
            source = JoinInner(
                left=self.operand(operands[0], "m"),
                right=self.operand(operands[1], "n"),
                predicate=JoinPredicate.BOTH_INDICES,
            )
        return Project(source=source, expr=expr, tag=tag, name=name, shape=shape)

    def _value(self, node_id: int, operands: List[int], top: bool) -> ValueExpr:
        """entrywise expression; relations become alias references in first-seen order"""
        node = self.graph.nodes[node_id]
        named = not top and node_id in self.names
        if named or node.is_leaf or node.op is Op.TRANSPOSE or (not top and self._is_aggregate(node_id)):
            if node_id not in operands:
                operands.append(node_id)
            return Ref(ALIASES[min(operands.index(node_id), len(ALIASES) - 1)])

        def value(child: int) -> ValueExpr:
            return self._value(child, operands, top=False)

        if node.op is Op.ADD:
            return BinOp("+", value(node.children[0]), value(node.children[1]))
        if node.op is Op.SUB:
            return BinOp("-", value(node.children[0]), value(node.children[1]))
        if node.op is Op.HADAMARD:
            return BinOp("*", value(node.children[0]), value(node.children[1]))
        if node.op is Op.SCALAR_MUL:
            return BinOp("*", Const(node.scalar), value(node.children[0]))
        child = value(node.children[0])
        if node.fn is Fn.SIGMOID:
            return Sigmoid(child)
        if node.fn is Fn.SQUARE:
            return BinOp("*", child, child)
        if node.fn is Fn.ONE_MINUS:
            return BinOp("-", Const(1.0), child)
        return child


def lower(program: GradientProgram, iterations: int, learning_rate: Optional[float] = None) -> PlanNode:
    """Training plan: a recursive loop over the id-tagged weight table w

    With zero iterations only the base case, the union of the initial
    weight matrices, is left.
    """
    if not program.is_complete:
        raise PlanError("Program has no gradients; run gradients_mlp first")
    if iterations < 0:
        raise PlanError(f"Iteration count must be non-negative, got {iterations}")
    learning_rate = program.learning_rate if learning_rate is None else learning_rate
    graph = program.graph
    params = graph.params()

    base = Union(parts=tuple(
        Scan(table=name, param=name, weight_id=idx, shape=graph.shape(leaf))
        for idx, (name, leaf) in enumerate(params)
    ))
    if iterations == 0:
        return base

    names = program.names()
    lowering = _Lowering(graph, names, weight_table="w_")
    step: List[PlanNode] = [
        lowering.lower(node_id, name=name) for name, node_id in program.variables().items()
    ]
    step.append(Union(name="d_w", parts=tuple(
        lowering.lower(program.grads[name], tag=idx) for idx, (name, _) in enumerate(params)
    )))

    update = Project(
        source=JoinInner(
            left=Operand(Scan(table="w_"), "w"),
            right=Operand(Scan(table="d_w"), "d_w"),
            predicate=JoinPredicate.ID_AND_INDICES,
        ),
        expr=BinOp("-", Ref("w"), BinOp("*", Const(learning_rate), Ref("d_w"))),
    )
    logger.debug(f"Lowered training step with {len(step)} CTEs, {iterations} iterations")
    return RecursiveLoop(
        base=base,
        step=tuple(step),
        update=update,
        iterations=iterations,
        learning_rate=learning_rate,
        params=tuple(name for name, _ in params),
        array_vars=tuple(
            (name, array_expr(graph, node_id, names)) for name, node_id in program.variables().items()
        ),
        array_grads=tuple((name, array_expr(graph, program.grads[name], names)) for name, _ in params),
    )


def lower_model(program: GradientProgram) -> PlanNode:
    """Forward pass alone, nested, reading trained weights from table w"""
    return _Lowering(program.graph, {}, weight_table="w").lower(program.forward_vars["a_ho"], name="a_ho")


def lower_inference(program: GradientProgram) -> Accuracy:
    graph = program.graph
    labels = Scan(table=table_name("y_ones"), shape=graph.shape(graph.leaves["y_ones"]))
    return Accuracy(
        predictions=Rank(source=lower_model(program), partition=("i", "iter")),
        labels=Rank(source=labels),
        array_expr=array_expr(graph, program.forward_vars["a_ho"], {}),
    )


def lower_expression(graph: ExprGraph, root: int) -> PlanNode:
    """Plan for a single expression; every leaf scans a table of its own name"""
    return _Lowering(graph, {}, weight_table=None).lower(root)


# Data-definition artifacts


def one_hot_transform(attributes: Tuple[str, ...], label: str, num_rows: int, num_classes: int,
                      scale: float = 10.0, table: str = "iris",
                      csv_path: Optional[str] = None) -> OneHotTransform:
    return OneHotTransform(
        table=table, attributes=tuple(attributes), label=label, num_classes=num_classes,
        scale=scale, csv_path=csv_path, shape=Shape(num_rows, len(attributes)),
    )


def weight_init(program: GradientProgram) -> WeightInit:
    graph = program.graph
    return WeightInit(weights=tuple((name, graph.shape(leaf)) for name, leaf in graph.params()))


def array_transform(program: GradientProgram) -> ArrayTransform:
    return ArrayTransform(params=tuple(name for name, _ in program.graph.params()))


def linreg(iterations: int, learning_rate: float, start: Tuple[float, float] = (1.0, 1.0)) -> LinRegLoop:
    return LinRegLoop(iterations=iterations, learning_rate=learning_rate, start=start)


# Array operator rendering and the fusion count

_ARRAY_PREC = {Op.MATMUL: 3, Op.HADAMARD: 2, Op.ADD: 1, Op.SUB: 1}
_ARRAY_SYMBOL = {Op.MATMUL: "**", Op.HADAMARD: "*", Op.ADD: "+", Op.SUB: "-"}


def _array_text(graph: ExprGraph, node_id: int, names: Dict[int, str], top: bool) -> Tuple[str, int]:
    node = graph.nodes[node_id]
    if node.is_leaf:
        return table_name(node.name), 4
    if not top and node_id in names:
        return names[node_id], 4

    def wrap(child: int, bound: int) -> str:
        text, prec = _array_text(graph, child, names, top=False)
        return f"({text})" if prec < bound else text

    if node.op in _ARRAY_SYMBOL:
        prec = _ARRAY_PREC[node.op]
        left, right = node.children
        return f"{wrap(left, prec)}{_ARRAY_SYMBOL[node.op]}{wrap(right, prec + 1)}", prec
    child = node.children[0]
    if node.op is Op.TRANSPOSE:
        return f"transpose({wrap(child, 0)})", 4
    if node.op is Op.SCALAR_MUL:
        return f"{node.scalar:g}*{wrap(child, 3)}", 2
    if node.fn is Fn.SIGMOID:
        return f"sig({wrap(child, 0)})", 4
    if node.fn is Fn.SQUARE:
        return f"{wrap(child, 3)}*{wrap(child, 3)}", 2
    if node.fn is Fn.ONE_MINUS:
        return f"1-{wrap(child, 2)}", 1
    return _array_text(graph, child, names, top)


def array_expr(graph: ExprGraph, node_id: int, names: Dict[int, str]) -> str:
    """Expression in the array operator set, * entrywise and ** matrix product"""
    return _array_text(graph, node_id, names, top=True)[0]


def _count_ops(graph: ExprGraph, node_id: int, names: Dict[int, str], top: bool) -> int:
    node = graph.nodes[node_id]
    if node.is_leaf or (not top and node_id in names):
        return 0
    if node.op is Op.MAP and node.fn is Fn.IDENTITY:
        return _count_ops(graph, node.children[0], names, top)
    return 1 + sum(_count_ops(graph, c, names, top=False) for c in node.children)


def array_operator_count(program: GradientProgram) -> int:
    """Matrix operations in one array-dialect training step

    Each weight update adds three: the sum over tuples, the scaling by the
    learning rate and the subtraction.
    """
    names = program.names()
    graph = program.graph
    count = sum(_count_ops(graph, node_id, names, True) for node_id in program.variables().values())
    count += sum(_count_ops(graph, node_id, names, True) + 3 for node_id in program.grads.values())
    return count


# Interpretation


@dataclass
class InterpretResult:
    tables: Dict[str, RelMatrix] = field(default_factory=dict)
    losses: List[float] = field(default_factory=list)
    accuracy: Optional[float] = None
    predictions: Optional[List[int]] = None


class _Interpreter:
    def __init__(self, catalog: Dict[str, RelMatrix], weights: Dict[str, RelMatrix],
                 stats: Optional[TupleStats]):
        self.env: Dict[str, RelMatrix] = dict(catalog)
        self.weights = weights
        self.stats = stats

    def eval(self, node: PlanNode) -> RelMatrix:
        if isinstance(node, Scan):
            return self._scan(node)
        if isinstance(node, GroupAggregate):
            out = relengine.matmul(self.operand(node.join.left), self.operand(node.join.right), self.stats)
            if node.finisher is Fn.SIGMOID:
                out = relengine.map_sigmoid(out, self.stats)
            return checked(node, out)
        if isinstance(node, Project):
            return checked(node, self._project(node))
        raise PlanError(f"Cannot evaluate {type(node).__name__} as a matrix")

    def operand(self, operand: Operand) -> RelMatrix:
        value = self.eval(operand.plan)
        return relengine.transpose(value) if operand.transposed else value

    def _scan(self, node: Scan) -> RelMatrix:
        if node.param is not None:
            if node.param not in self.weights:
                raise PlanError(f"Unbound weight matrix '{node.param}'")
            return checked(node, self.weights[node.param])
        if node.table not in self.env:
            raise PlanError(f"Unbound table '{node.table}'")
        return checked(node, self.env[node.table])

    def _project(self, node: Project) -> RelMatrix:
        expr = node.expr
        if isinstance(node.source, Operand):
            alias = node.source.alias
            source = self.operand(node.source)
            if expr == Sigmoid(Ref(alias)):
                return relengine.map_sigmoid(source, self.stats)
            return relengine.project(source, lambda v: eval_value(expr, {alias: v}), self.stats)
        left, right = node.source.left, node.source.right
        return relengine.combine(
            self.operand(left), self.operand(right),
            lambda a, b: eval_value(expr, {left.alias: a, right.alias: b}),
            self.stats,
        )


def checked(node: PlanNode, value: RelMatrix) -> RelMatrix:
    if node.shape is not None and (value.rows, value.cols) != (node.shape.rows, node.shape.cols):
        raise ShapeError(f"{node.label()} expects {node.shape}, catalog holds {value.rows}x{value.cols}")
    return value


def _initial_weights(base: Union, catalog: Dict[str, RelMatrix]) -> Dict[str, RelMatrix]:
    weights = {}
    for part in base.parts:
        if part.table not in catalog:
            raise PlanError(f"Unbound table '{part.table}'")
        weights[part.param] = checked(part, catalog[part.table])
    return weights


def _run_loop(loop: RecursiveLoop, catalog: Dict[str, RelMatrix],
              stats: Optional[TupleStats], track_loss: bool) -> InterpretResult:
    weights = _initial_weights(loop.base, catalog)
    update = loop.update
    aliases = (update.source.left.alias, update.source.right.alias)
    losses: List[float] = []
    if stats is not None:
        stats.observe([len(m) for m in catalog.values()])

    for iteration in range(loop.iterations):
        interpreter = _Interpreter(catalog, weights, stats)
        gradients: Dict[str, RelMatrix] = {}
        for cte in loop.step:
            if isinstance(cte, Union):
                # branches are disjoint by id, so the union is their concatenation
                for part in cte.parts:
                    gradients[loop.params[part.tag]] = interpreter.eval(part)
            else:
                interpreter.env[cte.name] = interpreter.eval(cte)
        if track_loss:
            losses.append(mean_abs(interpreter.env[loop.loss_var].values()))

        weights = {
            name: relengine.combine(
                weights[name], gradients[name],
                lambda w, d: eval_value(update.expr, {aliases[0]: w, aliases[1]: d}),
                stats, "Update",
            )
            for name in loop.params
        }
        logger.debug(f"Interpreted iteration {iteration + 1}/{loop.iterations}")

    return InterpretResult(tables=weights, losses=losses)


def rank_rows(m: RelMatrix) -> List[int]:
    """Winning column per row: highest v, ties to the lowest j"""
    best: Dict[int, Tuple[float, int]] = {}
    for i, j, v in m.entries:
        current = best.get(i)
        if current is None or v > current[0] or (v == current[0] and j < current[1]):
            best[i] = (v, j)
    return [best[i][1] for i in sorted(best)]


def _accuracy(plan: Accuracy, catalog: Dict[str, RelMatrix], stats: Optional[TupleStats]) -> InterpretResult:
    interpreter = _Interpreter(catalog, catalog, stats)
    probabilities = interpreter.eval(plan.predictions.source)
    predicted = rank_rows(probabilities)
    expected = rank_rows(interpreter.eval(plan.labels.source))
    if len(predicted) != len(expected):
        raise ShapeError(f"{len(predicted)} predictions for {len(expected)} labelled rows")
    correct = sum(p == e for p, e in zip(predicted, expected))
    return InterpretResult(
        tables={"a_ho": probabilities},
        accuracy=correct / len(expected) if expected else 0.0,
        predictions=predicted,
    )


def interpret(plan: PlanNode, catalog: Dict[str, RelMatrix],
              stats: Optional[TupleStats] = None, track_loss: bool = False) -> InterpretResult:
    """Execute a plan on the relational engine

    Weight matrices are bound by parameter name (w_xh, w_ho), everything
    else by table name (img, one_hot). A training loop returns the final
    weights, an accuracy plan the share of correctly ranked rows.
    """
    if isinstance(plan, RecursiveLoop):
        return _run_loop(plan, catalog, stats, track_loss)
    if isinstance(plan, Union) and plan.parts and all(isinstance(p, Scan) and p.is_weight for p in plan.parts):
        return InterpretResult(tables=_initial_weights(plan, catalog))
    if isinstance(plan, Accuracy):
        return _accuracy(plan, catalog, stats)
    result = _Interpreter(catalog, catalog, stats).eval(plan)
    return InterpretResult(tables={plan.name or "result": result})


# Pipeline analysis


def analyze_pipelines(plan: PlanNode) -> PipelineReport:
    """Split a plan into pipelines, each ending at exactly one sink

    Sinks are pipeline breakers (aggregations and ranks), hash-join build
    sides and the final output.
    """
    pipelines: List[List[str]] = []
    breakers: List[BreakerEstimate] = []

    def walk(node) -> List[str]:
        if isinstance(node, Scan):
            return [f"scan {node.label()}"]
        if isinstance(node, Operand):
            return walk(node.plan)
        if isinstance(node, JoinInner):
            pipelines.append(walk(node.right) + [f"build {node.right.alias}"])
            return walk(node.left) + [f"probe {node.right.alias}"]
        if isinstance(node, GroupAggregate):
            label = f"aggregate {node.label()}"
            pipelines.append(walk(node.join) + [label])
            breakers.append(BreakerEstimate(label, node.join.cardinality()))
            return [label]
        if isinstance(node, Project):
            return walk(node.source) + ["project"]
        if isinstance(node, Rank):
            label = f"rank {node.source.label()}"
            pipelines.append(walk(node.source) + [label])
            size = node.source.shape.size if node.source.shape is not None else None
            breakers.append(BreakerEstimate(label, size))
            return [label]
        if isinstance(node, Accuracy):
            pipelines.append(walk(node.labels) + ["build labels"])
            return walk(node.predictions) + ["probe labels"]
        if isinstance(node, Union):
            chains = [walk(part) for part in node.parts]
            for chain in chains[:-1]:
                pipelines.append(chain + ["union"])
            return chains[-1] + ["union"]
        if isinstance(node, RecursiveLoop):
            pipelines.append(walk(node.base) + ["materialize w"])
            for cte in node.step:
                pipelines.append(walk(cte) + [f"materialize {cte.label()}"])
            return walk(node.update)
        raise PlanError(f"Cannot analyze {type(node).__name__}")

    pipelines.append(walk(plan) + ["output"])
    return PipelineReport(
        pipeline_count=len(pipelines),
        breaker_count=len(breakers),
        breakers=breakers,
        pipelines=pipelines,
    )
