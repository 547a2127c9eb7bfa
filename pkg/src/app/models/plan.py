"""
Relational query plan types for RelGrad
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple, Union as TypingUnion

from .exprgraph import Fn, Shape


class JoinPredicate(str, Enum):
    INNER_INDEX = "inner_index"        # m.j = n.i
    BOTH_INDICES = "both_indices"      # m.i = n.i and m.j = n.j
    ID_AND_INDICES = "id_and_indices"  # weight update join on (id, i, j)


class SqlDialect(str, Enum):
    SQL92 = "sql92"
    WINDOW = "window"
    ARRAY = "array"


# Entrywise value expressions evaluated per joined row


@dataclass(frozen=True)
class Ref:
    alias: str


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-' or '*'
    left: "ValueExpr"
    right: "ValueExpr"


@dataclass(frozen=True)
class Sigmoid:
    arg: "ValueExpr"


ValueExpr = TypingUnion[Ref, Const, BinOp, Sigmoid]


def eval_value(expr: ValueExpr, row: Dict[str, float]) -> float:
    if isinstance(expr, Ref):
        return row[expr.alias]
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Sigmoid):
        return 1.0 / (1.0 + math.exp(-eval_value(expr.arg, row)))
    left = eval_value(expr.left, row)
    right = eval_value(expr.right, row)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    return left * right


# Plan nodes


@dataclass(frozen=True, kw_only=True)
class PlanNode:
    shape: Optional[Shape] = None
    name: Optional[str] = None

    def label(self) -> str:
        return self.name or type(self).__name__


@dataclass(frozen=True, kw_only=True)
class Scan(PlanNode):
    """Base table, named intermediate or id-tagged weight table"""
    table: str
    param: Optional[str] = None
    weight_id: Optional[int] = None

    @property
    def is_weight(self) -> bool:
        return self.weight_id is not None

    def label(self) -> str:
        return self.table if self.param is None else f"{self.table}[{self.param}]"


@dataclass(frozen=True)
class Operand:
    """A join input; transposed operands swap index roles instead of copying"""
    plan: PlanNode
    alias: str
    transposed: bool = False

    @property
    def row_col(self) -> str:
        return "j" if self.transposed else "i"

    @property
    def col_col(self) -> str:
        return "i" if self.transposed else "j"

    @property
    def shape(self) -> Optional[Shape]:
        if self.plan.shape is None:
            return None
        return self.plan.shape.T if self.transposed else self.plan.shape


@dataclass(frozen=True, kw_only=True)
class JoinInner(PlanNode):
    left: Operand
    right: Operand
    predicate: JoinPredicate

    def cardinality(self) -> Optional[int]:
        left, right = self.left.shape, self.right.shape
        if left is None or right is None:
            return None
        if self.predicate is JoinPredicate.INNER_INDEX:
            return left.rows * left.cols * right.cols
        return left.size


@dataclass(frozen=True, kw_only=True)
class GroupAggregate(PlanNode):
    """SUM(m.v*n.v) grouped by the outer indices, optional sigmoid finisher"""
    join: JoinInner
    finisher: Optional[Fn] = None
    tag: Optional[int] = None


@dataclass(frozen=True, kw_only=True)
class Project(PlanNode):
    source: TypingUnion[JoinInner, Operand]
    expr: ValueExpr
    tag: Optional[int] = None


@dataclass(frozen=True, kw_only=True)
class Union(PlanNode):
    parts: Tuple[PlanNode, ...]


@dataclass(frozen=True, kw_only=True)
class Rank(PlanNode):
    """rank() over (partition by i order by v desc), first rank only"""
    source: PlanNode
    partition: Tuple[str, ...] = ("i",)


@dataclass(frozen=True, kw_only=True)
class RecursiveLoop(PlanNode):
    """Recursive CTE over the weight table w(iter, id, i, j, v)"""
    base: Union
    step: Tuple[PlanNode, ...]
    update: Project
    iterations: int
    learning_rate: float
    params: Tuple[str, ...]
    loss_var: str = "l_ho"
    # array dialect renders the step from the expressions themselves
    array_vars: Tuple[Tuple[str, str], ...] = ()
    array_grads: Tuple[Tuple[str, str], ...] = ()


@dataclass(frozen=True, kw_only=True)
class Accuracy(PlanNode):
    """Share of rows whose top-ranked prediction matches the label"""
    predictions: Rank
    labels: Rank
    array_expr: str = ""


# Data-definition artifacts; rendered only


@dataclass(frozen=True, kw_only=True)
class OneHotTransform(PlanNode):
    table: str
    attributes: Tuple[str, ...]
    label: str
    num_classes: int
    scale: float
    csv_path: Optional[str] = None


@dataclass(frozen=True, kw_only=True)
class WeightInit(PlanNode):
    weights: Tuple[Tuple[str, Shape], ...]


@dataclass(frozen=True, kw_only=True)
class ArrayTransform(PlanNode):
    params: Tuple[str, ...]


@dataclass(frozen=True, kw_only=True)
class LinRegLoop(PlanNode):
    iterations: int
    learning_rate: float
    start: Tuple[float, float] = (1.0, 1.0)
    table: str = "points"


@dataclass
class BreakerEstimate:
    label: str
    materialized_entries: Optional[int]


@dataclass
class PipelineReport:
    pipeline_count: int
    breaker_count: int
    breakers: list = field(default_factory=list)
    pipelines: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "pipeline_count": self.pipeline_count,
            "breaker_count": self.breaker_count,
            "breakers": [
                {"label": b.label, "materialized_entries": b.materialized_entries}
                for b in self.breakers
            ],
            "pipelines": [" -> ".join(p) for p in self.pipelines],
        }
