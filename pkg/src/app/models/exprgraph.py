"""
Matrix expression graph for RelGrad

Append-only DAG of matrix expressions with shape inference. Node ids are
positions in the node store, so every node only references lower ids.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from ..core.errors import GraphError, ShapeError


class Op(str, Enum):
    INPUT = "Input"
    PARAM = "Param"
    ADD = "Add"
    SUB = "Sub"
    HADAMARD = "Hadamard"
    MATMUL = "MatMul"
    TRANSPOSE = "Transpose"
    SCALAR_MUL = "ScalarMul"
    MAP = "Map"


class Fn(str, Enum):
    SIGMOID = "Sigmoid"
    SQUARE = "Square"
    ONE_MINUS = "OneMinus"
    IDENTITY = "Identity"


LEAF_OPS = frozenset({Op.INPUT, Op.PARAM})
UNARY_OPS = frozenset({Op.TRANSPOSE, Op.SCALAR_MUL, Op.MAP})
ELEMENTWISE_OPS = frozenset({Op.ADD, Op.SUB, Op.HADAMARD})


def format_scalar(value: float) -> str:
    """Shortest readable form of a constant, 2.0 -> '2'"""
    return f"{value:g}"


@dataclass(frozen=True)
class Shape:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ShapeError(f"Shape dimensions must be positive, got {self.rows}x{self.cols}")

    @property
    def T(self) -> "Shape":
        return Shape(self.cols, self.rows)

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def __str__(self) -> str:
        return f"{self.rows}x{self.cols}"


@dataclass(frozen=True)
class ExprNode:
    """One matrix expression; children are node ids"""
    op: Op
    children: Tuple[int, ...] = ()
    name: Optional[str] = None
    scalar: Optional[float] = None
    fn: Optional[Fn] = None

    def __post_init__(self):
        if self.op in LEAF_OPS:
            arity = 0
            if not self.name:
                raise GraphError(f"{self.op.value} leaf needs a name")
        elif self.op in UNARY_OPS:
            arity = 1
        else:
            arity = 2
        if len(self.children) != arity:
            raise GraphError(f"{self.op.value} takes {arity} children, got {len(self.children)}")
        if self.op is Op.SCALAR_MUL and self.scalar is None:
            raise GraphError("ScalarMul needs a constant")
        if self.op is Op.MAP and self.fn is None:
            raise GraphError("Map needs a function")

    @property
    def is_leaf(self) -> bool:
        return self.op in LEAF_OPS

    def label(self) -> str:
        if self.is_leaf:
            return f"{self.op.value}[{self.name}]"
        if self.op is Op.SCALAR_MUL:
            return f"ScalarMul[{format_scalar(self.scalar)}]"
        if self.op is Op.MAP:
            return f"Map[{self.fn.value}]"
        return self.op.value


class ExprGraph:
    """Append-only store of expression nodes"""

    def __init__(self, hash_consing: bool = False):
        self.nodes: List[ExprNode] = []
        self.leaves: Dict[str, int] = {}
        self.shapes: Dict[int, Shape] = {}
        self.hash_consing = hash_consing
        self._interned: Dict[ExprNode, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, node: ExprNode, shape: Optional[Shape] = None) -> int:
        """append a node and return its id; shapes are inferred eagerly when children have one"""
        for child in node.children:
            if not 0 <= child < len(self.nodes):
                raise GraphError(f"Dangling child reference {child} in {node.label()}")

        if node.is_leaf:
            if node.name in self.leaves:
                raise GraphError(f"Duplicate leaf name '{node.name}'")
        elif self.hash_consing and node in self._interned:
            return self._interned[node]

        if not node.is_leaf and all(c in self.shapes for c in node.children):
            shape = self._node_shape(node, self.shapes)

        node_id = len(self.nodes)
        self.nodes.append(node)
        if node.is_leaf:
            self.leaves[node.name] = node_id
        elif self.hash_consing:
            self._interned[node] = node_id
        if shape is not None:
            self.shapes[node_id] = shape
        return node_id

    # Builders

    def input(self, name: str, shape: Optional[Shape] = None) -> int:
        return self.add_node(ExprNode(Op.INPUT, name=name), shape)

    def param(self, name: str, shape: Optional[Shape] = None) -> int:
        return self.add_node(ExprNode(Op.PARAM, name=name), shape)

    def add(self, left: int, right: int) -> int:
        return self.add_node(ExprNode(Op.ADD, (left, right)))

    def sub(self, left: int, right: int) -> int:
        return self.add_node(ExprNode(Op.SUB, (left, right)))

    def hadamard(self, left: int, right: int) -> int:
        return self.add_node(ExprNode(Op.HADAMARD, (left, right)))

    def matmul(self, left: int, right: int) -> int:
        return self.add_node(ExprNode(Op.MATMUL, (left, right)))

    def transpose(self, child: int) -> int:
        return self.add_node(ExprNode(Op.TRANSPOSE, (child,)))

    def scalar_mul(self, scalar: float, child: int) -> int:
        return self.add_node(ExprNode(Op.SCALAR_MUL, (child,), scalar=float(scalar)))

    def map(self, fn: Fn, child: int) -> int:
        return self.add_node(ExprNode(Op.MAP, (child,), fn=fn))

    def sigmoid(self, child: int) -> int:
        return self.map(Fn.SIGMOID, child)

    def square(self, child: int) -> int:
        return self.map(Fn.SQUARE, child)

    def one_minus(self, child: int) -> int:
        return self.map(Fn.ONE_MINUS, child)

    # Passes

    def infer_shapes(self, leaf_shapes: Optional[Dict[str, Shape]] = None) -> Dict[int, Shape]:
        """Infer every node shape from the declared leaf shapes"""
        leaf_shapes = leaf_shapes or {}
        shapes: Dict[int, Shape] = {}
        for node_id, node in enumerate(self.nodes):
            if node.is_leaf:
                shape = leaf_shapes.get(node.name) or self.shapes.get(node_id)
                if shape is None:
                    raise GraphError(f"Undeclared leaf '{node.name}'")
                shapes[node_id] = shape
            else:
                shapes[node_id] = self._node_shape(node, shapes)
        self.shapes = shapes
        return dict(shapes)

    def shape(self, node_id: int) -> Shape:
        try:
            return self.shapes[node_id]
        except KeyError:
            raise GraphError(f"Node {node_id} has no inferred shape") from None

    def topo_order(self) -> List[int]:
        """Children before parents; construction order already guarantees it"""
        return list(range(len(self.nodes)))

    def reachable(self, roots: Iterable[int]) -> List[int]:
        """Ids reachable from roots, in topological order"""
        seen = set()
        stack = list(roots)
        while stack:
            node_id = stack.pop()
            if node_id in seen:
                continue
            seen.add(node_id)
            stack.extend(self.nodes[node_id].children)
        return sorted(seen)

    def params(self) -> List[Tuple[str, int]]:
        return [(n.name, i) for i, n in enumerate(self.nodes) if n.op is Op.PARAM]

    def inputs(self) -> List[Tuple[str, int]]:
        return [(n.name, i) for i, n in enumerate(self.nodes) if n.op is Op.INPUT]

    def format(self, ids: Optional[Iterable[int]] = None) -> str:
        """one node per line: '<id>: <kind>(<child ids>) : <rows>x<cols>'"""
        lines = []
        for node_id in (self.topo_order() if ids is None else ids):
            node = self.nodes[node_id]
            children = ", ".join(str(c) for c in node.children)
            shape = self.shapes.get(node_id, "?")
            lines.append(f"{node_id}: {node.label()}({children}) : {shape}")
        return "\n".join(lines) + "\n"

    def render_expr(self, node_id: int, names: Optional[Dict[int, str]] = None, top: bool = True) -> str:
        """Nested expression text; nodes in names print as their name below the top"""
        names = names or {}
        if not top and node_id in names:
            return names[node_id]
        node = self.nodes[node_id]
        if node.is_leaf:
            return node.name
        args = ", ".join(self.render_expr(c, names, top=False) for c in node.children)
        return f"{node.label()}({args})"

    @staticmethod
    def _node_shape(node: ExprNode, shapes: Dict[int, Shape]) -> Shape:
        child_shapes = [shapes[c] for c in node.children]
        if node.op is Op.MATMUL:
            left, right = child_shapes
            if left.cols != right.rows:
                raise ShapeError(f"MatMul inner dimensions differ: {left} and {right}")
            return Shape(left.rows, right.cols)
        if node.op is Op.TRANSPOSE:
            return child_shapes[0].T
        if node.op in ELEMENTWISE_OPS:
            left, right = child_shapes
            if left != right:
                raise ShapeError(f"{node.op.value} operands differ in shape: {left} and {right}")
            return left
        return child_shapes[0]
