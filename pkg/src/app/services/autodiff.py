"""
Reverse-mode differentiation over expression graphs for RelGrad
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Set

from ..core.config import DEFAULT_LEARNING_RATE
from ..core.errors import ShapeError
from ..models.exprgraph import ExprGraph, Fn, Op, Shape

logger = logging.getLogger(__name__)

FORWARD_VARS = ("a_xh", "a_ho")
BACKWARD_VARS = ("l_ho", "d_ho", "l_xh", "d_xh")


@dataclass
class GradientProgram:
    """Loss graph plus the named variables and per-parameter gradients"""
    graph: ExprGraph
    loss: int
    forward_vars: Dict[str, int]
    backward_vars: Dict[str, int] = field(default_factory=dict)
    grads: Dict[str, int] = field(default_factory=dict)
    learning_rate: float = DEFAULT_LEARNING_RATE

    @property
    def is_complete(self) -> bool:
        return bool(self.grads)

    def variables(self) -> Dict[str, int]:
        """forward then backward variables, in dependency order"""
        return {**self.forward_vars, **self.backward_vars}

    def names(self) -> Dict[int, str]:
        return {node_id: name for name, node_id in self.variables().items()}

    def describe(self) -> str:
        """One 'name = expression' line per variable and gradient"""
        names = self.names()
        render = self.graph.render_expr
        lines = [f"loss = {render(self.loss, names)}"]
        lines += [f"{name} = {render(node_id, names)}" for name, node_id in self.variables().items()]
        lines += [f"grad[{p}] = {render(node_id, names)}" for p, node_id in self.grads.items()]
        return "\n".join(lines) + "\n"


def _ones_like(graph: ExprGraph, node_id: int) -> int:
    # 1 - 0*X: a ones matrix of X's shape within the closed node set
    return graph.one_minus(graph.scalar_mul(0.0, node_id))


def _materialize(graph: ExprGraph, seed: Optional[int], like: int) -> int:
    return _ones_like(graph, like) if seed is None else seed


def _times(graph: ExprGraph, seed: Optional[int], factor: int) -> int:
    return factor if seed is None else graph.hadamard(seed, factor)


def _param_dependent(graph: ExprGraph, root: int) -> Set[int]:
    live: Set[int] = set()
    for node_id in graph.reachable([root]):
        node = graph.nodes[node_id]
        if node.op is Op.PARAM or any(c in live for c in node.children):
            live.add(node_id)
    return live


def _propagate(graph: ExprGraph, node_id: int, seed: Optional[int],
               push: Callable[[int, Callable[[], Optional[int]]], None]) -> None:
    """apply the derivation rule of one node kind to its children"""
    node = graph.nodes[node_id]
    op = node.op

    if op is Op.ADD:
        left, right = node.children
        push(left, lambda: seed)
        push(right, lambda: seed)
    elif op is Op.SUB:
        left, right = node.children
        push(left, lambda: seed)
        push(right, lambda: graph.scalar_mul(-1.0, _materialize(graph, seed, node_id)))
    elif op is Op.HADAMARD:
        left, right = node.children
        push(left, lambda: _times(graph, seed, right))
        push(right, lambda: _times(graph, seed, left))
    elif op is Op.MATMUL:
        left, right = node.children
        push(left, lambda: graph.matmul(_materialize(graph, seed, node_id), graph.transpose(right)))
        push(right, lambda: graph.matmul(graph.transpose(left), _materialize(graph, seed, node_id)))
    elif op is Op.TRANSPOSE:
        child, = node.children
        push(child, lambda: None if seed is None else graph.transpose(seed))
    elif op is Op.SCALAR_MUL:
        child, = node.children
        push(child, lambda: graph.scalar_mul(node.scalar, _materialize(graph, seed, node_id)))
    elif op is Op.MAP:
        child, = node.children
        push(child, lambda: _map_seed(graph, node.fn, node_id, child, seed))


def _map_seed(graph: ExprGraph, fn: Fn, out: int, child: int, seed: Optional[int]) -> Optional[int]:
    if fn is Fn.SIGMOID:
        # derivative from the forward output: seed * a * (1 - a)
        return graph.hadamard(_times(graph, seed, out), graph.one_minus(out))
    if fn is Fn.SQUARE:
        return _times(graph, seed, graph.scalar_mul(2.0, child))
    if fn is Fn.ONE_MINUS:
        return graph.scalar_mul(-1.0, _materialize(graph, seed, out))
    return seed


def backpropagate(graph: ExprGraph, root: int, seed: Optional[int] = None) -> Dict[int, Optional[int]]:
    """Adjoint expression of every parameter-dependent node below root

    A seed of None stands for the all-ones matrix, the derivative of summing
    every entry of root.
    """
    live = _param_dependent(graph, root)
    adjoints: Dict[int, Optional[int]] = {root: seed}

    def push(child: int, build: Callable[[], Optional[int]]) -> None:
        if child not in live:
            return
        contribution = build()
        if contribution is not None and graph.shape(contribution) != graph.shape(child):
            raise ShapeError(
                f"Seed for node {child} has shape {graph.shape(contribution)}, expected {graph.shape(child)}"
            )
        if child not in adjoints:
            adjoints[child] = contribution
            return
        previous = adjoints[child]
        adjoints[child] = graph.add(
            _materialize(graph, previous, child), _materialize(graph, contribution, child)
        )

    for node_id in reversed(graph.reachable([root])):
        if node_id in adjoints and node_id in live and not graph.nodes[node_id].is_leaf:
            _propagate(graph, node_id, adjoints[node_id], push)

    return adjoints


def derive(graph: ExprGraph, root: int, seed: Optional[int] = None) -> Dict[str, int]:
    """Gradient expression of root with respect to every parameter"""
    if seed is not None and graph.shape(seed) != graph.shape(root):
        raise ShapeError(f"Seed shape {graph.shape(seed)} differs from root shape {graph.shape(root)}")
    adjoints = backpropagate(graph, root, seed)
    grads = {}
    for name, leaf in graph.params():
        # parameters root does not depend on get an explicit zero gradient
        grads[name] = (
            _materialize(graph, adjoints[leaf], leaf) if leaf in adjoints
            else graph.scalar_mul(0.0, leaf)
        )
    return grads


def build_mlp_loss(input_dim: int, hidden_dim: int, output_dim: int, num_rows: int,
                   learning_rate: float = DEFAULT_LEARNING_RATE) -> GradientProgram:
    """Squared error of a one-hidden-layer sigmoid network, without biases"""
    graph = ExprGraph()
    x = graph.input("x", Shape(num_rows, input_dim))
    y_ones = graph.input("y_ones", Shape(num_rows, output_dim))
    w_xh = graph.param("w_xh", Shape(input_dim, hidden_dim))
    w_ho = graph.param("w_ho", Shape(hidden_dim, output_dim))

    a_xh = graph.sigmoid(graph.matmul(x, w_xh))
    a_ho = graph.sigmoid(graph.matmul(a_xh, w_ho))
    loss = graph.square(graph.sub(a_ho, y_ones))

    return GradientProgram(
        graph=graph,
        loss=loss,
        forward_vars={"a_xh": a_xh, "a_ho": a_ho},
        learning_rate=learning_rate,
    )


def gradients_mlp(program: GradientProgram) -> GradientProgram:
    """Complete the program with the backpropagation variables and gradients"""
    graph = program.graph
    a_xh = program.forward_vars["a_xh"]
    a_ho = program.forward_vars["a_ho"]
    diff = graph.nodes[program.loss].children[0]
    z_xh = graph.nodes[a_xh].children[0]
    z_ho = graph.nodes[a_ho].children[0]

    adjoints = backpropagate(graph, program.loss)
    backward = {
        "l_ho": _materialize(graph, adjoints[diff], diff),
        "d_ho": _materialize(graph, adjoints[z_ho], z_ho),
        "l_xh": _materialize(graph, adjoints[a_xh], a_xh),
        "d_xh": _materialize(graph, adjoints[z_xh], z_xh),
    }
    grads = {name: _materialize(graph, adjoints[leaf], leaf) for name, leaf in graph.params()}

    memo: Dict[int, int] = {}
    return replace(
        program,
        backward_vars={k: canonicalize(graph, v, memo) for k, v in backward.items()},
        grads={k: canonicalize(graph, v, memo) for k, v in grads.items()},
    )


def mlp_program(input_dim: int, hidden_dim: int, output_dim: int, num_rows: int,
                learning_rate: float = DEFAULT_LEARNING_RATE) -> GradientProgram:
    return gradients_mlp(build_mlp_loss(input_dim, hidden_dim, output_dim, num_rows, learning_rate))


def _rewrite(graph: ExprGraph, node_id: int) -> int:
    node = graph.nodes[node_id]
    if node.is_leaf:
        return node_id
    child = graph.nodes[node.children[0]]

    if node.op is Op.SCALAR_MUL:
        if child.op is Op.SCALAR_MUL:
            return graph.scalar_mul(node.scalar * child.scalar, child.children[0])
        if node.scalar == 1.0:
            return node.children[0]
    elif node.op is Op.MAP and node.fn is Fn.IDENTITY:
        return node.children[0]
    elif node.op is Op.TRANSPOSE and child.op is Op.TRANSPOSE:
        return child.children[0]
    elif node.op is Op.ADD:
        left, right = node.children
        negated = graph.nodes[right]
        if negated.op is Op.SCALAR_MUL and negated.scalar == -1.0:
            return graph.sub(left, negated.children[0])
    return node_id


def canonicalize(graph: ExprGraph, node_id: int, _memo: Optional[Dict[int, int]] = None) -> int:
    """Rewrite to the canonical form used for structural comparison"""
    memo = {} if _memo is None else _memo
    if node_id in memo:
        return memo[node_id]

    node = graph.nodes[node_id]
    result = node_id
    if not node.is_leaf:
        children = tuple(canonicalize(graph, c, memo) for c in node.children)
        if children != node.children:
            result = graph.add_node(replace(node, children=children))
        while True:
            rewritten = _rewrite(graph, result)
            if rewritten == result:
                break
            result = rewritten

    memo[node_id] = result
    return result


def gradient_nodes(program: GradientProgram) -> List[int]:
    """Nodes the training step has to evaluate"""
    return [program.backward_vars["l_ho"], *program.grads.values()]
