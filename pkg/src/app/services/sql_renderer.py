"""
SQL rendering of query plans for RelGrad

Lower-case keywords, two-space indentation, one clause per line and LF line
endings, so the output can be compared byte for byte against stored files.
"""

from typing import List, Optional, Tuple

from ..core.errors import DialectError
from ..models.exprgraph import Fn, format_scalar
from ..models.plan import (
    Accuracy, ArrayTransform, Const, GroupAggregate, JoinInner, LinRegLoop, OneHotTransform,
    Operand, PlanNode, Project, Rank, RecursiveLoop, Ref, Scan, Sigmoid, SqlDialect, Union,
    ValueExpr, WeightInit,
)
from . import planner
from .autodiff import GradientProgram

TRAINING_WEIGHTS = "w_"

_PREC = {"+": 1, "-": 1, "*": 2}


def _indent(lines: List[str], width: int) -> List[str]:
    pad = " " * width
    return [pad + line for line in lines]


def _text(lines: List[str]) -> str:
    return "\n".join(lines) + "\n"


def value_sql(expr: ValueExpr) -> str:
    return _value_sql(expr)[0]


def _value_sql(expr: ValueExpr) -> Tuple[str, int]:
    if isinstance(expr, Ref):
        return f"{expr.alias}.v", 3
    if isinstance(expr, Const):
        return format_scalar(expr.value), 1 if expr.value < 0 else 3
    if isinstance(expr, Sigmoid):
        return f"1/(1+exp(-{_value_sql(expr.arg)[0]}))", 3
    prec = _PREC[expr.op]
    left, left_prec = _value_sql(expr.left)
    right, right_prec = _value_sql(expr.right)
    if left_prec < prec:
        left = f"({left})"
    if right_prec <= prec:
        right = f"({right})"
    return f"{left}{expr.op}{right}", prec


# Matrix subqueries


def _weight_filter(left: Operand, right: Operand) -> Tuple[List[str], Optional[str]]:
    """where conditions for id-tagged weight operands, and the carried iter column"""
    conditions: List[str] = []
    iter_column = None
    for operand, other in ((left, right), (right, left)):
        scan = operand.plan
        if not (isinstance(scan, Scan) and scan.is_weight):
            continue
        conditions.append(f"{operand.alias}.id={scan.weight_id}")
        if scan.table == TRAINING_WEIGHTS:
            conditions.append(f"{operand.alias}.iter=(select max(iter) from {TRAINING_WEIGHTS})")
        elif isinstance(other.plan, Scan):
            iter_column = f"{operand.alias}.iter"
        else:
            conditions.append(f"{operand.alias}.iter={other.alias}.iter")
            iter_column = f"{other.alias}.iter"
    if iter_column is None:
        # iteration carried up from a nested model subquery
        for operand in (left, right):
            if not isinstance(operand.plan, Scan) and _carries_iter(operand.plan):
                iter_column = f"{operand.alias}.iter"
                break
    return conditions, iter_column


def _carries_iter(node: PlanNode) -> bool:
    if isinstance(node, Scan):
        return node.is_weight and node.table != TRAINING_WEIGHTS
    if isinstance(node, GroupAggregate):
        return _carries_iter(node.join.left.plan) or _carries_iter(node.join.right.plan)
    if isinstance(node, Project):
        if isinstance(node.source, Operand):
            return _carries_iter(node.source.plan)
        return _carries_iter(node.source.left.plan) or _carries_iter(node.source.right.plan)
    return False


def _from_item(operand: Operand) -> List[str]:
    if isinstance(operand.plan, Scan):
        return [f"{operand.plan.table} as {operand.alias}"]
    return ["(", *_indent(_matrix_lines(operand.plan, nested=True), 2), f") as {operand.alias}"]


def _from_clause(left: Operand, right: Optional[Operand] = None, on: str = "") -> List[str]:
    lines = _from_item(left)
    lines[0] = "from " + lines[0]
    if right is None:
        return lines
    right_lines = _from_item(right)
    lines[-1] += " inner join " + right_lines[0]
    lines += right_lines[1:]
    lines[-1] += f" on {on}"
    return lines


def _index_columns(row: Operand, col: Operand) -> List[str]:
    row_sql = f"{row.alias}.{row.row_col}" + ("" if row.row_col == "i" else " as i")
    col_sql = f"{col.alias}.{col.col_col}" + ("" if col.col_col == "j" else " as j")
    return [row_sql, col_sql]


def _select(columns: List[str]) -> str:
    return "select " + ", ".join(columns)


def _aggregate_lines(node: GroupAggregate, nested: bool) -> List[str]:
    left, right = node.join.left, node.join.right
    conditions, iter_column = _weight_filter(left, right)

    value = f"SUM({left.alias}.v*{right.alias}.v)"
    if node.finisher is Fn.SIGMOID:
        value = f"1/(1+exp(-{value}))"
    columns = [] if node.tag is None else [str(node.tag)]
    columns += _index_columns(left, right)
    columns.append(value + (" as v" if nested else ""))
    keys = [f"{left.alias}.{left.row_col}", f"{right.alias}.{right.col_col}"]
    if iter_column is not None:
        columns.append(iter_column)
        keys.append(iter_column)

    lines = [_select(columns)]
    lines += _from_clause(left, right, f"{left.alias}.{left.col_col}={right.alias}.{right.row_col}")
    if conditions:
        lines.append("where " + " and ".join(conditions))
    lines.append("group by " + ", ".join(keys))
    return lines


def _project_lines(node: Project, nested: bool) -> List[str]:
    value = value_sql(node.expr) + (" as v" if nested else "")
    columns = [] if node.tag is None else [str(node.tag)]
    if isinstance(node.source, Operand):
        source = node.source
        lines = [_select(columns + _index_columns(source, source) + [value])]
        return lines + _from_clause(source)

    left, right = node.source.left, node.source.right
    conditions, iter_column = _weight_filter(left, right)
    on = (f"{left.alias}.{left.row_col}={right.alias}.{right.row_col} and "
          f"{left.alias}.{left.col_col}={right.alias}.{right.col_col}")
    columns += _index_columns(left, left) + [value]
    if iter_column is not None:
        columns.append(iter_column)
    lines = [_select(columns)] + _from_clause(left, right, on)
    if conditions:
        lines.append("where " + " and ".join(conditions))
    return lines


def _matrix_lines(node: PlanNode, nested: bool = False) -> List[str]:
    if isinstance(node, GroupAggregate):
        return _aggregate_lines(node, nested)
    if isinstance(node, Project):
        return _project_lines(node, nested)
    if isinstance(node, Scan):
        return [f"select * from {node.table}"]
    if isinstance(node, Union):
        lines: List[str] = []
        for idx, part in enumerate(node.parts):
            if idx:
                lines.append("union")
            lines += _matrix_lines(part, nested)
        return lines
    raise DialectError(f"{type(node).__name__} is not a matrix-valued plan node")


# Training


def _base_lines(base: Union) -> List[str]:
    lines: List[str] = []
    for idx, part in enumerate(base.parts):
        if idx:
            lines.append("union")
        lines.append(f"select 0,{part.weight_id},* from {part.table}")
    return lines


def _training_sql(loop: RecursiveLoop) -> str:
    lines = [
        "with recursive w (iter,id,i,j,v) as (",
        "  (",
        *_indent(_base_lines(loop.base), 4),
        "  )",
        "  union all",
        "  (",
        f"    with {TRAINING_WEIGHTS} as (",
        "      -- the recursive table may only be referenced once",
        "      select * from w",
    ]
    for cte in loop.step:
        columns = "(id,i,j,v)" if isinstance(cte, Union) else "(i,j,v)"
        lines.append(f"    ), {cte.name}{columns} as (")
        lines += _indent(_matrix_lines(cte), 6)

    update = loop.update
    weights, grads = update.source.left.alias, update.source.right.alias
    lines += [
        "    )",
        f"    select iter+1, {weights}.id, {weights}.i, {weights}.j, {value_sql(update.expr)}",
        f"    from {TRAINING_WEIGHTS} as {weights}, {update.source.right.plan.table}",
        f"    where iter < {loop.iterations} and {weights}.id={grads}.id"
        f" and {weights}.i={grads}.i and {weights}.j={grads}.j",
        "  )",
        ")",
        "select * from w;",
    ]
    return _text(lines)


def _array_training_sql(loop: RecursiveLoop) -> str:
    if not loop.array_vars:
        raise DialectError("Training plan carries no array expressions")
    params = ", ".join(loop.params)
    rate = format_scalar(loop.learning_rate)

    name, expr = loop.array_vars[0]
    block = [f"select {expr} as {name}, *", "from data, w", f"where id < {loop.iterations}"]
    for name, expr in loop.array_vars[1:]:
        block = [f"select {expr} as {name}, *", "from (", *_indent(block, 2), ") as t"]

    updates = [f"{param} - {rate} * sum({grad})" for param, grad in loop.array_grads]
    lines = [
        f"with recursive w (id,{','.join(loop.params)}) as (",
        f"  select 0, {params} from weights",
        "  union all",
        "  select id+1,",
        *_indent([u + "," for u in updates[:-1]] + updates[-1:], 4),
        "  from (",
        *_indent(block, 4),
        "  ) as t",
        f"  group by id, {params}",
        ")",
        "select * from w;",
    ]
    return _text(lines)


# Inference


def _accuracy_header() -> str:
    return "count(*)*1.0/(select count(distinct i) from one_hot)"


def _sql92_inference(plan: Accuracy) -> str:
    model = _matrix_lines(plan.predictions.source, nested=True)
    label = plan.labels.source.table
    lines = [
        "with pred(i,j,v,iter) as (",
        *_indent(model, 2),
        ")",
        f"select p.iter, {_accuracy_header()}",
        f"from pred as p inner join {label} as t on p.i=t.i and p.j=t.j",
        "where t.v=1",
        "  and not exists (",
        "    select * from pred as q",
        "    where q.i=p.i and q.iter=p.iter and q.v>p.v",
        "  )",
        "  and not exists (",
        "    select * from pred as q",
        "    where q.i=p.i and q.iter=p.iter and q.v=p.v and q.j<p.j",
        "  )",
        "group by p.iter",
        "order by p.iter;",
    ]
    return _text(lines)


def _rank_column(rank: Rank) -> str:
    return f"rank() over (partition by {', '.join(rank.partition)} order by v desc, j) as r"


def _window_inference(plan: Accuracy) -> str:
    model = _matrix_lines(plan.predictions.source, nested=True)
    labels = plan.labels
    lines = [
        f"select iter, {_accuracy_header()}",
        "from (",
        f"  select *, {_rank_column(plan.predictions)}",
        "  from (",
        *_indent(model, 4),
        "  ) as m",
        ") as pred,",
        f"(select *, {_rank_column(labels)} from {labels.source.table}) as test",
        "where pred.i=test.i and pred.r=1 and test.r=1 and pred.j=test.j",
        "group by iter",
        "order by iter;",
    ]
    return _text(lines)


def _array_inference(plan: Accuracy) -> str:
    lines = [
        "with test as (",
        "  select correct, count(*) as cnt",
        "  from (",
        f"    select highestposition({plan.array_expr})=highestposition(one_hot) as correct",
        "    from data, weights",
        "  ) as t",
        "  group by correct",
        ")",
        "select cnt*1.0/(select sum(cnt) from test t2)",
        "from test t1",
        "where correct=true;",
    ]
    return _text(lines)


# Data definition


def _one_hot_transform_sql(plan: OneHotTransform) -> str:
    columns = ", ".join(f"{a} float" for a in plan.attributes)
    lines = [f"create table if not exists {plan.table} (id serial, {columns}, {plan.label} int);"]
    if plan.csv_path is not None:
        lines.append(f"copy {plan.table} from '{plan.csv_path}' delimiter ',' HEADER CSV;")
    lines += [
        "create table img (i int, j int, v float);",
        "create table one_hot (i int, j int, v float);",
    ]
    scale = format_scalar(plan.scale)
    for j, attribute in enumerate(plan.attributes, start=1):
        lines += ["insert into img (", f"  select id, {j}, {attribute}/{scale} from {plan.table});"]
    lines += [
        "insert into one_hot (",
        "  select n.i, n.j, coalesce(l.v,0)",
        f"  from (select id, {plan.label}+1 as {plan.label}, 1 as v from {plan.table}) as l",
        "  right outer join (",
        "    select a.i, b.j",
        f"    from (select generate_series as i from generate_series(1,(select count(*) from {plan.table}))) as a,",
        f"      (select generate_series as j from generate_series(1,{plan.num_classes})) as b",
        f"  ) as n on n.i=l.id and n.j=l.{plan.label}",
        "  order by n.i, n.j);",
    ]
    return _text(lines)


def _weight_init_sql(plan: WeightInit) -> str:
    lines = [f"create table {name} (i int, j int, v float);" for name, _ in plan.weights]
    for name, shape in plan.weights:
        lines += [
            f"insert into {name} (",
            "  select i.*, j.*, random()*2-1",
            f"  from generate_series(1,{shape.rows}) i, generate_series(1,{shape.cols}) j);",
        ]
    return _text(lines)


def _array_transform_sql(plan: ArrayTransform) -> str:
    columns = ", ".join(f"{p} float[][]" for p in plan.params)
    aggregates = []
    for param in plan.params:
        aggregates += [
            "(select array_agg(js order by i) from (",
            "  select i, array_agg(v order by j) as js",
            f"  from {param} group by i) tmp)",
        ]
    # comma after every aggregate but the last
    for idx in range(2, len(aggregates) - 1, 3):
        aggregates[idx] += ","
    lines = [
        f"create table weights ({columns});",
        "insert into weights (",
        "  select",
        *_indent(aggregates, 4),
    ]
    lines[-1] += ");"
    lines += [
        "create table data (i int, img float[], one_hot float[]);",
        "insert into data (",
        "  select x.i, x.js, y.js",
        "  from (select i, array_agg(v order by j) as js from img group by i) as x",
        "  inner join (select i, array_agg(v order by j) as js from one_hot group by i) as y on x.i=y.i);",
    ]
    return _text(lines)


def _linreg_sql(plan: LinRegLoop) -> str:
    rate = format_scalar(plan.learning_rate)
    a, b = (format_scalar(v) for v in plan.start)
    lines = [
        f"create table if not exists {plan.table} (x float, y float);",
        "with recursive w (id, a, b) as (",
        f"  select 0, cast({a} as float), cast({b} as float)",
        "  union all",
        f"  select id+1, a-{rate}*avg(2*x*(a*x+b-y)), b-{rate}*avg(2*(a*x+b-y))",
        f"  from w, {plan.table}",
        f"  where id < {plan.iterations}",
        "  group by id, a, b",
        ")",
        "select * from w order by id;",
    ]
    return _text(lines)


def render_sql(plan: PlanNode, dialect: SqlDialect = SqlDialect.SQL92) -> str:
    """Render a plan as SQL text in the given dialect

    The output depends only on the plan and the dialect.
    """
    dialect = SqlDialect(dialect)
    if isinstance(plan, OneHotTransform):
        return _one_hot_transform_sql(plan)
    if isinstance(plan, WeightInit):
        return _weight_init_sql(plan)
    if isinstance(plan, ArrayTransform):
        return _array_transform_sql(plan)
    if isinstance(plan, LinRegLoop):
        return _linreg_sql(plan)

    if isinstance(plan, RecursiveLoop):
        return _array_training_sql(plan) if dialect is SqlDialect.ARRAY else _training_sql(plan)
    if isinstance(plan, Accuracy):
        if dialect is SqlDialect.ARRAY:
            return _array_inference(plan)
        if dialect is SqlDialect.WINDOW:
            return _window_inference(plan)
        return _sql92_inference(plan)

    if isinstance(plan, Union) and plan.parts and all(isinstance(p, Scan) and p.is_weight for p in plan.parts):
        if dialect is SqlDialect.ARRAY:
            return _text([f"select 0, {', '.join(p.param for p in plan.parts)} from weights;"])
        lines = _base_lines(plan)
        lines[-1] += ";"
        return _text(lines)

    if dialect is SqlDialect.ARRAY:
        raise DialectError(f"{type(plan).__name__} has no array-dialect rendering")
    if isinstance(plan, Rank):
        if dialect is not SqlDialect.WINDOW:
            raise DialectError("Standalone ranking needs window functions; use the window dialect")
        lines = [f"select *, {_rank_column(plan)}", "from (",
                 *_indent(_matrix_lines(plan.source, nested=True), 2), ") as m;"]
        return _text(lines)
    if isinstance(plan, JoinInner):
        raise DialectError("A join is rendered only as part of an aggregate or projection")

    lines = _matrix_lines(plan)
    lines[-1] += ";"
    return _text(lines)


def render_artifacts(program: GradientProgram, dialect: SqlDialect, iterations: int,
                     attributes: Tuple[str, ...], label: str, num_classes: int,
                     csv_path: Optional[str] = None, scale: float = 10.0) -> dict:
    """file name -> SQL text for every artifact of a training setup"""
    dialect = SqlDialect(dialect)
    rows = program.graph.shape(program.graph.leaves["x"]).rows
    artifacts = {
        "transform.sql": render_sql(
            planner.one_hot_transform(attributes, label, rows, num_classes, scale, csv_path=csv_path), dialect),
        "weights.sql": render_sql(planner.weight_init(program), dialect),
        "training.sql": render_sql(planner.lower(program, iterations), dialect),
        "inference.sql": render_sql(planner.lower_inference(program), dialect),
        "linreg.sql": render_sql(planner.linreg(iterations, program.learning_rate), dialect),
    }
    if dialect is SqlDialect.ARRAY:
        artifacts["array_transform.sql"] = render_sql(planner.array_transform(program), dialect)
    return artifacts
