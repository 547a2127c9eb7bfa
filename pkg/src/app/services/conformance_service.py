"""
Conformance of emitted SQL against an external executor

An executor takes setup statements and one query and returns the result
rows. Training and inference queries are run through it and the rows are
compared with the plan interpreter.
"""

import logging
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

from pydantic import BaseModel
from sqlalchemy import text
from sqlalchemy.dialects import postgresql
from sqlalchemy.exc import SQLAlchemyError

from ..core.database import get_engine
from ..core.errors import ConformanceError, ExecutionError, RelGradError
from ..models.plan import SqlDialect
from ..models.tables import insert_statements, schema_ddl
from . import planner
from .autodiff import GradientProgram, mlp_program
from .relengine import RelMatrix
from .sql_renderer import render_sql

logger = logging.getLogger(__name__)

TOLERANCE = 1e-6

Row = Tuple


class SqlExecutor(Protocol):
    def run(self, setup: List[str], query: str) -> List[Row]:
        ...


class ReferenceExecutor:
    """In-process stand-in that answers only the queries registered with it"""

    def __init__(self):
        self._answers: Dict[str, List[Row]] = {}

    def register(self, query: str, rows: List[Row]) -> None:
        self._answers[query.strip()] = list(rows)

    def run(self, setup: List[str], query: str) -> List[Row]:
        try:
            return list(self._answers[query.strip()])
        except KeyError:
            raise ExecutionError("Reference executor does not recognize the query text") from None


class SqlAlchemyExecutor:
    """Runs statements on DATABASE_URL inside a transaction that is rolled back"""

    def __init__(self, url: Optional[str] = None):
        self.engine = get_engine(url)

    @property
    def dialect(self):
        return self.engine.dialect

    def run(self, setup: List[str], query: str) -> List[Row]:
        with self.engine.connect() as conn:
            trans = conn.begin()
            try:
                for statement in setup:
                    conn.execute(text(statement))
                return [tuple(row) for row in conn.execute(text(query)).fetchall()]
            except SQLAlchemyError as e:
                logger.error(f"Failed to execute query: {e}")
                raise ExecutionError(f"Database rejected the statement: {e.__class__.__name__}: {e}") from e
            finally:
                trans.rollback()


class QueryResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class ConformanceReport(BaseModel):
    adapter: str
    results: List[QueryResult] = []

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    def format(self) -> str:
        lines = [f"adapter: {self.adapter}"]
        lines += [f"{'PASS' if r.passed else 'FAIL'} {r.name}" + (f": {r.detail}" if r.detail else "")
                  for r in self.results]
        return "\n".join(lines) + "\n"


def _matrix_rows(m: RelMatrix) -> List[Row]:
    return [(i, j, v) for i, j, v in sorted(m.entries)]


def _weight_rows(iteration: int, weights: Dict[str, RelMatrix], params: Sequence[str]) -> List[Row]:
    return [(iteration, idx, i, j, v) for idx, name in enumerate(params) for i, j, v in sorted(weights[name].entries)]


class ConformanceRun:
    """Queries, setup statements and interpreter answers for one configuration"""

    def __init__(self, catalog: Dict[str, RelMatrix], program: GradientProgram, iterations: int,
                 dialect: SqlDialect = SqlDialect.SQL92, sql: Optional[Dict[str, str]] = None):
        self.catalog = catalog
        self.program = program
        self.iterations = iterations
        self.params = [name for name, _ in program.graph.params()]
        self.training_plan = planner.lower(program, iterations)
        self.inference_plan = planner.lower_inference(program)
        self.rendered = {
            "training": render_sql(self.training_plan, dialect),
            "inference": render_sql(self.inference_plan, dialect),
        }
        sql = sql or {}
        self.training_sql = sql.get("training") or self.rendered["training"]
        self.inference_sql = sql.get("inference") or self.rendered["inference"]

        trained = planner.interpret(self.training_plan, catalog).tables
        self.expected_weights = _weight_rows(iterations, trained, self.params)
        inference_catalog = {"img": catalog["img"], "one_hot": catalog["one_hot"], **trained}
        self.expected_accuracy = planner.interpret(self.inference_plan, inference_catalog).accuracy

    def setup(self, dialect, with_trained: bool) -> List[str]:
        names = ["img", "one_hot", "w_xh", "w_ho"] + (["w"] if with_trained else [])
        statements = schema_ddl(names, dialect)
        for name in ("img", "one_hot", *self.params):
            statements += insert_statements(name, _matrix_rows(self.catalog[name]), dialect)
        if with_trained:
            statements += insert_statements("w", self.expected_weights, dialect)
        return statements

    def register(self, executor: ReferenceExecutor) -> None:
        # only the rendered text is known to the shim; edited files fail
        executor.register(self.rendered["training"], self.expected_weights)
        executor.register(self.rendered["inference"], [(self.iterations, self.expected_accuracy)])

    def check_training(self, rows: List[Row]) -> QueryResult:
        if not rows:
            return QueryResult(name="training", passed=False, detail="no rows returned")
        last = max(int(r[0]) for r in rows)
        got = {(int(r[1]), int(r[2]), int(r[3])): float(r[4]) for r in rows if int(r[0]) == last}
        want = {(r[1], r[2], r[3]): r[4] for r in self.expected_weights}
        if last != self.iterations or got.keys() != want.keys():
            return QueryResult(name="training", passed=False,
                               detail=f"iteration {last} with {len(got)} weights, expected {self.iterations} with {len(want)}")
        worst = max(abs(got[k] - want[k]) for k in want)
        return QueryResult(name="training", passed=worst <= TOLERANCE, detail=f"max abs diff {worst:.3g}")

    def check_inference(self, rows: List[Row]) -> QueryResult:
        # no correct prediction yields no row
        value = float(max(rows, key=lambda r: int(r[0]))[1]) if rows else 0.0
        diff = abs(value - self.expected_accuracy)
        return QueryResult(name="inference", passed=diff <= TOLERANCE,
                           detail=f"accuracy {value:.6f}, expected {self.expected_accuracy:.6f}")


def conformance(catalog: Dict[str, RelMatrix], input_dim: int, hidden_dim: int, num_classes: int,
                iterations: int, learning_rate: float, executor: Optional[SqlExecutor] = None,
                dialect: SqlDialect = SqlDialect.SQL92,
                sql: Optional[Dict[str, str]] = None) -> ConformanceReport:
    """Run training and inference SQL through an executor and diff against the interpreter

    Without an executor the reference shim is used, answering with the
    interpreter's own results.
    """
    if dialect is SqlDialect.ARRAY:
        raise ConformanceError("Array-dialect SQL has no relational result rows to compare")
    rows = catalog["img"].rows
    program = mlp_program(input_dim, hidden_dim, num_classes, rows, learning_rate)
    run = ConformanceRun(catalog, program, iterations, dialect, sql)

    if executor is None:
        executor = ReferenceExecutor()
        run.register(executor)
    # statements for the reference shim are rendered for PostgreSQL
    sql_dialect = getattr(executor, "dialect", None) or postgresql.dialect()
    adapter = type(executor).__name__

    report = ConformanceReport(adapter=adapter)
    checks = (
        ("training", run.training_sql, False, run.check_training),
        ("inference", run.inference_sql, True, run.check_inference),
    )
    for name, query, with_trained, check in checks:
        try:
            result = check(executor.run(run.setup(sql_dialect, with_trained), query))
        except RelGradError as e:
            result = QueryResult(name=name, passed=False, detail=str(e))
        logger.info(f"{'PASS' if result.passed else 'FAIL'} {name} {result.detail}")
        report.results.append(result)
    return report

