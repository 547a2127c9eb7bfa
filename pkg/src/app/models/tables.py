"""
Database models for relational matrices
"""

from typing import Dict, Iterable, List, Tuple, Type

from sqlalchemy import Column, Float, Integer, insert
from sqlalchemy.engine import Dialect
from sqlalchemy.schema import CreateTable

from ..core.database import Base


class MatrixMixin:
    """(i, j, v) tuple layout with 1-based indices"""
    i = Column(Integer, primary_key=True)
    j = Column(Integer, primary_key=True)
    v = Column(Float, nullable=False)

    def __repr__(self):
        return f"<{type(self).__name__}(i={self.i}, j={self.j}, v={self.v})>"


class Img(MatrixMixin, Base):
    """Feature matrix, one row per tuple of the data set"""
    __tablename__ = "img"


class OneHot(MatrixMixin, Base):
    """One-hot encoded labels"""
    __tablename__ = "one_hot"


class WeightXH(MatrixMixin, Base):
    """Initial input-to-hidden weights"""
    __tablename__ = "w_xh"


class WeightHO(MatrixMixin, Base):
    """Initial hidden-to-output weights"""
    __tablename__ = "w_ho"


class TrainedWeight(Base):
    """Weights per iteration, as produced by the training query"""
    __tablename__ = "w"

    iter = Column(Integer, primary_key=True)
    id = Column(Integer, primary_key=True)
    i = Column(Integer, primary_key=True)
    j = Column(Integer, primary_key=True)
    v = Column(Float, nullable=False)

    def __repr__(self):
        return f"<TrainedWeight(iter={self.iter}, id={self.id}, i={self.i}, j={self.j})>"


MATRIX_TABLES: Dict[str, Type[Base]] = {
    "img": Img,
    "one_hot": OneHot,
    "w_xh": WeightXH,
    "w_ho": WeightHO,
    "w": TrainedWeight,
}

INSERT_BATCH = 1000


def schema_ddl(names: Iterable[str], dialect: Dialect) -> List[str]:
    """CREATE TABLE statements for the named tables"""
    return [str(CreateTable(MATRIX_TABLES[name].__table__).compile(dialect=dialect)).strip()
            for name in names]


def insert_statements(name: str, rows: List[Tuple], dialect: Dialect) -> List[str]:
    """INSERT statements with literal values, INSERT_BATCH rows each"""
    table = MATRIX_TABLES[name].__table__
    columns = [c.name for c in table.columns]
    statements = []
    for start in range(0, len(rows), INSERT_BATCH):
        batch = [dict(zip(columns, row)) for row in rows[start:start + INSERT_BATCH]]
        statement = insert(table).values(batch)
        statements.append(str(statement.compile(dialect=dialect, compile_kwargs={"literal_binds": True})))
    return statements
