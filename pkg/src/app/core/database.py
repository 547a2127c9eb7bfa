"""
Database configuration for the RelGrad conformance adapter
"""

from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

from .config import DATABASE_URL
from .errors import ConformanceError

# Create base class for models
Base = declarative_base()

_engines = {}


def get_engine(url: Optional[str] = None) -> Engine:
    """Engine for the configured database, created once per URL"""
    url = url or DATABASE_URL
    if not url:
        raise ConformanceError(
            "No database configured: set DATABASE_URL to enable the sqlalchemy adapter"
        )
    if url not in _engines:
        _engines[url] = create_engine(
            url,
            pool_pre_ping=True,
            pool_recycle=300,
            echo=False  # Set to True for SQL query logging
        )
    return _engines[url]


def get_session(url: Optional[str] = None):
    """Session bound to the configured engine"""
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=get_engine(url))
    return SessionLocal()


def create_tables(engine: Engine) -> None:
    """Create all matrix tables in the database"""
    Base.metadata.create_all(bind=engine)


def drop_tables(engine: Engine) -> None:
    """Drop all matrix tables in the database"""
    Base.metadata.drop_all(bind=engine)
