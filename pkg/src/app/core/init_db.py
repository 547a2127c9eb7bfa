"""
Database initialization script for RelGrad

Loads a dataset and initial weights into the configured database, so the
emitted training and inference SQL can be run there.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from sqlalchemy.orm import Session

# Add the src directory to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from app.core.config import DEFAULT_SEED, configure_logging, iris_path
from app.core.database import create_tables, drop_tables, get_engine, get_session
from app.models.tables import INSERT_BATCH, MATRIX_TABLES
from app.services.dataset_service import Dataset, encode, load_csv
from app.services.relengine import RelMatrix, from_dense
from app.services.trainer import init_weights

logger = logging.getLogger(__name__)


def load_matrix(db: Session, name: str, entries: Iterable[Tuple]) -> int:
    """Bulk insert (i, j, v) tuples into the named table, INSERT_BATCH rows at a time"""
    model = MATRIX_TABLES[name]
    batch: List[Dict] = []
    total = 0
    for i, j, v in entries:
        batch.append({"i": i, "j": j, "v": v})
        if len(batch) >= INSERT_BATCH:
            db.bulk_insert_mappings(model, batch)
            total += len(batch)
            batch = []
            if total % (10 * INSERT_BATCH) == 0:
                logger.info(f"Progress: {total} tuples loaded into {name}")
    if batch:
        db.bulk_insert_mappings(model, batch)
        total += len(batch)
    return total


def init_db(ds: Dataset, hidden_dim: int = 20, seed: int = DEFAULT_SEED, url: Optional[str] = None) -> Dict[str, int]:
    """Recreate the matrix tables and load img, one_hot, w_xh and w_ho"""
    engine = get_engine(url)
    try:
        logger.info("Dropping existing tables...")
        drop_tables(engine)
        logger.info("Creating database tables...")
        create_tables(engine)

        img, one_hot = encode(ds)
        weights = init_weights(ds.num_attributes, hidden_dim, ds.num_classes, seed)
        matrices: Dict[str, RelMatrix] = {
            "img": img,
            "one_hot": one_hot,
            **{name: from_dense(w) for name, w in weights.items()},
        }

        db = get_session(url)
        try:
            counts = {name: load_matrix(db, name, m.entries) for name, m in matrices.items()}
            db.commit()
        except Exception:
            db.rollback()
            raise
        finally:
            db.close()

        logger.info(f"Database initialization completed: {counts}")
        return counts
    except Exception as e:
        logger.error(f"Database initialization failed: {e}")
        raise


if __name__ == "__main__":
    configure_logging()

    path = Path(sys.argv[1]) if len(sys.argv) > 1 else iris_path()
    init_db(load_csv(path))
