"""
Dataset ingestion and encoding for RelGrad
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..core.errors import DataError
from . import relengine
from .denseengine import DenseMatrix
from .relengine import RelMatrix

logger = logging.getLogger(__name__)

IRIS_ATTRIBUTES = ("sepal_length", "sepal_width", "petal_length", "petal_width")
IRIS_LABEL = "species"
IRIS_CLASSES = 3

PIXEL_FEATURES = 784
PIXEL_CLASSES = 10
PIXEL_MAX_ROWS = 6000


@dataclass(frozen=True)
class Dataset:
    features: DenseMatrix
    labels: Tuple[int, ...]
    num_classes: int
    name: str
    attributes: Tuple[str, ...] = ()
    label_name: str = "label"
    scale: float = 1.0

    @property
    def rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_attributes(self) -> int:
        return int(self.features.shape[1])


def parse_schema(schema: str) -> Optional[int]:
    """'iris' -> None, 'generic:<col>' -> label column index"""
    if schema == "iris":
        return None
    kind, _, column = schema.partition(":")
    if kind != "generic" or not column.isdigit():
        raise DataError(f"Unknown schema '{schema}', expected iris or generic:<labelcol>")
    return int(column)


def load_csv(path: Path, schema: str = "iris", scale: Optional[float] = None,
             num_classes: Optional[int] = None) -> Dataset:
    """Read a CSV with a header row; features are divided by scale

    The iris schema takes the label from the last column and defaults to a
    scale of 10; generic schemas name the label column and default to 1.
    """
    path = Path(path)
    label_col = parse_schema(schema)
    if scale is None:
        scale = 10.0 if label_col is None else 1.0
    if scale <= 0:
        raise DataError(f"Scale divisor must be positive, got {scale}")
    if label_col is None:
        num_classes = num_classes or IRIS_CLASSES

    if not path.exists():
        raise DataError(f"Data file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path} has no header row")
        if label_col is None:
            label_col = len(header) - 1
        if label_col >= len(header):
            raise DataError(f"Label column {label_col} outside the {len(header)} columns of {path}")

        features: List[List[float]] = []
        labels: List[int] = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"Row {row_no} has {len(row)} columns, header has {len(header)}")
            values = []
            for col_no, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"Non-numeric value at row {row_no}, column {col_no + 1}") from None
                if not math.isfinite(value):
                    raise DataError(f"Non-finite value at row {row_no}, column {col_no + 1}")
                values.append(value)
            label = values.pop(label_col)
            if label != int(label):
                raise DataError(f"Label at row {row_no}, column {label_col + 1} is not an integer")
            labels.append(int(label))
            features.append(values)

    if not features:
        raise DataError(f"Empty dataset: {path} has a header but no rows")
    num_classes = num_classes or max(labels) + 1
    for row_no, label in enumerate(labels, start=2):
        if not 0 <= label < num_classes:
            raise DataError(f"Label {label} at row {row_no} outside [0, {num_classes})")

    attributes = tuple(name for idx, name in enumerate(header) if idx != label_col)
    logger.info(f"Loaded {len(features)} rows with {len(attributes)} attributes from {path}")
    return Dataset(
        features=np.array(features, dtype=np.float64) / scale,
        labels=tuple(labels),
        num_classes=num_classes,
        name=path.stem,
        attributes=attributes,
        label_name=header[label_col],
        scale=scale,
    )


def replicate(ds: Dataset, factor: int) -> Dataset:
    """Repeat all rows factor times, in order"""
    if factor < 1:
        raise DataError(f"Replication factor must be at least 1, got {factor}")
    if factor == 1:
        return ds
    return Dataset(
        features=np.tile(ds.features, (factor, 1)),
        labels=ds.labels * factor,
        num_classes=ds.num_classes,
        name=f"{ds.name}x{factor}",
        attributes=ds.attributes,
        label_name=ds.label_name,
        scale=ds.scale,
    )


def encode(ds: Dataset, out_dir: Optional[Path] = None) -> Tuple[RelMatrix, RelMatrix]:
    """Relational img and one_hot matrices; row numbers become index i"""
    img = relengine.from_dense(ds.features)
    one_hot = relengine.one_hot(list(ds.labels), ds.rows, ds.num_classes)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        relengine.dump_csv(img, out_dir / "img.csv")
        relengine.dump_csv(one_hot, out_dir / "one_hot.csv")
        logger.info(f"Wrote img.csv and one_hot.csv to {out_dir}")
    return img, one_hot


def synthetic_pixels(rows: int, seed: int = 0, scale: float = 255.0) -> Dataset:
    """Deterministic stand-in for an MNIST excerpt: 784 pixels, 10 classes

    Every class has a random prototype image; rows are noisy copies of the
    prototype of their label, as integer pixel values divided by scale.
    """
    if not 1 <= rows <= PIXEL_MAX_ROWS:
        raise DataError(f"Synthetic pixel data supports 1 to {PIXEL_MAX_ROWS} rows, got {rows}")
    rng = np.random.default_rng(seed)
    prototypes = rng.integers(0, 256, size=(PIXEL_CLASSES, PIXEL_FEATURES))
    labels = rng.integers(0, PIXEL_CLASSES, size=rows)
    noise = rng.integers(-32, 33, size=(rows, PIXEL_FEATURES))
    pixels = np.clip(prototypes[labels] + noise, 0, 255).astype(np.float64)
    return Dataset(
        features=pixels / scale,
        labels=tuple(int(label) for label in labels),
        num_classes=PIXEL_CLASSES,
        name="synthetic-pixels",
        attributes=tuple(f"px{k}" for k in range(PIXEL_FEATURES)),
        scale=scale,
    )
