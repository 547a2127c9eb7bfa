"""
Shared fixtures for the RelGrad test suite
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from app.core.config import iris_path  # noqa: E402
from app.services import relengine  # noqa: E402
from app.services.autodiff import mlp_program  # noqa: E402
from app.services.dataset_service import encode, load_csv  # noqa: E402
from app.services.trainer import init_weights  # noqa: E402

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def golden(name: str) -> str:
    with open(os.path.join(GOLDEN_DIR, name), encoding="utf-8", newline="") as f:
        return f.read()


@pytest.fixture(scope="session")
def iris():
    return load_csv(iris_path())


@pytest.fixture(scope="session")
def iris_program():
    return mlp_program(4, 20, 3, 150, 0.01)


@pytest.fixture
def small_problem():
    """12 rows, 3 attributes, 4 hidden units, 2 classes"""
    rng = np.random.default_rng(7)
    features = rng.uniform(0, 1, size=(12, 3))
    labels = [int(v) for v in rng.integers(0, 2, size=12)]
    return features, labels


@pytest.fixture
def iris_catalog(iris):
    """img, one_hot and seed-1 initial weights as relational matrices"""
    img, one_hot = encode(iris)
    weights = init_weights(4, 20, 3, 1)
    return {"img": img, "one_hot": one_hot, **{k: relengine.from_dense(w) for k, w in weights.items()}}
