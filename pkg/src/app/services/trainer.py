"""
Gradient-descent drivers for RelGrad

Linear regression plus training, inference and accuracy of the one-hidden-
layer sigmoid network on the dense engine, the relational engine or the plan
interpreter.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..core.config import DEFAULT_LEARNING_RATE, DEFAULT_SEED
from ..core.errors import DataError, ShapeError
from ..models.tuplestats import TupleStats
from . import denseengine, planner, relengine
from .autodiff import GradientProgram, build_mlp_loss, gradient_nodes, mlp_program
from .denseengine import DenseMatrix, SplitMix64, init_uniform

logger = logging.getLogger(__name__)

LOG_EVERY = 100


class Engine(str, Enum):
    DENSE = "dense"
    RELATIONAL = "relational"
    PLAN = "plan"


class TrainConfig(BaseModel):
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0)
    iterations: int = Field(10, ge=0)
    hidden_dim: int = Field(20, ge=1)
    batch_size: Union[Literal["full"], int] = "full"
    seed: int = Field(DEFAULT_SEED, ge=0, lt=1 << 64)
    engine: Engine = Engine.DENSE
    track_accuracy: bool = False

    @field_validator("batch_size")
    @classmethod
    def positive_batch(cls, value):
        if value != "full" and value < 1:
            raise ValueError("batch_size must be positive or 'full'")
        return value


@dataclass
class TrainResult:
    w_xh: DenseMatrix
    w_ho: DenseMatrix
    losses: List[float] = field(default_factory=list)
    accuracies: List[float] = field(default_factory=list)
    stats: Optional[TupleStats] = None
    wall_time_ms: float = 0.0
    config: Optional[TrainConfig] = None

    @property
    def weights(self) -> Dict[str, DenseMatrix]:
        return {"w_xh": self.w_xh, "w_ho": self.w_ho}


def gd_linreg(data: Sequence[Tuple[float, float]], learning_rate: float = DEFAULT_LEARNING_RATE,
              iterations: int = 5, start: Tuple[float, float] = (1.0, 1.0)) -> List[Tuple[float, float]]:
    """Gradient descent for y ~ a*x + b; returns (a, b) before every step and after the last"""
    if len(data) == 0:
        raise DataError("Linear regression needs at least one point")
    x = np.array([p[0] for p in data], dtype=np.float64)
    y = np.array([p[1] for p in data], dtype=np.float64)
    a, b = float(start[0]), float(start[1])
    trajectory = [(a, b)]
    for _ in range(iterations):
        residual = a * x + b - y
        a, b = (
            a - learning_rate * float(np.mean(2 * x * residual)),
            b - learning_rate * float(np.mean(2 * residual)),
        )
        trajectory.append((a, b))
    return trajectory


def init_weights(input_dim: int, hidden_dim: int, output_dim: int, seed: int) -> Dict[str, DenseMatrix]:
    """w_xh then w_ho, drawn from one SplitMix64 stream"""
    prng = SplitMix64(seed)
    w_xh = init_uniform(prng, input_dim, hidden_dim)
    w_ho = init_uniform(prng, hidden_dim, output_dim)
    return {"w_xh": w_xh, "w_ho": w_ho}


def one_hot_dense(labels: Sequence[int], num_classes: int) -> DenseMatrix:
    return relengine.to_dense(relengine.one_hot(list(labels), len(labels), num_classes))


def _chunks(num_rows: int, batch_size: Union[str, int]) -> List[Tuple[int, int]]:
    """consecutive row ranges; the last one may be short"""
    if batch_size == "full":
        return [(0, num_rows)]
    if batch_size > num_rows:
        raise ShapeError(f"Batch size {batch_size} exceeds the {num_rows} available rows")
    return [(start, min(start + batch_size, num_rows)) for start in range(0, num_rows, batch_size)]


class _StepRunner:
    """One gradient step on one chunk, for the configured engine"""

    def __init__(self, cfg: TrainConfig, input_dim: int, num_classes: int,
                 stats: Optional[TupleStats]):
        self.cfg = cfg
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.stats = stats
        self._programs: Dict[int, GradientProgram] = {}

    def program(self, rows: int) -> GradientProgram:
        if rows not in self._programs:
            self._programs[rows] = mlp_program(
                self.input_dim, self.cfg.hidden_dim, self.num_classes, rows, self.cfg.learning_rate
            )
        return self._programs[rows]

    def step(self, x: DenseMatrix, y_ones: DenseMatrix,
             weights: Dict[str, DenseMatrix]) -> Tuple[Dict[str, DenseMatrix], np.ndarray]:
        program = self.program(x.shape[0])
        if self.cfg.engine is Engine.DENSE:
            return self._dense(program, x, y_ones, weights)
        if self.cfg.engine is Engine.RELATIONAL:
            return self._relational(program, x, y_ones, weights)
        return self._plan(program, x, y_ones, weights)

    def _update(self, w: DenseMatrix, g: DenseMatrix) -> DenseMatrix:
        return w - self.cfg.learning_rate * g

    def _dense(self, program, x, y_ones, weights):
        bindings = {"x": x, "y_ones": y_ones, **weights}
        values = denseengine.evaluate(program.graph, bindings, gradient_nodes(program), self.stats)
        new = {name: self._update(weights[name], values[node_id]) for name, node_id in program.grads.items()}
        return new, values[program.backward_vars["l_ho"]]

    def _relational(self, program, x, y_ones, weights):
        bindings = {name: relengine.from_dense(v) for name, v in {"x": x, "y_ones": y_ones, **weights}.items()}
        values = relengine.evaluate(program.graph, bindings, gradient_nodes(program), self.stats)
        rate = self.cfg.learning_rate
        new = {
            name: relengine.to_dense(relengine.combine(
                bindings[name], values[node_id], lambda w, d: w - rate * d, self.stats, "Update",
            ))
            for name, node_id in program.grads.items()
        }
        return new, values[program.backward_vars["l_ho"]].values()

    def _plan(self, program, x, y_ones, weights):
        plan = planner.lower(program, iterations=1)
        catalog = {
            "img": relengine.from_dense(x),
            "one_hot": relengine.from_dense(y_ones),
            **{name: relengine.from_dense(w) for name, w in weights.items()},
        }
        result = planner.interpret(plan, catalog, self.stats, track_loss=True)
        new = {name: relengine.to_dense(m) for name, m in result.tables.items()}
        l_ho = result.losses  # mean abs already taken
        return new, l_ho


def train_mlp(features: DenseMatrix, labels: Sequence[int], cfg: TrainConfig,
              num_classes: Optional[int] = None, stats: Optional[TupleStats] = None) -> TrainResult:
    """Train the sigmoid network by gradient descent

    One iteration is one epoch: a pass over all consecutive chunks of
    batch_size rows, with one update per chunk. The recorded loss is
    mean(abs(l_ho)) over every row of the epoch.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = [int(label) for label in labels]
    if features.ndim != 2 or features.shape[0] == 0:
        raise DataError("Empty dataset")
    if features.shape[0] != len(labels):
        raise DataError(f"{features.shape[0]} feature rows for {len(labels)} labels")
    num_classes = num_classes or max(labels) + 1
    y_ones = one_hot_dense(labels, num_classes)

    rows, input_dim = features.shape
    chunks = _chunks(rows, cfg.batch_size)
    weights = init_weights(input_dim, cfg.hidden_dim, num_classes, cfg.seed)
    if stats is not None:
        stats.observe([features.size, y_ones.size, *(w.size for w in weights.values())])

    runner = _StepRunner(cfg, input_dim, num_classes, stats)
    losses: List[float] = []
    accuracies: List[float] = []
    started = time.perf_counter()

    for iteration in range(cfg.iterations):
        epoch_l_ho = []
        for start, stop in chunks:
            weights, l_ho = runner.step(features[start:stop], y_ones[start:stop], weights)
            epoch_l_ho.append(l_ho)
        if cfg.engine is Engine.PLAN:
            losses.append(_plan_epoch_loss(epoch_l_ho, chunks))
        else:
            losses.append(planner.mean_abs(np.concatenate([np.ravel(v) for v in epoch_l_ho])))
        if cfg.track_accuracy:
            accuracies.append(accuracy(infer_mlp(features, weights), labels))
        if (iteration + 1) % LOG_EVERY == 0 or iteration + 1 == cfg.iterations:
            logger.info(f"Iteration {iteration + 1}/{cfg.iterations}: loss {losses[-1]:.6f}")

    return TrainResult(
        w_xh=weights["w_xh"],
        w_ho=weights["w_ho"],
        losses=losses,
        accuracies=accuracies,
        stats=stats,
        wall_time_ms=(time.perf_counter() - started) * 1000.0,
        config=cfg,
    )


def _plan_epoch_loss(chunk_losses: List[List[float]], chunks: List[Tuple[int, int]]) -> float:
    # the interpreter reports one mean per chunk; weight them by chunk rows
    if len(chunks) == 1:
        return chunk_losses[0][0]
    total = sum(loss[0] * (stop - start) for loss, (start, stop) in zip(chunk_losses, chunks))
    return total / chunks[-1][1]


def infer_mlp(features: DenseMatrix, weights: Dict[str, DenseMatrix]) -> DenseMatrix:
    """Class probabilities sig(sig(x*w_xh)*w_ho)"""
    features = np.asarray(features, dtype=np.float64)
    w_xh = np.asarray(weights["w_xh"], dtype=np.float64)
    w_ho = np.asarray(weights["w_ho"], dtype=np.float64)
    if features.ndim != 2 or w_xh.ndim != 2 or w_ho.ndim != 2:
        raise ShapeError("Features and weights must be matrices")
    if features.shape[1] != w_xh.shape[0] or w_xh.shape[1] != w_ho.shape[0]:
        raise ShapeError(
            f"Cannot apply weights {w_xh.shape} and {w_ho.shape} to features {features.shape}"
        )
    program = build_mlp_loss(features.shape[1], w_xh.shape[1], w_ho.shape[1], features.shape[0])
    a_ho = program.forward_vars["a_ho"]
    values = denseengine.evaluate(
        program.graph, {"x": features, "w_xh": w_xh, "w_ho": w_ho}, targets=[a_ho]
    )
    return values[a_ho]


def accuracy(probabilities: DenseMatrix, labels: Sequence[int]) -> float:
    """Share of rows whose highest probability sits at the label; ties go to the lowest index"""
    if len(labels) == 0:
        return 0.0
    predicted = denseengine.argmax_row(np.asarray(probabilities))
    if len(predicted) != len(labels):
        raise ShapeError(f"{len(predicted)} probability rows for {len(labels)} labels")
    return sum(p - 1 == int(label) for p, label in zip(predicted, labels)) / len(labels)


def save_checkpoint(result: TrainResult, directory: Path, seed: Optional[int] = None) -> Path:
    """Write w_xh.csv, w_ho.csv and checkpoint.json into directory"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, matrix in result.weights.items():
        denseengine.dump_csv(matrix, directory / f"{name}.csv")
    cfg = result.config
    meta = {
        "input_dim": int(result.w_xh.shape[0]),
        "hidden_dim": int(result.w_xh.shape[1]),
        "output_dim": int(result.w_ho.shape[1]),
        "seed": seed if seed is not None else (cfg.seed if cfg else None),
        "iterations": cfg.iterations if cfg else len(result.losses),
        "learning_rate": cfg.learning_rate if cfg else None,
    }
    path = directory / "checkpoint.json"
    path.write_text(json.dumps(meta, indent=2) + "\n")
    logger.info(f"Checkpoint written to {directory}")
    return path


def load_checkpoint(directory: Path) -> Tuple[Dict[str, DenseMatrix], dict]:
    directory = Path(directory)
    meta_path = directory / "checkpoint.json"
    if not meta_path.exists():
        raise DataError(f"No checkpoint in {directory}")
    meta = json.loads(meta_path.read_text())
    weights = {}
    for name in ("w_xh", "w_ho"):
        path = directory / f"{name}.csv"
        if not path.exists():
            raise DataError(f"Checkpoint is missing {path.name}")
        weights[name] = denseengine.load_csv(path)
    expected = {
        "w_xh": (meta["input_dim"], meta["hidden_dim"]),
        "w_ho": (meta["hidden_dim"], meta["output_dim"]),
    }
    for name, shape in expected.items():
        if weights[name].shape != shape:
            raise DataError(f"{name}.csv holds {weights[name].shape}, checkpoint declares {shape}")
    return weights, meta
