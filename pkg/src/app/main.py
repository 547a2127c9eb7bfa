"""
RelGrad - FastAPI application for in-database training artifacts
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Literal, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .core.config import API_DATA_DIR, DATABASE_URL, DEFAULT_LEARNING_RATE, iris_path
from .core.errors import DataError, RelGradError
from .models.plan import SqlDialect
from .services import planner
from .services.autodiff import mlp_program
from .services.dataset_service import IRIS_ATTRIBUTES, IRIS_LABEL, load_csv
from .services.memory_service import mem_report
from .services.sql_renderer import render_artifacts
from .services.trainer import TrainConfig, accuracy, infer_mlp, train_mlp

logger = logging.getLogger(__name__)

VERSION = "1.0.0"

ARTIFACT_FILES = {
    "transform": "transform.sql",
    "weights": "weights.sql",
    "training": "training.sql",
    "inference": "inference.sql",
    "linreg": "linreg.sql",
    "array_transform": "array_transform.sql",
}


class SqlRequest(BaseModel):
    artifact: Literal["transform", "weights", "training", "inference", "linreg", "array_transform"]
    dialect: SqlDialect = SqlDialect.SQL92
    rows: int = Field(150, ge=1)
    input_dim: int = Field(4, ge=1)
    hidden_dim: int = Field(20, ge=1)
    output_dim: int = Field(3, ge=1)
    iterations: int = Field(20, ge=0)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0)


class TrainRequest(TrainConfig):
    data_path: Optional[str] = None
    data_schema: str = "iris"
    scale: Optional[float] = Field(None, gt=0)


# Initialize FastAPI app
app = FastAPI(
    title="RelGrad API",
    description="Gradient programs, relational plans and SQL for neural network training",
    version=VERSION,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000", "http://127.0.0.1:3000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/", response_model=Dict[str, str])
async def root():
    """Root endpoint with API information"""
    return {
        "message": "RelGrad API",
        "version": VERSION,
        "status": "running",
        "docs": "/docs",
    }


@app.get("/health")
async def health_check():
    """Health check endpoint for monitoring"""
    return {
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "version": VERSION,
        "services": {
            "api": "healthy",
            "database": "configured" if DATABASE_URL else "not configured",
        },
    }


@app.get("/api/v1/mem-report")
async def memory_report(
    n: int = Query(150, ge=1, description="Rows"),
    m: int = Query(4, ge=1, description="Attributes"),
    h: int = Query(20, ge=1, description="Hidden units"),
    l: int = Query(3, ge=1, description="Classes"),
):
    """Materialized entries and bytes per training variable"""
    report = mem_report(n, m, h, l)
    return {
        "dims": {"n": n, "m": m, "h": h, "l": l},
        "variables": [
            {"variable": r.variable, "rows": r.rows, "cols": r.cols, "entries": r.entries,
             "dense_bytes": r.dense_bytes, "relational_bytes": r.relational_bytes}
            for r in report.rows
        ],
        "training_entries": report.training_entries,
        "inference_entries": report.inference_entries,
    }


@app.post("/api/v1/sql")
async def emit_sql(request: SqlRequest):
    """Render one SQL artifact"""
    try:
        program = mlp_program(request.input_dim, request.hidden_dim, request.output_dim,
                              request.rows, request.learning_rate)
        attributes = IRIS_ATTRIBUTES if request.input_dim == len(IRIS_ATTRIBUTES) else tuple(
            f"a{k}" for k in range(1, request.input_dim + 1)
        )
        artifacts = render_artifacts(program, request.dialect, request.iterations,
                                     attributes, IRIS_LABEL, request.output_dim)
        name = ARTIFACT_FILES[request.artifact]
        if name not in artifacts:
            raise HTTPException(status_code=400, detail=f"{request.artifact} needs the array dialect")
        return {"artifact": request.artifact, "dialect": request.dialect.value, "sql": artifacts[name]}
    except HTTPException:
        raise
    except RelGradError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Failed to render SQL: {e}")
        raise HTTPException(status_code=500, detail=f"Failed to render SQL: {str(e)}")


def resolve_data_path(data_path: Optional[str]) -> Path:
    """Data file for the API; relative paths are taken from API_DATA_DIR, nothing outside it is read"""
    if not data_path:
        return iris_path()
    root = API_DATA_DIR.resolve()
    path = (root / data_path).resolve()
    if not path.is_relative_to(root):
        raise HTTPException(status_code=400, detail="data_path must lie inside the data directory")
    return path


@app.post("/api/v1/train")
def train(request: TrainRequest):
    """Train on the bundled Iris data or a CSV file from the data directory"""
    path = resolve_data_path(request.data_path)
    try:
        ds = load_csv(path, request.data_schema, request.scale)
    except DataError as e:
        logger.warning(f"Rejected data file {path}: {e}")
        raise HTTPException(status_code=400, detail=f"Invalid data file: {request.data_path or path.name}")
    try:
        cfg = TrainConfig(**request.model_dump(include=set(TrainConfig.model_fields)))
        result = train_mlp(ds.features, ds.labels, cfg, num_classes=ds.num_classes)
        return {
            "dataset": ds.name,
            "iterations": cfg.iterations,
            "losses": result.losses,
            "accuracies": result.accuracies,
            "accuracy": accuracy(infer_mlp(ds.features, result.weights), ds.labels),
            "wall_time_ms": result.wall_time_ms,
        }
    except RelGradError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Failed to train: {e}")
        raise HTTPException(status_code=500, detail=f"Failed to train: {str(e)}")


@app.get("/api/v1/plan/pipelines")
async def plan_pipelines(
    n: int = Query(150, ge=1),
    m: int = Query(4, ge=1),
    h: int = Query(20, ge=1),
    l: int = Query(3, ge=1),
):
    """Pipeline report of the inference model plan"""
    try:
        program = mlp_program(m, h, l, n)
        return planner.analyze_pipelines(planner.lower_model(program)).as_dict()
    except RelGradError as e:
        raise HTTPException(status_code=400, detail=str(e))


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
