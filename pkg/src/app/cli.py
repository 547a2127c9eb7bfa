"""
Command-line interface for RelGrad

Non-interactive; every run is fully described by its flags. Exit codes:
0 success, 1 usage error, 2 data error, 3 budget exceeded, 4 conformance
failure.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, TypeVar

from pydantic import ValidationError

from .core.config import (
    DEFAULT_LEARNING_RATE, DEFAULT_SEED, ENTRY_BUDGET, LOG_LEVEL, OUT_DIR, configure_logging, iris_path,
)
from .core.errors import BudgetExceeded, ConformanceError, RelGradError
from .models.plan import SqlDialect
from .services import relengine
from .services.autodiff import mlp_program
from .services.bench_service import STATUS_SKIPPED, BenchSweep, bench, estimate_peak_entries, write_bench_csv
from .services.conformance_service import SqlAlchemyExecutor, conformance
from .services.dataset_service import Dataset, encode, load_csv, replicate, synthetic_pixels
from .services.memory_service import mem_report
from .services.sql_renderer import render_artifacts
from .services.trainer import (
    Engine, TrainConfig, accuracy, infer_mlp, init_weights, load_checkpoint, save_checkpoint, train_mlp,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

EXIT_OK = 0
EXIT_USAGE = 1


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse reports usage errors with exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_batch(value: str):
    if value == "full":
        return value
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"Batch size must be an integer or 'full', got {value!r}") from None


def parse_list(value: str, convert: Callable[[str], T]) -> List[T]:
    """comma-separated list, e.g. '1,4,16'"""
    try:
        return [convert(item.strip()) for item in str(value).split(",") if item.strip()]
    except ValueError:
        raise UsageError(f"Cannot parse list {value!r}") from None


def single(value: str, convert: Callable[[str], T], flag: str) -> T:
    items = parse_list(value, convert)
    if len(items) != 1:
        raise UsageError(f"{flag} takes a single value for this command")
    return items[0]


def build_parser() -> argparse.ArgumentParser:
    shared = ArgumentParser(add_help=False)
    shared.add_argument("--data", type=Path, help="CSV file (default: bundled iris.csv)")
    shared.add_argument("--dataset", choices=["csv", "synthetic-pixels"], default="csv")
    shared.add_argument("--rows", type=int, default=1000, help="rows of synthetic pixel data")
    shared.add_argument("--schema", default="iris", help="iris or generic:<labelcol>")
    shared.add_argument("--scale", type=float, default=None, help="feature divisor")
    shared.add_argument("--hidden", default="20")
    shared.add_argument("--iters", type=int, default=10)
    shared.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    shared.add_argument("--batch", default="full")
    shared.add_argument("--seed", type=int, default=DEFAULT_SEED)
    shared.add_argument("--engine", default="dense")
    shared.add_argument("--dialect", choices=[d.value for d in SqlDialect], default="sql92")
    shared.add_argument("--out", type=Path, default=OUT_DIR)
    shared.add_argument("--replicate", default="1")
    shared.add_argument("--jobs", type=int, default=1)
    shared.add_argument("--entry-budget", type=int, default=ENTRY_BUDGET)
    shared.add_argument("--log-level", default=None)

    parser = ArgumentParser(prog="relgrad", description="Gradient descent as relational plans and SQL")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    commands.add_parser("encode", parents=[shared], help="write img.csv and one_hot.csv")
    commands.add_parser("emit-sql", parents=[shared], help="render the SQL artifacts")
    commands.add_parser("train", parents=[shared], help="train and write a checkpoint")
    infer = commands.add_parser("infer", parents=[shared], help="accuracy of a checkpoint")
    infer.add_argument("--checkpoint", type=Path, default=None, help="checkpoint directory (default: --out)")
    commands.add_parser("bench", parents=[shared], help="benchmark sweep, writes bench.csv")
    commands.add_parser("mem-report", parents=[shared], help="materialized entries per variable")
    conf = commands.add_parser("conformance", parents=[shared], help="check SQL against an executor")
    conf.add_argument("--adapter", choices=["reference", "sqlalchemy"], default="reference")
    conf.add_argument("--sql-dir", type=Path, default=None, help="read training.sql/inference.sql from here")
    return parser


def load_dataset(args, replication: int = 1) -> Dataset:
    if args.dataset == "synthetic-pixels":
        ds = synthetic_pixels(args.rows, args.seed, args.scale or 255.0)
    else:
        ds = load_csv(args.data or iris_path(), args.schema, args.scale)
    return replicate(ds, replication)


def _write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(content)


def cmd_encode(args) -> int:
    ds = load_dataset(args, single(args.replicate, int, "--replicate"))
    img, one_hot = encode(ds, args.out)
    print(f"img: {len(img)} entries, one_hot: {len(one_hot)} entries -> {args.out}")
    return EXIT_OK


def cmd_emit_sql(args) -> int:
    ds = load_dataset(args, single(args.replicate, int, "--replicate"))
    hidden = single(args.hidden, int, "--hidden")
    program = mlp_program(ds.num_attributes, hidden, ds.num_classes, ds.rows, args.lr)
    csv_path = None
    if args.dataset == "csv":
        csv_path = str((args.data or iris_path()).resolve())
    artifacts = render_artifacts(program, SqlDialect(args.dialect), args.iters, ds.attributes,
                                 ds.label_name, ds.num_classes, csv_path=csv_path, scale=ds.scale)
    for name, sql in artifacts.items():
        _write(args.out / name, sql)
        print(args.out / name)
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        iterations=args.iters,
        hidden_dim=single(args.hidden, int, "--hidden"),
        batch_size=parse_batch(args.batch),
        seed=args.seed,
        engine=Engine(args.engine),
    )


def cmd_train(args) -> int:
    ds = load_dataset(args, single(args.replicate, int, "--replicate"))
    cfg = _train_config(args)
    batch_rows = ds.rows if cfg.batch_size == "full" else cfg.batch_size
    estimate = estimate_peak_entries(ds.rows, ds.num_attributes, cfg.hidden_dim, ds.num_classes, batch_rows)
    if estimate > args.entry_budget:
        raise BudgetExceeded(f"Training needs about {estimate} entries, budget is {args.entry_budget}")

    result = train_mlp(ds.features, ds.labels, cfg, num_classes=ds.num_classes)
    for iteration, loss in enumerate(result.losses, start=1):
        print(f"{iteration}\t{loss:.12g}")
    print(f"accuracy\t{accuracy(infer_mlp(ds.features, result.weights), ds.labels):.6f}")
    save_checkpoint(result, args.out)
    return EXIT_OK


def cmd_infer(args) -> int:
    ds = load_dataset(args, single(args.replicate, int, "--replicate"))
    weights, _ = load_checkpoint(args.checkpoint or args.out)
    probabilities = infer_mlp(ds.features, weights)
    acc = accuracy(probabilities, ds.labels)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "predictions.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["row", "predicted", "label"])
        for row, (p, label) in enumerate(zip(probabilities.argmax(axis=1), ds.labels), start=1):
            writer.writerow([row, int(p), label])
    print(f"accuracy\t{acc:.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    ds = load_dataset(args)
    sweep = BenchSweep(
        hidden_dims=parse_list(args.hidden, int),
        batch_sizes=parse_list(args.batch, parse_batch),
        replications=parse_list(args.replicate, int),
        engines=parse_list(args.engine, Engine),
        iterations=args.iters,
        learning_rate=args.lr,
        seed=args.seed,
        entry_budget=args.entry_budget,
        jobs=args.jobs,
    )
    records = bench(ds, sweep)
    args.out.mkdir(parents=True, exist_ok=True)
    write_bench_csv(records, args.out / "bench.csv")
    for record in records:
        print(",".join(str(v) for v in record.csv_row()))
    if records and all(r.status == STATUS_SKIPPED for r in records):
        raise BudgetExceeded(f"Every cell exceeded the entry budget of {args.entry_budget}")
    return EXIT_OK


def cmd_mem_report(args) -> int:
    ds = load_dataset(args, single(args.replicate, int, "--replicate"))
    report = mem_report(ds.rows, ds.num_attributes, single(args.hidden, int, "--hidden"), ds.num_classes)
    print(report.format_table(), end="")
    args.out.mkdir(parents=True, exist_ok=True)
    report.write_csv(args.out / "mem_report.csv")
    return EXIT_OK


def cmd_conformance(args) -> int:
    ds = load_dataset(args, single(args.replicate, int, "--replicate"))
    hidden = single(args.hidden, int, "--hidden")
    img, one_hot = encode(ds)
    weights = init_weights(ds.num_attributes, hidden, ds.num_classes, args.seed)
    catalog = {"img": img, "one_hot": one_hot, **{k: relengine.from_dense(w) for k, w in weights.items()}}

    sql = None
    if args.sql_dir is not None:
        sql = {}
        for name in ("training", "inference"):
            path = args.sql_dir / f"{name}.sql"
            if not path.exists():
                raise ConformanceError(f"Missing {path}")
            sql[name] = path.read_text(encoding="utf-8")
    executor = SqlAlchemyExecutor() if args.adapter == "sqlalchemy" else None

    report = conformance(catalog, ds.num_attributes, hidden, ds.num_classes, args.iters, args.lr,
                         executor=executor, dialect=SqlDialect(args.dialect), sql=sql)
    print(report.format(), end="")
    if not report.passed:
        raise ConformanceError("Emitted SQL disagrees with the interpreter")
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "emit-sql": cmd_emit_sql,
    "train": cmd_train,
    "infer": cmd_infer,
    "bench": cmd_bench,
    "mem-report": cmd_mem_report,
    "conformance": cmd_conformance,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or LOG_LEVEL)
    try:
        return COMMANDS[args.command](args)
    except RelGradError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (UsageError, ValidationError, ValueError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
