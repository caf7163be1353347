"""Command-line interface for gbmap

Commands read CSV files, fit or load a model and write CSV/JSON results.
Exit codes: 0 success, 2 invalid arguments, 3 data or model-file errors,
4 numeric failures. Error messages and logs go to standard error.
"""

import functools
import json
import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import typer
from typer._click.types import FloatRange
from pydantic import ValidationError

from gbmap import __version__
from gbmap.boosting import FitConfig, fit
from gbmap.config import (
    DEFAULT_BETA,
    DEFAULT_LAMBDA,
    DEFAULT_M,
    DEFAULT_MAXITER,
    DEFAULT_SEED,
    DRIFT_K,
    DRIFT_QUANTILE,
    KNN_K,
    LOG_LEVEL,
    PATH_GRID,
    SYNTH_ALPHA,
)
from gbmap.data import (
    Dataset,
    apply_preprocess,
    gen_cluster_vis,
    gen_drift_fixture,
    gen_synth_cos,
    load_csv,
    preprocess,
    write_csv,
)
from gbmap.drift import run_drift_experiment
from gbmap.ensemble import GbmapModel
from gbmap.errors import DataError, InvalidArgumentError, InvalidStateError, NumericError
from gbmap.evaluation import (
    SearchSpace,
    cluster_visualization,
    r_squared,
    random_search,
    run_benchmark,
    score_model,
)
from gbmap.fileio import atomic_write_text
from gbmap.logging_config import setup_logging
from gbmap.models import LossKind, TaskKind
from gbmap.objective import empirical_loss
from gbmap.optimizer import OptimizerConfig
from gbmap.persistence import load_model, save_model

logger = logging.getLogger(__name__)

EXIT_ARGUMENT = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

app = typer.Typer(
    help="Gradient boosting mapping: supervised embeddings, distances and drift detection",
    no_args_is_help=True,
    add_completion=False,
)


class TaskOption(str, Enum):
    AUTO = "auto"
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class SynthKind(str, Enum):
    COS = "cos"
    CLUSTER = "cluster"
    DRIFT = "drift"


def _fail(error: Exception, code: int):
    logger.debug("Command failed", exc_info=error)
    typer.echo(f"error: {error}", err=True)
    raise typer.Exit(code)


def handle_errors(command):
    """Map gbmap exceptions onto the exit-code scheme"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (InvalidArgumentError, ValidationError) as e:
            _fail(e, EXIT_ARGUMENT)
        except DataError as e:
            _fail(e, EXIT_DATA)
        except (NumericError, InvalidStateError, FloatingPointError) as e:
            _fail(e, EXIT_NUMERIC)

    return wrapper


@app.callback()
def configure(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level"),
):
    setup_logging(logging.DEBUG if verbose else LOG_LEVEL)


def _task(option: TaskOption) -> Optional[TaskKind]:
    return None if option is TaskOption.AUTO else TaskKind(option.value)


def _fit_config(
    task: TaskKind, m: int, beta: float, ridge: float, maxiter: int, seed: int
) -> FitConfig:
    return FitConfig(
        m=m,
        beta=beta,
        ridge=ridge,
        seed=seed,
        task=task,
        optimizer=OptimizerConfig(max_iterations=maxiter),
    )


def _load_inputs(model: GbmapModel, path: Path) -> np.ndarray:
    """Read unlabelled rows and preprocess them with the model's statistics"""
    stats = model.preprocessing
    if stats is None:
        raw = load_csv(path, None)
        if raw.p != model.p:
            raise DataError(f"expected {model.p} columns, got {raw.p}")
        return raw.x
    raw = load_csv(path, None, categorical_columns=list(stats.category_maps))
    return apply_preprocess(stats, raw).x


def _emit(columns: dict, out: Optional[Path]) -> None:
    text = pd.DataFrame(columns).to_csv(index=False)
    if out is None:
        typer.echo(text, nl=False)
    else:
        atomic_write_text(out, text)
        logger.info("Wrote output", extra={"path": str(out)})


def _data_option():
    return typer.Option(..., "--data", exists=True, dir_okay=False, help="Input CSV file")


def _model_option():
    return typer.Option(..., "--model", exists=True, dir_okay=False, help="Model file")


@app.command("fit")
@handle_errors
def fit_command(
    data: Path = _data_option(),
    target: str = typer.Option(..., "--target", help="Target column"),
    task: TaskOption = typer.Option(TaskOption.AUTO, "--task", case_sensitive=False),
    categorical: Optional[List[str]] = typer.Option(
        None, "--categorical", help="Categorical column (repeatable)"
    ),
    m: int = typer.Option(DEFAULT_M, "--m", min=1, help="Boosting stages"),
    beta: float = typer.Option(DEFAULT_BETA, "--beta", help="Softplus sharpness"),
    ridge: float = typer.Option(DEFAULT_LAMBDA, "--lambda", min=0.0, help="Ridge weight"),
    maxiter: int = typer.Option(DEFAULT_MAXITER, "--maxiter", min=1),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", min=0),
    out_model: Path = typer.Option(..., "--out-model", dir_okay=False),
):
    """Fit a model on a CSV file and save it."""
    raw = load_csv(data, target, categorical or [], _task(task))
    inferred = " (inferred)" if raw.metadata.get("task_inferred") else ""
    typer.echo(f"task: {raw.task.value}{inferred}")

    train, stats = preprocess(raw)
    config = _fit_config(raw.task, m, beta, ridge, maxiter, seed)
    model = fit(train, config, preprocessing=stats)
    for stage, loss in enumerate(model.loss_history):
        typer.echo(f"stage {stage}: loss {loss:.6g}")

    if model.task is TaskKind.REGRESSION:
        predictions = model.predict(train.x)
        typer.echo(f"train mse: {empirical_loss(LossKind.QUADRATIC, train.y, predictions):.6g}")
        if np.ptp(train.y) > 0:
            typer.echo(f"train r2: {r_squared(train.y, predictions):.6g}")
    else:
        typer.echo(f"train accuracy: {score_model(model, train):.6g}")

    save_model(model, out_model, config)
    typer.echo(f"model written to {out_model}")


@app.command("predict")
@handle_errors
def predict_command(
    model: Path = _model_option(),
    data: Path = _data_option(),
    out: Optional[Path] = typer.Option(None, "--out", dir_okay=False, help="Output CSV"),
):
    """Predict f(x) for each row; classification adds probability and class."""
    fitted = load_model(model)
    x = _load_inputs(fitted, data)
    columns = {"prediction": fitted.predict(x)}
    if fitted.task is TaskKind.CLASSIFICATION:
        columns["probability"] = fitted.predict_proba(x)
        columns["class"] = fitted.predict_class(x).astype(int)
    _emit(columns, out)


@app.command("embed")
@handle_errors
def embed_command(
    model: Path = _model_option(),
    data: Path = _data_option(),
    out: Optional[Path] = typer.Option(None, "--out", dir_okay=False),
):
    """Write the m embedding coordinates of each row."""
    fitted = load_model(model)
    emb = fitted.embed(_load_inputs(fitted, data))
    _emit({f"f{j + 1}": emb[:, j] for j in range(fitted.m)}, out)


def _parse_pair(text: str, n: int) -> tuple[int, int]:
    try:
        i, j = (int(part) for part in text.split(","))
    except ValueError:
        raise typer.BadParameter(f"expected a pair 'i,j', got {text!r}", param_hint="--pair")
    if not (0 <= i < n and 0 <= j < n):
        raise typer.BadParameter(f"pair {text} out of range for {n} rows", param_hint="--pair")
    return i, j


@app.command("distance")
@handle_errors
def distance_command(
    model: Path = _model_option(),
    data: Path = _data_option(),
    pair: List[str] = typer.Option(..., "--pair", help="0-based row pair 'i,j' (repeatable)"),
    grid: int = typer.Option(PATH_GRID, "--grid", min=2, help="Path-distance quadrature cells"),
    out: Optional[Path] = typer.Option(None, "--out", dir_okay=False),
):
    """Embedding and path distances between listed row pairs."""
    fitted = load_model(model)
    x = _load_inputs(fitted, data)
    pairs = [_parse_pair(text, x.shape[0]) for text in pair]
    _emit(
        {
            "i": [i for i, _ in pairs],
            "j": [j for _, j in pairs],
            "embedding_distance": [fitted.embedding_distance(x[i], x[j]) for i, j in pairs],
            "path_distance": [fitted.path_distance(x[i], x[j], grid) for i, j in pairs],
        },
        out,
    )


@app.command("explain")
@handle_errors
def explain_command(
    model: Path = _model_option(),
    data: Path = _data_option(),
    out: Optional[Path] = typer.Option(None, "--out", dir_okay=False),
):
    """Local linear coefficients (the gradient of f) for each row."""
    fitted = load_model(model)
    coefficients = fitted.local_coefficients(_load_inputs(fitted, data))
    names = fitted.feature_names
    _emit({name: coefficients[:, j] for j, name in enumerate(names)}, out)


@app.command("drift")
@handle_errors
def drift_command(
    data: Path = _data_option(),
    target: str = typer.Option(..., "--target"),
    task: TaskOption = typer.Option(TaskOption.AUTO, "--task", case_sensitive=False),
    categorical: Optional[List[str]] = typer.Option(None, "--categorical"),
    feature: Optional[str] = typer.Option(
        None, "--feature", help="Split along this covariate instead of searching all"
    ),
    k: int = typer.Option(DRIFT_K, "--k", min=1, help="Neighbours used by the drifters"),
    quantile: float = typer.Option(
        DRIFT_QUANTILE,
        "--quantile",
        click_type=FloatRange(0.0, 1.0, min_open=True, max_open=True),
    ),
    m: int = typer.Option(DEFAULT_M, "--m", min=1),
    beta: float = typer.Option(DEFAULT_BETA, "--beta"),
    ridge: float = typer.Option(DEFAULT_LAMBDA, "--lambda", min=0.0),
    maxiter: int = typer.Option(DEFAULT_MAXITER, "--maxiter", min=1),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", min=0),
    out_report: Path = typer.Option(..., "--out-report", dir_okay=False, help="Report JSON"),
):
    """Build a drift split, score both drifters and write the reports.

    ROC points are written next to the report as <stem>_roc_gbmap.csv and
    <stem>_roc_euclid.csv.
    """
    raw = load_csv(data, target, categorical or [], _task(task))
    prepared, _ = preprocess(raw)
    config = _fit_config(raw.task, m, beta, ridge, maxiter, seed)
    experiment = run_drift_experiment(
        prepared, config, k=k, quantile=quantile, seed=seed, feature=feature
    )

    split = experiment.split
    payload = {
        "dropped_feature": split.dropped_feature,
        "drift_magnitude": split.drift_magnitude,
        "feature_magnitudes": split.feature_magnitudes,
        "sizes": {"a1": split.a1.n, "a2": split.a2.n, "b": split.b.n},
    }
    typer.echo(f"dropped feature: {split.dropped_feature}")
    typer.echo(f"drift magnitude: {split.drift_magnitude:.6g}")
    for report in (experiment.gbmap, experiment.euclid):
        payload[report.drifter] = report.model_dump(mode="json")
        roc_path = out_report.with_name(f"{out_report.stem}_roc_{report.drifter}.csv")
        _emit(
            {"fpr": [r.fpr for r in report.roc], "tpr": [r.tpr for r in report.roc]},
            roc_path,
        )
        auc = "undefined" if report.auc_undefined else f"{report.auc:.4f}"
        typer.echo(f"{report.drifter} auc: {auc}")

    atomic_write_text(out_report, json.dumps(payload, indent=2) + "\n")
    typer.echo(f"report written to {out_report}")


@app.command("synth")
@handle_errors
def synth_command(
    kind: SynthKind = typer.Option(SynthKind.COS, "--kind", case_sensitive=False),
    n: int = typer.Option(1000, "--n", min=1, help="Rows (cos and drift kinds)"),
    p: int = typer.Option(20, "--p", min=1, help="Covariates (cos kind)"),
    alpha: float = typer.Option(SYNTH_ALPHA, "--alpha", help="Target scale (cos kind)"),
    n_irrelevant: int = typer.Option(6, "--n-irrelevant", min=0, help="Noise columns (drift)"),
    task: TaskOption = typer.Option(TaskOption.REGRESSION, "--task", case_sensitive=False),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", min=0),
    out: Path = typer.Option(..., "--out", dir_okay=False),
):
    """Write a synthetic dataset as CSV with a JSON metadata sidecar."""
    if kind is SynthKind.COS:
        dataset = gen_synth_cos(n, p, alpha, seed, _task(task) or TaskKind.REGRESSION)
    elif kind is SynthKind.CLUSTER:
        dataset = gen_cluster_vis(seed)
    else:
        dataset = gen_drift_fixture(n, n_irrelevant, seed)
    write_csv(dataset, out)
    typer.echo(f"wrote {dataset.n} rows to {out}")


def _downsample(data: Dataset, max_rows: Optional[int], seed: int) -> Dataset:
    if max_rows is None or data.n <= max_rows:
        return data
    rows = np.sort(np.random.default_rng(seed).choice(data.n, size=max_rows, replace=False))
    return data.subset(rows)


@app.command("benchmark")
@handle_errors
def benchmark_command(
    data: Path = _data_option(),
    target: str = typer.Option(..., "--target"),
    task: TaskOption = typer.Option(TaskOption.AUTO, "--task", case_sensitive=False),
    categorical: Optional[List[str]] = typer.Option(None, "--categorical"),
    m: int = typer.Option(DEFAULT_M, "--m", min=1),
    beta: float = typer.Option(DEFAULT_BETA, "--beta"),
    ridge: float = typer.Option(DEFAULT_LAMBDA, "--lambda", min=0.0),
    maxiter: int = typer.Option(DEFAULT_MAXITER, "--maxiter", min=1),
    seed: int = typer.Option(DEFAULT_SEED, "--seed", min=0),
    repeats: int = typer.Option(5, "--repeats", min=1, help="Random 50/50 splits"),
    k: int = typer.Option(KNN_K, "--k", min=1, help="Neighbours for the kNN columns"),
    tune: bool = typer.Option(False, "--tune/--no-tune", help="Random search before the run"),
    budget: Optional[int] = typer.Option(None, "--budget", min=1, help="Search iterations"),
    folds: int = typer.Option(5, "--folds", min=2, help="CV folds used while tuning"),
    knn_space: bool = typer.Option(False, "--knn-space", help="Use the kNN search preset"),
    max_rows: Optional[int] = typer.Option(None, "--max-rows", min=2, help="Tuning sample"),
    out: Optional[Path] = typer.Option(None, "--out", dir_okay=False, help="Result CSV"),
):
    """Compare GBMAP with linear and kNN baselines on repeated 50/50 splits.

    With --tune the configuration is first chosen by random search scored
    with k-fold cross-validation on at most --max-rows rows; the comparison
    itself always uses held-out halves.
    """
    raw = load_csv(data, target, categorical or [], _task(task))
    config = _fit_config(raw.task, m, beta, ridge, maxiter, seed)
    if tune:
        space = SearchSpace.for_knn() if knn_space else SearchSpace()
        result = random_search(
            _downsample(raw, max_rows, seed), space, budget, seed, folds, base=config
        )
        config = result.best_config
        typer.echo(
            f"tuned: m={config.m} beta={config.beta:.4g} lambda={config.ridge:.4g} "
            f"maxiter={config.optimizer.max_iterations} cv={result.best_score:.4f}"
        )

    rows = run_benchmark(raw, config, repeats=repeats, k=k, seed=seed)
    fields = ["gbmap", "linear", "knn", "knn_gbmap", "embedding_linear"]
    typer.echo("repeat metric " + " ".join(fields))
    for row in rows:
        scores = " ".join(f"{getattr(row, f):.4f}" for f in fields)
        typer.echo(f"{row.repeat} {row.metric} {scores}")
    means = " ".join(f"{np.mean([getattr(row, f) for row in rows]):.4f}" for f in fields)
    typer.echo(f"mean {rows[0].metric} {means}")
    if out is not None:
        keys = ["repeat", "metric", *fields]
        _emit({key: [getattr(row, key) for row in rows] for key in keys}, out)


@app.command("vis")
@handle_errors
def vis_command(
    seed: int = typer.Option(DEFAULT_SEED, "--seed", min=0),
    m: int = typer.Option(10, "--m", min=1),
    beta: float = typer.Option(DEFAULT_BETA, "--beta"),
    ridge: float = typer.Option(DEFAULT_LAMBDA, "--lambda", min=0.0),
    maxiter: int = typer.Option(DEFAULT_MAXITER, "--maxiter", min=1),
    out_dir: Path = typer.Option(Path("."), "--out-dir", file_okay=False),
):
    """PCA coordinates of the three-cluster data in embedding and original space."""
    config = _fit_config(TaskKind.REGRESSION, m, beta, ridge, maxiter, seed)
    vis = cluster_visualization(seed, config)
    labels = vis.labels.tolist()
    for name, coords in (("embedding", vis.embedding_coords), ("original", vis.original_coords)):
        path = out_dir / f"vis_{name}.csv"
        _emit({"pc1": coords[:, 0], "pc2": coords[:, 1], "cluster": labels}, path)
        typer.echo(f"wrote {len(labels)} rows to {path}")
    for name, distances in (
        ("embedding", vis.embedding_centroid_distances),
        ("original", vis.original_centroid_distances),
    ):
        pairs = " ".join(f"{key}={value:.3f}" for key, value in distances.items())
        typer.echo(f"{name} centroid distances: {pairs}")


@app.command("version")
def version_command():
    """Print the gbmap version."""
    typer.echo(__version__)


def main():
    app()
