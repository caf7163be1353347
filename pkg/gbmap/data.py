"""Dataset ingestion, preprocessing and synthetic generators

Datasets are dense covariate matrices with a target vector. Preprocessing
standardises numeric columns, one-hot encodes categorical columns and appends
an intercept column of ones as the last covariate.
"""

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from gbmap.config import RNG_ALGORITHM, SYNTH_ALPHA
from gbmap.errors import DataError, InvalidArgumentError
from gbmap.fileio import PathLike, atomic_write_text
from gbmap.models import TaskKind

logger = logging.getLogger(__name__)

INTERCEPT = "intercept"
TARGET = "y"


class Dataset(BaseModel):
    """Covariates with target vector and task kind"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray = Field(..., description="n x p covariate matrix")
    y: np.ndarray = Field(..., description="Targets; +-1 for classification")
    feature_names: tuple[str, ...]
    task: TaskKind
    has_intercept: bool = Field(False, description="Last column is a constant 1")
    categorical: dict[str, np.ndarray] = Field(
        default_factory=dict, description="Raw categorical columns awaiting one-hot encoding"
    )
    row_labels: Optional[np.ndarray] = Field(None, description="Optional per-row group labels")
    metadata: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.x.ndim != 2:
            raise ValueError("x must be a 2-D matrix")
        n, p = self.x.shape
        if self.y.shape != (n,):
            raise ValueError(f"y must have {n} entries, got shape {self.y.shape}")
        if len(self.feature_names) != p:
            raise ValueError(f"expected {p} feature names, got {len(self.feature_names)}")
        for name, column in self.categorical.items():
            if column.shape != (n,):
                raise ValueError(f"categorical column {name} must have {n} entries")
        if self.row_labels is not None and self.row_labels.shape != (n,):
            raise ValueError("row_labels must have one entry per row")
        return self

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        """Feature names without the intercept column"""
        if self.has_intercept:
            return self.feature_names[:-1]
        return self.feature_names

    def subset(self, rows: Sequence[int]) -> "Dataset":
        """Dataset restricted to the given row indices, in that order"""
        rows = np.asarray(rows, dtype=int)
        return self.model_copy(
            update={
                "x": self.x[rows],
                "y": self.y[rows],
                "categorical": {k: v[rows] for k, v in self.categorical.items()},
                "row_labels": None if self.row_labels is None else self.row_labels[rows],
            }
        )

    def drop_feature(self, name: str) -> "Dataset":
        """Dataset without the named numeric covariate"""
        if name not in self.covariate_names:
            raise InvalidArgumentError(f"unknown feature: {name}")
        keep = [i for i, f in enumerate(self.feature_names) if f != name]
        return self.model_copy(
            update={
                "x": self.x[:, keep],
                "feature_names": tuple(self.feature_names[i] for i in keep),
            }
        )


class PreprocessStats(BaseModel):
    """Training-set statistics applied unchanged to every later dataset"""

    numeric_columns: list[str]
    means: dict[str, float]
    stds: dict[str, float]
    dropped_columns: list[str] = Field(default_factory=list)
    category_maps: dict[str, list[str]] = Field(default_factory=dict)
    std_convention: Literal["population"] = "population"

    @property
    def output_names(self) -> list[str]:
        names = list(self.numeric_columns)
        for column, values in self.category_maps.items():
            names.extend(f"{column}={value}" for value in values)
        names.append(INTERCEPT)
        return names


def infer_task(y: np.ndarray) -> TaskKind:
    """Classification iff every target is -1 or +1"""
    if y.size and np.all(np.isin(y, (-1.0, 1.0))):
        return TaskKind.CLASSIFICATION
    return TaskKind.REGRESSION


def to_signed_labels(y: np.ndarray, column: str = TARGET) -> np.ndarray:
    """Map {0, 1} targets to {-1, +1}; accept {-1, +1} as is"""
    values = set(np.unique(y).tolist())
    if values <= {-1.0, 1.0}:
        return y.astype(float)
    if values <= {0.0, 1.0}:
        return 2.0 * y - 1.0
    raise DataError(
        f"classification targets must be in {{0, 1}} or {{-1, +1}}, got {sorted(values)[:5]}",
        column=column,
    )


def _parse_numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column].str.strip()
    # to_numeric only locates bad cells; values come from float() for exact round trips
    parsed = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(parsed)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        cell = raw.iloc[i]
        reason = "missing value" if cell == "" else f"non-numeric value {cell!r}"
        raise DataError(reason, row=i + 1, column=column)
    return raw.astype(float).to_numpy()


def load_csv(
    path: PathLike,
    target_column: Optional[str],
    categorical_columns: Iterable[str] = (),
    task: Optional[TaskKind] = None,
) -> Dataset:
    """Read a CSV file with a header row into a Dataset.

    Args:
        path: UTF-8 CSV file
        target_column: Name of the target column; None for unlabelled inputs,
            which get zero targets
        categorical_columns: Columns kept as strings for one-hot encoding
        task: Task kind; inferred from the targets when omitted

    Returns:
        Dataset without intercept column (apply_preprocess adds it)

    Raises:
        DataError: If the file cannot be parsed, a column is missing or a cell is
            missing/non-numeric (the message names row and column)
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {path}: {e}")

    if target_column is not None and target_column not in frame.columns:
        raise DataError("target column not found", column=target_column)
    categorical_columns = list(categorical_columns)
    for column in categorical_columns:
        if column not in frame.columns:
            raise DataError("categorical column not found", column=column)
    if frame.empty:
        raise DataError(f"no data rows in {path}")

    numeric_columns = [
        c for c in frame.columns if c != target_column and c not in categorical_columns
    ]
    x = np.column_stack(
        [_parse_numeric(frame, c) for c in numeric_columns]
    ) if numeric_columns else np.empty((len(frame), 0))

    categorical = {}
    for column in categorical_columns:
        values = frame[column].str.strip().to_numpy(dtype=object)
        empty = np.flatnonzero(values == "")
        if empty.size:
            raise DataError("missing value", row=int(empty[0]) + 1, column=column)
        categorical[column] = values

    if target_column is None:
        y = np.zeros(len(frame))
        task = task or TaskKind.REGRESSION
    else:
        y = _parse_numeric(frame, target_column)
    inferred = task is None
    task = infer_task(y) if inferred else TaskKind(task)
    if task is TaskKind.CLASSIFICATION:
        y = to_signed_labels(y, target_column)

    logger.info(
        "Loaded CSV",
        extra={"path": str(path), "rows": len(frame), "task": task.value, "inferred": inferred},
    )
    return Dataset(
        x=x,
        y=y,
        feature_names=tuple(numeric_columns),
        task=task,
        categorical=categorical,
        metadata={"source": str(path), "target": target_column, "task_inferred": inferred},
    )


def write_csv(data: Dataset, path: PathLike, sidecar: bool = True) -> Path:
    """Write covariates (intercept excluded) and target to CSV.

    With sidecar=True the dataset metadata is written next to it as
    <path>.json, e.g. the generator seed and parameters.
    """
    path = Path(path)
    columns = {}
    for i, name in enumerate(data.covariate_names):
        columns[name] = data.x[:, i]
    for name, values in data.categorical.items():
        columns[name] = values
    columns[TARGET] = data.y
    frame = pd.DataFrame(columns)
    atomic_write_text(path, frame.to_csv(index=False))

    if sidecar:
        meta = dict(data.metadata)
        meta.setdefault("task", data.task.value)
        atomic_write_text(
            path.with_suffix(path.suffix + ".json"), json.dumps(meta, indent=2, default=str)
        )
    logger.info("Wrote dataset", extra={"path": str(path), "rows": data.n})
    return path


def fit_preprocess(train: Dataset) -> PreprocessStats:
    """Fit standardisation and one-hot statistics on the training split.

    Zero-variance columns are dropped and recorded. Standard deviations use
    the population convention (divide by n).
    """
    names = train.covariate_names
    x = train.x[:, : len(names)]
    means = x.mean(axis=0) if train.n else np.zeros(len(names))
    stds = x.std(axis=0) if train.n else np.zeros(len(names))

    kept, dropped = [], []
    for name, std in zip(names, stds):
        (kept if std > 1e-12 else dropped).append(name)
    if dropped:
        logger.warning("Dropping zero-variance columns", extra={"columns": dropped})

    index = {name: i for i, name in enumerate(names)}
    stats = PreprocessStats(
        numeric_columns=kept,
        means={name: float(means[index[name]]) for name in kept},
        stds={name: float(stds[index[name]]) for name in kept},
        dropped_columns=dropped,
        category_maps={
            column: sorted(str(v) for v in np.unique(values))
            for column, values in train.categorical.items()
        },
    )
    logger.debug(
        "Fitted preprocessing",
        extra={"numeric": len(kept), "categorical": len(stats.category_maps)},
    )
    return stats


def apply_preprocess(stats: PreprocessStats, data: Dataset) -> Dataset:
    """Standardise, one-hot encode and append the intercept using fitted stats.

    Raises:
        DataError: If a fitted column is missing or a category was not seen
            during fitting
    """
    index = {name: i for i, name in enumerate(data.covariate_names)}
    blocks = []
    for name in stats.numeric_columns:
        if name not in index:
            raise DataError("column missing from input", column=name)
        blocks.append(((data.x[:, index[name]] - stats.means[name]) / stats.stds[name])[:, None])

    for column, categories in stats.category_maps.items():
        if column not in data.categorical:
            raise DataError("categorical column missing from input", column=column)
        values = np.asarray([str(v) for v in data.categorical[column]], dtype=object)
        lookup = {value: j for j, value in enumerate(categories)}
        onehot = np.zeros((data.n, len(categories)))
        for i, value in enumerate(values):
            if value not in lookup:
                raise DataError(f"unseen category {value!r}", row=i + 1, column=column)
            onehot[i, lookup[value]] = 1.0
        blocks.append(onehot)

    blocks.append(np.ones((data.n, 1)))
    return data.model_copy(
        update={
            "x": np.hstack(blocks),
            "feature_names": tuple(stats.output_names),
            "has_intercept": True,
            "categorical": {},
        }
    )


def preprocess(data: Dataset) -> tuple[Dataset, PreprocessStats]:
    """fit_preprocess followed by apply_preprocess on the same data"""
    stats = fit_preprocess(data)
    return apply_preprocess(stats, data), stats


def train_test_split(
    data: Dataset, test_fraction: float = 0.5, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Seeded random split; the test part has floor(n * test_fraction) rows"""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError("test_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(data.n)
    n_test = int(data.n * test_fraction)
    return data.subset(order[n_test:]), data.subset(order[:n_test])


def _with_intercept(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def gen_synth_cos(
    n: int,
    p: int,
    alpha: float = SYNTH_ALPHA,
    seed: int = 0,
    task: TaskKind = TaskKind.REGRESSION,
) -> Dataset:
    """Generate the synth-cos-r / synth-cos-c dataset.

    X ~ N(0, 1) i.i.d., y = alpha * cos(X) u for a random unit vector u,
    centred to zero mean. For classification, labels are sampled +-1 with
    P(+1) = sigmoid(centred y). An intercept column is appended.
    """
    if n < 1 or p < 1:
        raise InvalidArgumentError(f"n and p must be positive, got n={n}, p={p}")
    task = TaskKind(task)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    u = rng.standard_normal(p)
    u /= np.linalg.norm(u)

    y = alpha * np.cos(x) @ u
    offset = float(y.mean())
    y = y - offset
    if task is TaskKind.CLASSIFICATION:
        y = np.where(rng.random(n) < expit(y), 1.0, -1.0)

    return Dataset(
        x=_with_intercept(x),
        y=y,
        feature_names=tuple(f"x{j + 1}" for j in range(p)) + (INTERCEPT,),
        task=task,
        has_intercept=True,
        metadata={
            "generator": "synth-cos",
            "rng": RNG_ALGORITHM,
            "seed": seed,
            "n": n,
            "p": p,
            "alpha": alpha,
            "task": task.value,
            "u": u.tolist(),
            "y_offset": offset,
        },
    )


def gen_cluster_vis(seed: int = 0) -> Dataset:
    """Generate the 3-cluster visualisation dataset (3000 x 9, intercept last).

    Cluster a is shifted by +4 on dims 1-4 (relevant), b1 by +4 on dims 5-8
    (irrelevant), b2 is unshifted. y = cos(X) u with u supported on dims 1-4.
    """
    rng = np.random.default_rng(seed)
    size = 1000
    noise = rng.standard_normal((3 * size, 8))
    noise[:size, :4] += 4.0
    noise[size : 2 * size, 4:8] += 4.0
    x = _with_intercept(noise)

    u = np.zeros(9)
    u[:4] = rng.standard_normal(4)
    u /= np.linalg.norm(u)
    y = np.cos(x) @ u

    return Dataset(
        x=x,
        y=y,
        feature_names=tuple(f"x{j + 1}" for j in range(8)) + (INTERCEPT,),
        task=TaskKind.REGRESSION,
        has_intercept=True,
        row_labels=np.repeat(np.array(["a", "b1", "b2"], dtype=object), size),
        metadata={"generator": "cluster-vis", "rng": RNG_ALGORITHM, "seed": seed, "u": u.tolist()},
    )


def gen_drift_fixture(n: int = 2000, n_irrelevant: int = 6, seed: int = 0) -> Dataset:
    """Regression data whose drift split induces a concept drift.

    Two relevant covariates share a latent factor z. The target rises
    linearly in their sum s with slope 2 below s = 0 and bends upward with
    an added s^2 / 2 above it, so it is monotone with a slope of at least 2
    everywhere. A model trained on the low half of either covariate
    continues the linear trend into the high half and falls short there by
    a growing margin. The remaining covariates are independent noise the
    target ignores.
    """
    if n < 8:
        raise InvalidArgumentError("drift fixture needs n >= 8")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    relevant = z[:, None] + 0.1 * rng.standard_normal((n, 2))
    noise = rng.standard_normal((n, n_irrelevant))
    s = relevant.sum(axis=1)
    y = 2.0 * s + 0.5 * np.maximum(s, 0.0) ** 2 + 0.1 * rng.standard_normal(n)

    names = ("relevant_1", "relevant_2") + tuple(f"noise_{j + 1}" for j in range(n_irrelevant))
    return Dataset(
        x=_with_intercept(np.hstack([relevant, noise])),
        y=y,
        feature_names=names + (INTERCEPT,),
        task=TaskKind.REGRESSION,
        has_intercept=True,
        metadata={
            "generator": "drift-fixture",
            "rng": RNG_ALGORITHM,
            "seed": seed,
            "n": n,
            "n_irrelevant": n_irrelevant,
        },
    )
