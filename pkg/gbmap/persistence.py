"""Model files: JSON serialisation of fitted ensembles

Floats are written with Python's shortest round-trip repr, so a loaded model
reproduces the saved predictions exactly. A SHA-256 digest over the
canonical payload is stored with the file and verified on load.
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

from cryptography.hazmat.primitives import hashes
from pydantic import BaseModel, Field, ValidationError

from gbmap.boosting import FitConfig
from gbmap.config import MODEL_FORMAT_VERSION
from gbmap.data import PreprocessStats
from gbmap.ensemble import ExternalInitialModel, GbmapModel, LinearInitialModel, ZeroInitialModel
from gbmap.errors import ModelFileError
from gbmap.fileio import PathLike, atomic_write_text
from gbmap.models import Nonlinearity, TaskKind, WeakLearner

logger = logging.getLogger(__name__)

# excluded from the digest so refits differ only in the timestamp line
_UNHASHED = ("digest", "fitted_at")


class Provenance(BaseModel):
    """How and when the model was fitted"""

    seed: Optional[int] = None
    fitted_at: Optional[str] = None
    config: dict[str, Any] = Field(default_factory=dict)


class ModelFile(BaseModel):
    """On-disk schema of a fitted GBMAP model"""

    format_version: int
    task: TaskKind
    beta: float
    nonlinearity: Nonlinearity = Nonlinearity.SOFTPLUS
    p: int = Field(..., ge=1)
    f0: Union[ZeroInitialModel, LinearInitialModel] = Field(..., discriminator="kind")
    learners: list[WeakLearner]
    preprocessing: Optional[PreprocessStats] = None
    loss_history: list[float] = Field(default_factory=list)
    provenance: Provenance = Field(default_factory=Provenance)
    digest: Optional[str] = None


def _canonical(payload: dict) -> dict:
    out = {}
    for key, value in payload.items():
        if key in _UNHASHED:
            continue
        out[key] = _canonical(value) if isinstance(value, dict) else value
    return out


def compute_digest(payload: dict) -> str:
    """Hex SHA-256 of the canonical JSON payload (digest and timestamp left out)"""
    canonical = json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))
    digest = hashes.Hash(hashes.SHA256())
    digest.update(canonical.encode("utf-8"))
    return digest.finalize().hex()


def to_model_file(
    model: GbmapModel, config: Optional[FitConfig] = None, fitted_at: Optional[datetime] = None
) -> ModelFile:
    """Snapshot a fitted model into its file schema.

    Raises:
        ModelFileError: If the initial model is an external predictor
    """
    if isinstance(model.f0, ExternalInitialModel):
        raise ModelFileError("models with an external initial model cannot be saved")
    fitted_at = fitted_at or datetime.now(timezone.utc)
    return ModelFile(
        format_version=MODEL_FORMAT_VERSION,
        task=model.task,
        beta=model.beta,
        nonlinearity=model.nonlinearity,
        p=model.p,
        f0=model.f0,
        learners=list(model.learners),
        preprocessing=model.preprocessing,
        loss_history=list(model.loss_history),
        provenance=Provenance(
            seed=config.seed if config else None,
            fitted_at=fitted_at.isoformat(),
            config=config.model_dump(mode="json") if config else {},
        ),
    )


def save_model(
    model: GbmapModel,
    path: PathLike,
    config: Optional[FitConfig] = None,
    fitted_at: Optional[datetime] = None,
) -> Path:
    """Write the model atomically as JSON with its digest.

    Args:
        model: Fitted model
        path: Destination file
        config: Fit configuration echoed into the provenance
        fitted_at: Fit timestamp, now by default

    Returns:
        The written path
    """
    payload = to_model_file(model, config, fitted_at).model_dump(mode="json")
    payload["digest"] = compute_digest(payload)
    path = atomic_write_text(path, json.dumps(payload, indent=2) + "\n")
    logger.info("Saved model", extra={"path": str(path), "m": model.m, "p": model.p})
    return path


def load_model(path: PathLike) -> GbmapModel:
    """Read a model file written by save_model.

    Raises:
        ModelFileError: If the file is missing, not valid JSON, of an
            unsupported format version, fails schema validation or its digest
            does not match
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ModelFileError(f"cannot read model file {path}: {e}")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"model file {path} is not valid JSON: {e}")
    if not isinstance(payload, dict):
        raise ModelFileError(f"model file {path} must hold a JSON object")

    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format version: {version}")
    expected = payload.get("digest")
    if expected is not None and expected != compute_digest(payload):
        raise ModelFileError(f"model file {path} failed its digest check")

    try:
        record = ModelFile.model_validate(payload)
        model = GbmapModel(
            learners=tuple(record.learners),
            beta=record.beta,
            task=record.task,
            p=record.p,
            f0=record.f0,
            nonlinearity=record.nonlinearity,
            preprocessing=record.preprocessing,
            loss_history=tuple(record.loss_history),
        )
    except (ValidationError, ValueError) as e:
        raise ModelFileError(f"invalid model file {path}: {e}")

    logger.info("Loaded model", extra={"path": str(path), "m": model.m, "p": model.p})
    return model
