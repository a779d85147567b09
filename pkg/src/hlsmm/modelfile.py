"""Trained-model container: a JSON document with an integrity-checked weight blob.

The weight matrix is stored as base64 of its little-endian float64 row-major
bytes next to a sha-256 digest of those bytes.  Serialization is canonical
(sorted keys, fixed indentation), so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import Hyperparams, StepPolicy

FORMAT_VERSION = 1
BUILD_ID = "hlsmm-0.1.0"


@dataclass(frozen=True)
class LoadedModel:
    w: np.ndarray
    b: float
    rank_bound: int
    hyperparams: Hyperparams
    dataset_name: str
    seed: int
    build: str

    @property
    def sample_shape(self) -> tuple[int, int]:
        return self.w.shape


def _hp_to_dict(hp: Hyperparams) -> dict:
    return {
        "beta": hp.beta, "sigma": hp.sigma, "rank": hp.rank,
        "tau1": hp.tau1, "tau2": hp.tau2, "tau3": hp.tau3,
        "maxit": hp.maxit, "tol_step": hp.tol_step, "tol_obj": hp.tol_obj,
        "step": {"kind": hp.step.kind, "alpha0": hp.step.alpha0,
                 "shrink": hp.step.shrink, "max_halvings": hp.step.max_halvings},
        "z_update": hp.z_update, "seed": hp.seed,
    }


def _hp_from_dict(raw: dict) -> Hyperparams:
    step = raw.get("step", {})
    return Hyperparams(
        beta=raw["beta"], sigma=raw["sigma"], rank=int(raw["rank"]),
        tau1=raw["tau1"], tau2=raw["tau2"], tau3=raw["tau3"],
        maxit=int(raw["maxit"]), tol_step=raw["tol_step"], tol_obj=raw["tol_obj"],
        step=StepPolicy(kind=step.get("kind", "backtracking"),
                        alpha0=step.get("alpha0"),
                        shrink=step.get("shrink", 0.5),
                        max_halvings=int(step.get("max_halvings", 30))),
        z_update=raw.get("z_update", "exact"), seed=int(raw.get("seed", 0)),
    )


def save_model(path, w: np.ndarray, b: float, hp: Hyperparams,
               dataset_name: str = "", seed: int = 0) -> None:
    w = np.ascontiguousarray(np.asarray(w, dtype="<f8"))
    blob = w.tobytes(order="C")
    document = {
        "format_version": FORMAT_VERSION,
        "p": int(w.shape[0]),
        "q": int(w.shape[1]),
        "rank_bound": int(hp.rank),
        "b": float(b),
        "hyperparams": _hp_to_dict(hp),
        "w_b64": base64.b64encode(blob).decode("ascii"),
        "w_sha256": hashlib.sha256(blob).hexdigest(),
        "provenance": {"dataset": dataset_name, "seed": int(seed), "build": BUILD_ID},
    }
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def load_model(path) -> LoadedModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a valid model file: {exc}") from exc
    if document.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format version")
    try:
        p, q = int(document["p"]), int(document["q"])
        blob = base64.b64decode(document["w_b64"])
        digest = document["w_sha256"]
        provenance = document.get("provenance", {})
        hp = _hp_from_dict(document["hyperparams"])
        b = float(document["b"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from exc
    if len(blob) != p * q * 8:
        raise DataError(f"{path}: weight payload has {len(blob)} bytes, "
                        f"expected {p * q * 8}")
    if hashlib.sha256(blob).hexdigest() != digest:
        raise DataError(f"{path}: weight digest mismatch (corrupted file)")
    w = np.frombuffer(blob, dtype="<f8").reshape(p, q).copy()
    return LoadedModel(w=w, b=b, rank_bound=int(document["rank_bound"]),
                       hyperparams=hp,
                       dataset_name=provenance.get("dataset", ""),
                       seed=int(provenance.get("seed", 0)),
                       build=provenance.get("build", ""))
