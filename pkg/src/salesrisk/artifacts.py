"""Versioned model persistence and a content-addressed registry.

Artifacts are single .npz files: a JSON metadata string (format version,
model kind, schema with level dictionaries, grid size, config) plus the
parameter arrays.  The model id is a digest over the decoded content, so a
round-trip reproduces the id and bit-identical predictions.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from . import __version__
from .datagen import FieldSchema
from .deepfm import DeepFmConfig, DeepFmQuantileModel, TrainReport
from .errors import DataError
from .quantreg import FitReport, LinearQuantileModel, QuantileGrid

FORMAT_VERSION = 1


def _meta(model):
    meta = {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "kind": model.kind,
        "schema": model.schema.to_dict(),
        "m": model.grid.m,
    }
    if model.kind == "deepfm":
        cfg = model.cfg
        meta["config"] = {
            "embed_dim": cfg.embed_dim, "hidden_sizes": list(cfg.hidden_sizes),
            "activation": cfg.activation, "epochs": cfg.epochs,
            "batch_size": cfg.batch_size, "learning_rate": cfg.learning_rate,
            "optimizer": cfg.optimizer, "seed": cfg.seed, "smoothing": cfg.smoothing,
            "use_deep": cfg.use_deep, "standardize": cfg.standardize,
            "standardize_response": cfg.standardize_response, "lr_decay": cfg.lr_decay,
            "validation_fraction": cfg.validation_fraction, "patience": cfg.patience,
        }
        meta["y_mu"] = model.y_mu
        meta["y_sd"] = model.y_sd
        meta["train_epochs"] = len(model.train_report.epoch_loss)
    return meta


def save_model(model, path):
    meta = _meta(model)
    arrays = {}
    if model.kind == "linear":
        arrays["beta"] = model.beta
        arrays["fit_loss"] = model.fit_report.loss
        arrays["fit_iterations"] = model.fit_report.iterations
        arrays["fit_converged"] = model.fit_report.converged
    elif model.kind == "deepfm":
        for key, val in model.params.items():
            arrays[f"param_{key}"] = val
        arrays["mu"] = model.mu if model.mu is not None else np.zeros(0)
        arrays["sigma"] = model.sigma if model.sigma is not None else np.zeros(0)
        arrays["epoch_loss"] = np.asarray(model.train_report.epoch_loss)
    else:
        raise DataError(f"unknown model kind {model.kind!r}")
    np.savez(path, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    return path


def load_model(path):
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"].tobytes()).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported artifact format {meta.get('format_version')}")
        schema = FieldSchema.from_dict(meta["schema"])
        grid = QuantileGrid(meta["m"])
        if meta["kind"] == "linear":
            report = FitReport(loss=z["fit_loss"], iterations=z["fit_iterations"],
                               converged=z["fit_converged"])
            return LinearQuantileModel(schema=schema, grid=grid, beta=z["beta"],
                                       fit_report=report)
        if meta["kind"] == "deepfm":
            c = meta["config"]
            cfg = DeepFmConfig(
                embed_dim=c["embed_dim"], hidden_sizes=tuple(c["hidden_sizes"]),
                activation=c["activation"], epochs=c["epochs"], batch_size=c["batch_size"],
                learning_rate=c["learning_rate"], optimizer=c["optimizer"], seed=c["seed"],
                smoothing=c["smoothing"], use_deep=c["use_deep"], standardize=c["standardize"],
                standardize_response=c["standardize_response"], lr_decay=c["lr_decay"],
                validation_fraction=c["validation_fraction"], patience=c["patience"],
            )
            params = {k[len("param_"):]: z[k] for k in z.files if k.startswith("param_")}
            mu = z["mu"] if z["mu"].size else None
            sigma = z["sigma"] if z["sigma"].size else None
            report = TrainReport(epoch_loss=z["epoch_loss"].tolist())
            return DeepFmQuantileModel(schema, grid, cfg, params, mu, sigma, report,
                                       y_mu=meta["y_mu"], y_sd=meta["y_sd"])
        raise DataError(f"unknown model kind {meta['kind']!r}")


def model_id(model):
    """Content hash over metadata and parameter bytes (16 hex chars)."""
    h = hashlib.sha256()
    h.update(json.dumps(_meta(model), sort_keys=True).encode())
    if model.kind == "linear":
        h.update(model.beta.tobytes())
    else:
        for key in sorted(model.params):
            h.update(key.encode())
            h.update(model.params[key].tobytes())
        if model.mu is not None:
            h.update(model.mu.tobytes())
            h.update(model.sigma.tobytes())
    return h.hexdigest()[:16]


class ModelRegistry:
    """Directory-backed registry: <dir>/<id>.npz plus an index file.

    Inserts are atomic (write to temp, rename); ids are content hashes so a
    duplicate insert is a no-op returning the existing id.
    """

    def __init__(self, root):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self.index_path = os.path.join(root, "index.json")

    def _read_index(self):
        if not os.path.exists(self.index_path):
            return {}
        with open(self.index_path) as fh:
            return json.load(fh)

    def _write_index(self, index):
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(index, fh, indent=2)
        os.replace(tmp, self.index_path)

    def insert(self, model, created_at=None):
        mid = model_id(model)
        path = os.path.join(self.root, f"{mid}.npz")
        if not os.path.exists(path):
            # .npz suffix keeps np.savez from appending its own
            tmp = os.path.join(self.root, f".{mid}.{os.getpid()}.tmp.npz")
            save_model(model, tmp)
            os.replace(tmp, path)
        index = self._read_index()
        index[mid] = {
            "kind": model.kind,
            "m": model.grid.m,
            "schema_fields": [f.name for f in model.schema.fields],
            "p": model.schema.width,
            "created_at": created_at,
            "artifact": f"{mid}.npz",
        }
        self._write_index(index)
        return mid

    def get(self, mid):
        path = os.path.join(self.root, f"{mid}.npz")
        if not os.path.exists(path):
            raise KeyError(mid)
        return load_model(path)

    def entry(self, mid):
        index = self._read_index()
        if mid not in index:
            raise KeyError(mid)
        return index[mid]

    def list(self):
        return self._read_index()
