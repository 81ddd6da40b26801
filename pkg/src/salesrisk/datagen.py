"""Synthetic sales datasets and CSV ingestion.

Covariates follow a field schema: categorical fields are one-hot expanded
(one column per level), continuous fields occupy a single column.  Synthetic
responses come from a location-scale model where both location and scale are
second-order factorization-machine functions of the covariates and the noise
is multiplicative log-normal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .errors import DataError, DomainError, IngestError, ParameterError, SchemaError, UnseenLevelError

KIND_CATEGORICAL = "categorical"
KIND_CONTINUOUS = "continuous"


@dataclass(frozen=True)
class Field:
    """One covariate field; categorical fields carry their level dictionary."""

    name: str
    kind: str
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in (KIND_CATEGORICAL, KIND_CONTINUOUS):
            raise SchemaError(f"unknown field kind {self.kind!r}")
        if self.kind == KIND_CATEGORICAL and len(self.levels) < 2:
            raise SchemaError(f"categorical field {self.name!r} needs >= 2 levels")
        if self.kind == KIND_CONTINUOUS and self.levels:
            raise SchemaError(f"continuous field {self.name!r} cannot carry levels")

    @property
    def cardinality(self):
        return len(self.levels)

    @property
    def width(self):
        return self.cardinality if self.kind == KIND_CATEGORICAL else 1


def categorical(name, levels=None, cardinality=None):
    """Build a categorical field from explicit levels or a synthetic cardinality."""
    if levels is None:
        if cardinality is None:
            raise SchemaError("categorical() needs levels or cardinality")
        levels = tuple(f"{name}_{i}" for i in range(cardinality))
    return Field(name, KIND_CATEGORICAL, tuple(str(v) for v in levels))


def continuous(name):
    return Field(name, KIND_CONTINUOUS)


@dataclass(frozen=True)
class FieldSchema:
    """Ordered covariate layout; defines the one-hot expansion."""

    fields: tuple

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError("field names must be unique")

    @property
    def width(self):
        """One-hot expansion width: sum of cardinalities + count of continuous fields."""
        return sum(f.width for f in self.fields)

    def column_names(self):
        cols = []
        for f in self.fields:
            if f.kind == KIND_CATEGORICAL:
                cols.extend(f"{f.name}={lv}" for lv in f.levels)
            else:
                cols.append(f.name)
        return cols

    def block_slices(self):
        """Column slice per field, in schema order."""
        out = {}
        start = 0
        for f in self.fields:
            out[f.name] = slice(start, start + f.width)
            start += f.width
        return out

    def encode_row(self, assignment):
        """Encode a by-name covariate assignment into a one-hot row.

        Raises UnseenLevelError for categorical values outside the level
        dictionary and SchemaError for missing fields.
        """
        x = np.zeros(self.width)
        start = 0
        for f in self.fields:
            if f.name not in assignment:
                raise SchemaError(f"missing covariate {f.name!r}")
            v = assignment[f.name]
            if f.kind == KIND_CATEGORICAL:
                key = str(v)
                if key not in f.levels:
                    raise UnseenLevelError(f.name, key)
                x[start + f.levels.index(key)] = 1.0
            else:
                x[start] = float(v)
            start += f.width
        return x

    def decode_row(self, x):
        """Inverse of encode_row (categorical levels by argmax)."""
        out = {}
        start = 0
        for f in self.fields:
            if f.kind == KIND_CATEGORICAL:
                block = x[start:start + f.width]
                out[f.name] = f.levels[int(np.argmax(block))]
            else:
                out[f.name] = float(x[start])
            start += f.width
        return out

    def to_dict(self):
        return {
            "fields": [
                {"name": f.name, "kind": f.kind, "levels": list(f.levels)}
                if f.kind == KIND_CATEGORICAL
                else {"name": f.name, "kind": f.kind}
                for f in self.fields
            ]
        }

    @classmethod
    def from_dict(cls, d):
        fields = []
        for fd in d["fields"]:
            if fd["kind"] == KIND_CATEGORICAL:
                if "levels" in fd:
                    fields.append(categorical(fd["name"], levels=fd["levels"]))
                else:
                    fields.append(categorical(fd["name"], cardinality=fd["cardinality"]))
            else:
                fields.append(continuous(fd["name"]))
        return cls(tuple(fields))


def schema_from_config(path):
    """Load a FieldSchema from the JSON config format documented in the README."""
    with open(path) as fh:
        return FieldSchema.from_dict(json.load(fh))


def schema_to_config(schema, path):
    with open(path, "w") as fh:
        json.dump(schema.to_dict(), fh, indent=2)


@dataclass
class Dataset:
    """One-hot expanded covariate matrix plus nonnegative sales response."""

    schema: FieldSchema
    rows: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.response = np.asarray(self.response, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[0] != self.response.shape[0]:
            raise DataError("rows/response shape mismatch")
        if self.rows.shape[0] < 1:
            raise DataError("dataset must contain at least one row")
        if self.rows.shape[1] != self.schema.width:
            raise DataError(
                f"covariate width {self.rows.shape[1]} != schema width {self.schema.width}"
            )
        if not np.isfinite(self.rows).all() or not np.isfinite(self.response).all():
            raise DataError("dataset contains non-finite values")
        self._check_one_hot()

    def _check_one_hot(self):
        for f, sl in zip(self.schema.fields, self.schema.block_slices().values()):
            if f.kind != KIND_CATEGORICAL:
                continue
            block = self.rows[:, sl]
            if not (np.isin(block, (0.0, 1.0)).all() and (block.sum(axis=1) == 1.0).all()):
                raise DataError(f"categorical block {f.name!r} is not valid one-hot")

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def p(self):
        return self.rows.shape[1]


@dataclass
class FmLocationScaleParams:
    """Ground-truth parameters: location and scale are both FM functions.

    Scale must stay strictly positive on every generated row; violating
    parameter draws are rejected rather than clamped so the conditional
    quantile oracle stays exact.
    """

    w0: float
    w: np.ndarray
    V: np.ndarray
    r0: float
    rvec: np.ndarray
    Z: np.ndarray
    noise: str = "lognormal"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        self.rvec = np.asarray(self.rvec, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        p = self.w.shape[0]
        if self.V.shape[0] != p or self.rvec.shape[0] != p or self.Z.shape[0] != p:
            raise ParameterError("parameter dimensions disagree")
        if self.noise != "lognormal":
            raise ParameterError(f"unsupported noise tag {self.noise!r}")

    @property
    def p(self):
        return self.w.shape[0]

    def to_dict(self):
        return {
            "w0": self.w0, "w": self.w.tolist(), "V": self.V.tolist(),
            "r0": self.r0, "rvec": self.rvec.tolist(), "Z": self.Z.tolist(),
            "noise": self.noise,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            w0=float(d["w0"]), w=np.array(d["w"], dtype=float), V=np.array(d["V"], dtype=float),
            r0=float(d["r0"]), rvec=np.array(d["rvec"], dtype=float),
            Z=np.array(d["Z"], dtype=float), noise=d.get("noise", "lognormal"),
        )


def _fm_terms(X, bias, lin, latent):
    """bias + X w + sum_{i<j} <latent_i, latent_j> x_i x_j, via the O(p k) identity."""
    X = np.atleast_2d(X)
    s = X @ latent
    s2 = (X ** 2) @ (latent ** 2)
    return bias + X @ lin + 0.5 * (s ** 2 - s2).sum(axis=1)


def location(params, X):
    return _fm_terms(X, params.w0, params.w, params.V)


def scale(params, X):
    return _fm_terms(X, params.r0, params.rvec, params.Z)


def random_params(schema, k=8, seed=0, latent_sd=None, max_attempts=100, probe=4096):
    """Draw a random parameter set, rejecting draws whose scale can go nonpositive.

    Latent entries default to N(0, 0.1/sqrt(k)); linear terms are N(0,1) with a
    positive scale intercept.  These defaults are artifact conventions, not
    dictated by the synthetic-model definition.
    """
    if latent_sd is None:
        latent_sd = 0.1 / np.sqrt(k)
    p = schema.width
    ss = np.random.SeedSequence(seed)
    for child in ss.spawn(max_attempts):
        rng = np.random.default_rng(child)
        params = FmLocationScaleParams(
            w0=float(rng.normal(0.0, 1.0)),
            w=rng.normal(0.0, 1.0, size=p),
            V=rng.normal(0.0, latent_sd, size=(p, k)),
            r0=float(1.0 + abs(rng.normal(0.0, 0.5))),
            rvec=rng.normal(0.0, 0.1, size=p),
            Z=rng.normal(0.0, latent_sd, size=(p, k)),
        )
        X = sample_covariates(schema, probe, rng)
        if scale(params, X).min() > 0.0:
            return params
    raise ParameterError(f"no positive-scale parameter draw in {max_attempts} attempts")


def sample_covariates(schema, n, rng, continuous_dist="uniform"):
    """Uniform category draws; continuous features i.i.d. per continuous_dist."""
    X = np.zeros((n, schema.width))
    start = 0
    for f in schema.fields:
        if f.kind == KIND_CATEGORICAL:
            idx = rng.integers(0, f.cardinality, size=n)
            X[np.arange(n), start + idx] = 1.0
        else:
            if continuous_dist == "uniform":
                X[:, start] = rng.uniform(0.0, 1.0, size=n)
            elif continuous_dist == "normal":
                X[:, start] = rng.normal(0.0, 1.0, size=n)
            else:
                raise DomainError(f"unknown continuous_dist {continuous_dist!r}")
        start += f.width
    return X


def synth_generate(params, schema, n, seed, continuous_dist="uniform", max_redraws=100):
    """Generate a synthetic Dataset; bit-reproducible for a fixed seed.

    Rows whose scale term is nonpositive are redrawn (the conditional law at
    every kept x is untouched); if redraws are exhausted the parameter set is
    rejected with a ParameterError.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    if schema.width != params.p:
        raise SchemaError(f"schema width {schema.width} != params dimension {params.p}")
    rng = np.random.default_rng(seed)
    X = sample_covariates(schema, n, rng, continuous_dist)
    s = scale(params, X)
    attempts = 0
    while (bad := s <= 0.0).any():
        attempts += 1
        if attempts > max_redraws:
            raise ParameterError(
                f"scale nonpositive for {int(bad.sum())} rows after {max_redraws} redraws"
            )
        X[bad] = sample_covariates(schema, int(bad.sum()), rng, continuous_dist)
        s = scale(params, X)
    u = np.exp(rng.standard_normal(n))
    y = location(params, X) + s * u
    return Dataset(schema=schema, rows=X, response=y)


def true_conditional_quantile(params, x, tau):
    """Exact conditional quantile of the ground-truth model at covariate x.

    location(x) + scale(x) * exp(Phi^-1(tau)); log-normal noise only.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0.0) or np.any(tau >= 1.0):
        raise DomainError("tau must lie strictly inside (0, 1)")
    loc = location(params, x)[0]
    s = scale(params, x)[0]
    if s <= 0.0:
        raise ParameterError("scale(x) must be positive")
    q = loc + s * np.exp(ndtri(tau))
    return float(q) if q.ndim == 0 else q


def true_conditional_sample(params, x, size, seed):
    """Oracle draws of Y at covariate x from the ground-truth model."""
    loc = location(params, x)[0]
    s = scale(params, x)[0]
    if s <= 0.0:
        raise ParameterError("scale(x) must be positive")
    rng = np.random.default_rng(seed)
    return loc + s * np.exp(rng.standard_normal(size))


def csv_ingest(path, schema, response_column, delimiter=","):
    """Ingest a headered CSV into the one-hot Dataset form.

    Categorical levels map through the schema's level dictionary (unseen level
    -> UnseenLevelError, never a silent zero vector).  Missing cells reject the
    row and are reported in diagnostics; malformed numerics raise an
    IngestError naming the row and column.
    """
    try:
        frame = pd.read_csv(path, delimiter=delimiter, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise
    except Exception as exc:  # malformed file structure
        raise IngestError(f"cannot parse CSV {path}: {exc}") from exc
    needed = [f.name for f in schema.fields] + [response_column]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise IngestError(f"columns missing from {path}: {missing}")

    n_raw = len(frame)
    keep = np.ones(n_raw, dtype=bool)
    diagnostics = []
    for col in needed:
        blank = frame[col].str.strip() == ""
        for i in np.flatnonzero(blank.to_numpy() & keep):
            diagnostics.append(f"row {i}: missing value in column {col!r}")
        keep &= ~blank.to_numpy()
    frame = frame[keep]
    if len(frame) == 0:
        raise DataError(f"no usable rows in {path} ({len(diagnostics)} rejected)")

    row_index = np.flatnonzero(keep)
    X = np.zeros((len(frame), schema.width))
    start = 0
    for f in schema.fields:
        col = frame[f.name].to_numpy()
        if f.kind == KIND_CATEGORICAL:
            lookup = {lv: j for j, lv in enumerate(f.levels)}
            for i, v in enumerate(col):
                j = lookup.get(v)
                if j is None:
                    raise UnseenLevelError(f.name, v)
                X[i, start + j] = 1.0
        else:
            for i, v in enumerate(col):
                try:
                    X[i, start] = float(v)
                except ValueError:
                    raise IngestError(
                        f"non-numeric value {v!r} at row {row_index[i]}, column {f.name!r}",
                        row=int(row_index[i]), column=f.name,
                    ) from None
        start += f.width

    y = np.empty(len(frame))
    for i, v in enumerate(frame[response_column].to_numpy()):
        try:
            y[i] = float(v)
        except ValueError:
            raise IngestError(
                f"non-numeric response {v!r} at row {row_index[i]}, column {response_column!r}",
                row=int(row_index[i]), column=response_column,
            ) from None

    ds = Dataset(schema=schema, rows=X, response=y)
    ds.diagnostics = diagnostics
    return ds


def infer_levels(path, fields_spec, delimiter=","):
    """Build a FieldSchema from kind declarations, reading categorical level
    dictionaries off the file when the config does not pin them."""
    frame = pd.read_csv(path, delimiter=delimiter, dtype=str, keep_default_na=False)
    fields = []
    for fd in fields_spec:
        name, kind = fd["name"], fd["kind"]
        if kind == KIND_CATEGORICAL:
            levels = fd.get("levels")
            if not levels:
                if name not in frame.columns:
                    raise IngestError(f"column {name!r} missing from {path}")
                levels = sorted(set(frame[name]) - {""})
            fields.append(categorical(name, levels=levels))
        else:
            fields.append(continuous(name))
    return FieldSchema(tuple(fields))


def csv_export(dataset, path, response_column="y", delimiter=","):
    """Write a Dataset back to field-level CSV (one-hot blocks decoded)."""
    records = [dataset.schema.decode_row(row) for row in dataset.rows]
    frame = pd.DataFrame.from_records(records)
    frame[response_column] = dataset.response
    frame.to_csv(path, index=False, sep=delimiter)
