"""Multi-quantile network with a factorization-machine backbone.

The scalar FM part (bias + first-order weights + pairwise interactions via
shared latent vectors) is added to every quantile output; a dense trunk over
the concatenated field embeddings feeds a head with one output per grid
level.  Training minimizes pinball loss summed over all levels and samples
with manually derived gradients; the kink subgradient takes the I(u<=0)
branch, and an optional Huber smoothing (width cfg.smoothing) is used for the
training gradient only -- reported losses are always exact pinball.

Crossing quantiles are not constrained during training; predict_quantiles
sorts each row (monotone rearrangement), which never increases pinball loss
and guarantees a valid inverse CDF downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import KIND_CATEGORICAL
from .errors import DataError, DomainError, FitError


@dataclass
class DeepFmConfig:
    embed_dim: int = 8
    hidden_sizes: tuple = (64, 32)
    activation: str = "relu"
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 0.01
    optimizer: str = "adam"
    seed: int = 0
    smoothing: float = 1e-3
    use_deep: bool = True
    standardize: bool = True
    standardize_response: bool = True
    lr_decay: float = 0.98
    validation_fraction: float = 0.0  # > 0 enables best-epoch restore
    patience: int = 10

    def __post_init__(self):
        if self.embed_dim < 1:
            raise DomainError("embed_dim must be >= 1")
        if not self.hidden_sizes:
            raise DomainError("hidden_sizes must be nonempty")
        if self.learning_rate <= 0.0:
            raise DomainError("learning_rate must be > 0")
        if self.activation != "relu":
            raise DomainError(f"unsupported activation {self.activation!r}")
        if self.optimizer != "adam":
            raise DomainError(f"unsupported optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    epoch_loss: list = field(default_factory=list)  # exact total pinball per epoch
    initial_loss: float = float("nan")
    monotone_fraction: float = float("nan")
    aborted: str = ""


def pinball_total(residuals, levels):
    """Exact pinball summed over samples and levels; residuals is (n, m-1)."""
    t = levels[None, :]
    return float(np.sum(np.where(residuals > 0.0, t * residuals, (t - 1.0) * residuals)))


def _smoothed_pinball(residuals, levels, delta):
    """Huberized pinball 0.5*H_delta(u) + (tau-0.5)*u and its d/du."""
    t = levels[None, :]
    if delta <= 0.0:
        val = np.where(residuals > 0.0, t * residuals, (t - 1.0) * residuals)
        grad = np.where(residuals > 0.0, t, t - 1.0)
        return val, grad
    a = np.abs(residuals)
    quad = a <= delta
    h = np.where(quad, residuals ** 2 / (2.0 * delta), a - delta / 2.0)
    val = 0.5 * h + (t - 0.5) * residuals
    grad = 0.5 * np.clip(residuals / delta, -1.0, 1.0) + (t - 0.5)
    return val, grad


def fm_pairwise(X, V):
    """sum_{i<j} <v_i, v_j> x_i x_j via the O(p*k) sum-of-squares identity."""
    s = X @ V
    s2 = (X ** 2) @ (V ** 2)
    return 0.5 * (s ** 2 - s2).sum(axis=1)


def fm_pairwise_reference(x, V):
    """Explicit double loop; test oracle for the identity above."""
    p = x.shape[0]
    total = 0.0
    for i in range(p):
        for j in range(i + 1, p):
            total += float(V[i] @ V[j]) * x[i] * x[j]
    return total


class DeepFmQuantileModel:
    """Trained multi-quantile network over a one-hot field layout."""

    def __init__(self, schema, grid, cfg, params, mu, sigma, train_report,
                 y_mu=0.0, y_sd=1.0):
        self.schema = schema
        self.grid = grid
        self.cfg = cfg
        self.params = params  # dict of ndarray parameter groups
        self.mu = mu          # continuous-column standardization constants
        self.sigma = sigma
        self.y_mu = y_mu      # response affine map (training-time units)
        self.y_sd = y_sd
        self.train_report = train_report
        self._slices = list(schema.block_slices().values())

    @property
    def kind(self):
        return "deepfm"

    def _standardize(self, X):
        if not self.cfg.standardize or self.mu is None:
            return X
        Z = X.astype(float, copy=True)
        Z -= self.mu
        Z /= self.sigma
        return Z

    def forward(self, X):
        """Raw per-level predictions (n, m-1); input must already be one-hot
        encoded against the schema (name-based encoding raises on unseen
        categorical levels before reaching here)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.schema.width:
            raise DataError(f"covariate width {X.shape[1]} != schema width {self.schema.width}")
        pred, _ = self._forward_cached(self._standardize(X))
        return pred * self.y_sd + self.y_mu

    def _forward_cached(self, Z):
        P = self.params
        fm = P["w0"][0] + Z @ P["w"] + fm_pairwise(Z, P["V"])
        cache = {"Z": Z, "S": Z @ P["V"]}
        if self.cfg.use_deep:
            embeds = [Z[:, sl] @ P["V"][sl] for sl in self._slices]
            D = np.concatenate(embeds, axis=1) if embeds else np.zeros((Z.shape[0], 0))
            hs = [D]
            h = D
            for i in range(len(self.cfg.hidden_sizes)):
                h = np.maximum(h @ P[f"W{i}"] + P[f"b{i}"], 0.0)
                hs.append(h)
            out = h @ P["W_out"] + P["b_out"]
            cache.update({"D": D, "hs": hs})
        else:
            out = np.broadcast_to(P["b_out"], (Z.shape[0], P["b_out"].size)).copy()
        cache["fm"] = fm
        return fm[:, None] + out, cache

    def _backward(self, G, cache):
        """Parameter gradients given dLoss/dprediction G (n, m-1)."""
        P = self.params
        Z, S = cache["Z"], cache["S"]
        g_fm = G.sum(axis=1)
        grads = {
            "w0": np.array([g_fm.sum()]),
            "w": Z.T @ g_fm,
            "V": Z.T @ (g_fm[:, None] * S) - P["V"] * ((Z ** 2).T @ g_fm)[:, None],
            "b_out": G.sum(axis=0),
        }
        if self.cfg.use_deep:
            hs = cache["hs"]
            grads["W_out"] = hs[-1].T @ G
            dh = G @ P["W_out"].T
            for i in reversed(range(len(self.cfg.hidden_sizes))):
                dz = dh * (hs[i + 1] > 0.0)
                grads[f"W{i}"] = hs[i].T @ dz
                grads[f"b{i}"] = dz.sum(axis=0)
                dh = dz @ P[f"W{i}"].T
            dD = dh
            k = self.cfg.embed_dim
            for fi, sl in enumerate(self._slices):
                grads["V"][sl] += Z[:, sl].T @ dD[:, fi * k:(fi + 1) * k]
        else:
            grads["W_out"] = np.zeros_like(P["W_out"])
            for i in range(len(self.cfg.hidden_sizes)):
                grads[f"W{i}"] = np.zeros_like(P[f"W{i}"])
                grads[f"b{i}"] = np.zeros_like(P[f"b{i}"])
        return grads

    def loss_and_grads(self, X, y, smoothing=None):
        """Mean smoothed pinball over a batch and its analytic parameter
        gradients; the finite-difference harness checks exactly this."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        delta = self.cfg.smoothing if smoothing is None else smoothing
        Z = self._standardize(X)
        pred, cache = self._forward_cached(Z)
        resid = y[:, None] - (pred * self.y_sd + self.y_mu)
        val, dval = _smoothed_pinball(resid, self.grid.levels, delta)
        scale = 1.0 / val.size
        G = -dval * scale * self.y_sd  # d/dpred_net = -y_sd * d/dresidual
        return float(val.sum() * scale), self._backward(G, cache)

    def predict_quantiles(self, X, levels=None, rearrange=True):
        Q = self.forward(X)
        if rearrange:
            Q = np.sort(Q, axis=1)
        if levels is not None:
            Q = Q[:, self.grid.level_indices(levels)]
        return Q

    def quantile_matrix(self, X):
        return self.forward(X)


def _init_params(schema, grid, cfg, y, rng):
    p = schema.width
    k = cfg.embed_dim
    n_fields = len(schema.fields)
    params = {
        "w0": np.zeros(1),
        "w": np.zeros(p),
        "V": rng.normal(0.0, 0.01, size=(p, k)),
        # head biases start at the empirical unconditional quantiles, which
        # centers every level before the first step
        "b_out": np.quantile(y, grid.levels),
    }
    d_in = n_fields * k
    dims = [d_in, *cfg.hidden_sizes]
    for i in range(len(cfg.hidden_sizes)):
        fan_in = max(dims[i], 1)
        params[f"W{i}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(dims[i], dims[i + 1]))
        params[f"b{i}"] = np.zeros(dims[i + 1])
    params["W_out"] = np.zeros((dims[-1], grid.m - 1))
    return params


def train(data, grid, cfg=None):
    """Fit the network by seeded mini-batch Adam on the summed pinball objective.

    Deterministic for a fixed seed and thread count.  Raises FitError on
    divergence (exact loss above 1e3x the initial value for three consecutive
    epochs) or non-finite parameters, with the partial report attached.
    """
    cfg = cfg or DeepFmConfig()
    X, y = data.rows, data.response
    n = X.shape[0]
    if n < 1:
        raise DataError("training data is empty")
    rng = np.random.default_rng(cfg.seed)

    mu = sigma = None
    if cfg.standardize:
        mu = np.zeros(X.shape[1])
        sigma = np.ones(X.shape[1])
        for f, sl in zip(data.schema.fields, data.schema.block_slices().values()):
            if f.kind != KIND_CATEGORICAL:
                col = X[:, sl.start]
                mu[sl.start] = col.mean()
                sd = col.std()
                sigma[sl.start] = sd if sd > 0.0 else 1.0
    y_mu, y_sd = 0.0, 1.0
    if cfg.standardize_response:
        y_mu = float(y.mean())
        sd = float(y.std())
        y_sd = sd if sd > 0.0 else 1.0
    ys = (y - y_mu) / y_sd

    params = _init_params(data.schema, grid, cfg, ys, rng)
    model = DeepFmQuantileModel(data.schema, grid, cfg, params, mu, sigma,
                                TrainReport(), y_mu=y_mu, y_sd=y_sd)
    Z = model._standardize(X)
    levels = grid.levels

    # optional holdout for best-epoch restore; training still sees every row
    # order deterministically from the seed
    val_idx = np.array([], dtype=int)
    if cfg.validation_fraction > 0.0 and n >= 20:
        n_val = max(1, int(round(cfg.validation_fraction * n)))
        val_idx = rng.permutation(n)[:n_val]
    train_idx = np.setdiff1d(np.arange(n), val_idx)

    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    t = 0
    report = model.train_report

    def exact_loss(rows=None):
        # reported metric: exact (unsmoothed) pinball in original units
        rows = np.arange(n) if rows is None else rows
        total = 0.0
        for start in range(0, rows.size, 65536):
            sel = rows[start:start + 65536]
            pred, _ = model._forward_cached(Z[sel])
            pred = pred * y_sd + y_mu
            total += pinball_total(y[sel, None] - pred, levels)
        return total

    report.initial_loss = exact_loss()
    report.epoch_loss.append(report.initial_loss)
    best_val = np.inf
    best_params = None
    stale = 0
    bad_epochs = 0
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = train_idx[rng.permutation(train_idx.size)]
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pred, cache = model._forward_cached(Z[idx])
            resid = ys[idx, None] - pred
            _, dval = _smoothed_pinball(resid, levels, cfg.smoothing)
            G = -dval / dval.size
            grads = model._backward(G, cache)
            t += 1
            for key, g in grads.items():
                adam_m[key] = 0.9 * adam_m[key] + 0.1 * g
                adam_v[key] = 0.999 * adam_v[key] + 0.001 * g ** 2
                mh = adam_m[key] / (1.0 - 0.9 ** t)
                vh = adam_v[key] / (1.0 - 0.999 ** t)
                params[key] = params[key] - lr * mh / (np.sqrt(vh) + 1e-8)
        if not all(np.isfinite(v).all() for v in params.values()):
            report.aborted = "non-finite parameters"
            raise FitError(f"training produced non-finite parameters; report={report}")
        epoch = exact_loss()
        report.epoch_loss.append(epoch)
        bad_epochs = bad_epochs + 1 if epoch > 1e3 * report.initial_loss else 0
        if bad_epochs >= 3:
            report.aborted = "diverged"
            raise FitError(f"training diverged; report={report}")
        if val_idx.size:
            v = exact_loss(val_idx)
            if v < best_val:
                best_val = v
                best_params = {k: p.copy() for k, p in params.items()}
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
        lr *= cfg.lr_decay
    if best_params is not None:
        params.update(best_params)
    diffs = np.diff(report.epoch_loss)
    report.monotone_fraction = float((diffs < 0.0).mean()) if diffs.size else 1.0
    return model
