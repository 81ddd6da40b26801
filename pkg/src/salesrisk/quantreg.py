"""Linear conditional quantile models fitted on an evenly spaced level grid.

Each level tau_j = j/m is fitted independently by minimizing mean pinball
loss.  The working solver is iteratively reweighted least squares on a
Huber-smoothed pinball objective with the smoothing width annealed toward
zero, followed by a vertex polish (an exact interpolation solve through the
smallest-residual points, which is where the underlying LP attains its
optimum).  An exact linear-programming solver is kept for tiny instances as
an independent optimality oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DomainError, FitError


def pinball_loss(u, tau):
    """rho_tau(u) = [tau - I(u <= 0)] * u; nonnegative, zero iff u == 0."""
    u = np.asarray(u, dtype=float)
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie strictly inside (0, 1)")
    return np.where(u > 0.0, tau * u, (tau - 1.0) * u)


def default_m(n):
    """Grid-size rule round(sqrt(n)), clamped to [3, n-1]; callers may override."""
    if n < 9:
        raise DomainError("default_m needs n >= 9")
    return int(min(max(round(np.sqrt(n)), 3), n - 1))


@dataclass(frozen=True)
class QuantileGrid:
    """The m-1 evenly spaced levels tau_j = j/m."""

    m: int

    def __post_init__(self):
        if self.m < 3:
            raise DomainError("grid needs m >= 3")

    @property
    def levels(self):
        return np.arange(1, self.m) / self.m

    def level_indices(self, levels):
        """Map requested levels onto grid indices; off-grid levels are an error."""
        levels = np.atleast_1d(np.asarray(levels, dtype=float))
        j = np.rint(levels * self.m).astype(int)
        if (j < 1).any() or (j > self.m - 1).any() or not np.allclose(j / self.m, levels, atol=1e-12):
            raise DomainError("requested levels are not on the grid")
        return j - 1


@dataclass
class SolverConfig:
    max_iter: int = 300
    tol: float = 1e-10
    smoothing_min: float = 1e-12
    anneal: float = 0.5
    ridge: float = 0.0  # optional stabilizer, off by default
    polish: bool = True


@dataclass
class FitReport:
    loss: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    messages: list = field(default_factory=list)


@dataclass
class LinearQuantileModel:
    """Coefficient matrix beta[(j, :)] for level tau_j over the one-hot design."""

    schema: object
    grid: QuantileGrid
    beta: np.ndarray
    fit_report: FitReport

    def __post_init__(self):
        if self.beta.shape[0] != self.grid.m - 1:
            raise FitError("beta row count must equal m-1")

    @property
    def kind(self):
        return "linear"

    def quantile_matrix(self, X):
        """Raw per-level predictions, shape (n, m-1); no crossing correction."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.beta.T

    def predict_quantiles(self, X, levels=None, rearrange=True):
        """Predicted quantiles; monotone rearrangement (per-row sort) by default."""
        Q = self.quantile_matrix(X)
        if rearrange:
            Q = np.sort(Q, axis=1)
        if levels is not None:
            Q = Q[:, self.grid.level_indices(levels)]
        return Q


def _weighted_lstsq(X, y, w, ridge):
    # normal equations are ~10x faster than lstsq for tall-skinny designs;
    # fall back to lstsq when the weighted Gram matrix goes singular
    Xw = X * w[:, None]
    G = X.T @ Xw
    if ridge > 0.0:
        G = G + ridge * np.eye(X.shape[1])
    h = Xw.T @ y
    try:
        return np.linalg.solve(G, h)
    except np.linalg.LinAlgError:
        sw = np.sqrt(w)
        A = X * sw[:, None]
        b = y * sw
        if ridge > 0.0:
            A = np.vstack([A, np.sqrt(ridge) * np.eye(X.shape[1])])
            b = np.concatenate([b, np.zeros(X.shape[1])])
        return np.linalg.lstsq(A, b, rcond=None)[0]


def fit_level(X, y, tau, cfg=None):
    """IRLS with annealed Huberized kink for one quantile level.

    Returns (beta, mean_loss, iterations, converged).  Deterministic for a
    given (X, y, tau, cfg).
    """
    cfg = cfg or SolverConfig()
    n, p = X.shape
    beta = _weighted_lstsq(X, y, np.ones(n), cfg.ridge)
    r = y - X @ beta
    eps = max(float(np.std(r)), 1.0) if n > 1 else 1.0
    best_beta, best_loss = beta, float(np.mean(pinball_loss(r, tau)))

    it, stall = 0, 0
    while it < cfg.max_iter:
        it += 1
        c = np.where(r > 0.0, tau, 1.0 - tau)
        w = c / np.maximum(np.abs(r), eps)
        beta = _weighted_lstsq(X, y, w, cfg.ridge)
        r = y - X @ beta
        loss = float(np.mean(pinball_loss(r, tau)))
        if loss < best_loss - cfg.tol * max(1.0, best_loss):
            best_beta, best_loss, stall = beta, loss, 0
        else:
            if loss < best_loss:
                best_beta, best_loss = beta, loss
            stall += 1
        eps = max(eps * cfg.anneal, cfg.smoothing_min)
        if stall >= 3 and eps <= cfg.smoothing_min:
            break
    converged = eps <= cfg.smoothing_min

    if cfg.polish and n >= p:
        best_beta, best_loss = _vertex_polish(X, y, tau, best_beta, best_loss)
    return best_beta, best_loss, it, converged


def _vertex_polish(X, y, tau, beta, loss):
    """Snap to the optimum vertex: the exact solution interpolates p points.

    Repeatedly re-solves through the smallest-|residual| basis until no
    improvement; for small p also tries every p-subset of the 2p nearest
    points, which covers bases the smoothed iterate narrowly misses.
    """
    from itertools import combinations

    n, p = X.shape
    for _ in range(20):
        rr = np.abs(y - X @ beta)
        near = np.argsort(rr, kind="stable")
        candidates = [near[:p]]
        if p <= 4 and n >= 2 * p:
            candidates += [np.array(c) for c in combinations(near[:2 * p], p)]
        improved = False
        for idx in candidates:
            try:
                cand = np.linalg.lstsq(X[idx], y[idx], rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            cand_loss = float(np.mean(pinball_loss(y - X @ cand, tau)))
            if cand_loss < loss - 1e-15:
                beta, loss = cand, cand_loss
                improved = True
                break
        if not improved:
            break
    return beta, loss


def fit_grid(data, grid, solver_cfg=None):
    """Fit all m-1 levels independently; per-level failures are recorded and
    only an all-levels failure raises."""
    cfg = solver_cfg or SolverConfig()
    X, y = data.rows, data.response
    n, p = X.shape
    messages = []
    if n <= p:
        msg = f"n={n} <= p={p}: quantile fits may be degenerate"
        warnings.warn(msg)
        messages.append(msg)

    levels = grid.levels
    beta = np.zeros((grid.m - 1, p))
    loss = np.full(grid.m - 1, np.nan)
    iters = np.zeros(grid.m - 1, dtype=int)
    ok = np.zeros(grid.m - 1, dtype=bool)
    for j, tau in enumerate(levels):
        try:
            b, l, it, conv = fit_level(X, y, float(tau), cfg)
        except np.linalg.LinAlgError as exc:
            messages.append(f"level {tau:.6g} failed: {exc}")
            continue
        beta[j], loss[j], iters[j], ok[j] = b, l, it, True
        if not conv:
            messages.append(f"level {tau:.6g}: smoothing floor not reached in {it} iterations")
    if not ok.any():
        raise FitError("all quantile levels failed to fit")
    if not ok.all():
        failed = levels[~ok]
        messages.append(f"{len(failed)} levels failed: {failed}")
    if not (np.isfinite(loss[ok]).all() and (loss[ok] >= 0.0).all()):
        raise FitError("fit produced non-finite or negative pinball loss")
    report = FitReport(loss=loss, iterations=iters, converged=ok, messages=messages)
    return LinearQuantileModel(schema=data.schema, grid=grid, beta=beta, fit_report=report)


def exact_pinball_lp(X, y, tau):
    """Exact quantile regression via LP (oracle for tiny instances).

    min (1/n) sum tau*u+ + (1-tau)*u-  s.t.  X beta + u+ - u- = y.
    Returns (beta, mean_loss).
    """
    n, p = X.shape
    c = np.concatenate([np.zeros(p), np.full(n, tau / n), np.full(n, (1.0 - tau) / n)])
    A_eq = np.hstack([X, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * p + [(0.0, None)] * (2 * n)
    res = linprog(c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise FitError(f"LP oracle failed: {res.message}")
    return res.x[:p], float(res.fun)
