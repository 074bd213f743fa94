"""Generalized cross-validation scoring and grid search over (lam, xi).

The criterion is

    GCV(lam, xi) = ||Yhat - Y||_n^2 / (1 - tr(H_lam) / n)^2

with Yhat the full fitted vector of the chosen variant and H_lam the
functional-stage smoother.  Whenever tr(H_lam) >= n the score is the
+inf sentinel.  An optional "full-map" mode replaces tr(H_lam) by the
trace of the complete response-to-fit map, which also counts degrees of
freedom spent on the scalar component.

Grid search shares the per-lam preparation across all xi values, skips
pairs whose fit fails, and breaks score ties toward the larger
(lam, xi) in lexicographic order.
"""

from dataclasses import dataclass, field

import numpy as np

from ._serialize import fmt, write_csv
from .errors import NumericalError, ValidationError
from .estimator import (
    FitConfig,
    GramSet,
    _affine_solve,
    _fit_prepared,
    _prepare_lambda,
    _stage_solver,
)

__all__ = ["GcvGrid", "default_grid", "gcv_score", "grid_search", "write_gcv_surface"]

DOF_MODES = ("smoother", "full_map")


def default_grid(num: int = 20, lo: float = 1e-6, hi: float = 1.0) -> np.ndarray:
    """Log-spaced penalty grid, 20 points in [1e-6, 1] by default."""
    if not (num >= 1 and 0 < lo <= hi and np.isfinite(hi)):
        raise ValidationError("default_grid: need num >= 1 and 0 < lo <= hi")
    if num == 1:
        return np.array([hi])
    return np.geomspace(lo, hi, num)


def _full_map_trace(gram: GramSet, prep, xi: float) -> float:
    # tr(T) for the full map T: Y -> H Y + (I-H) N theta(Y), assembled
    # from the cancelled smoothing-stage solve Xm = P^{-1}(I-H) with
    # P = (I-H)G + n xi^2 I so it stays finite when G is singular; the
    # eta columns contribute tr[(I-H) G Xm] and the affine columns a
    # 2 x 2 correction through l(Y) = M2^{-1} F' Xm Y
    p_solve = _stage_solver(gram, prep, xi, "gcv")
    xm = p_solve(prep.ih)
    gxm = gram.gram_z @ xm
    trace = prep.trace_h + float(np.sum(prep.ih * gxm.T))
    if prep.variant == "seminorm":
        fb = gram.nmat[:, :2]
        uf = p_solve(prep.ih @ fb)
        cf = fb - gram.gram_z @ uf
        small = (fb.T @ xm) @ (prep.ih @ cf)
        trace += float(np.trace(_affine_solve(fb.T @ uf, small, "gcv")))
    if not np.isfinite(trace):
        raise NumericalError("gcv: full-map trace is not finite")
    return trace


def _score_from_parts(y: np.ndarray, fitted: np.ndarray, trace: float) -> float:
    n = y.shape[0]
    denom = 1.0 - trace / n
    if denom <= 0.0:
        return np.inf
    resid = fitted - y
    return float(resid @ resid / n) / denom**2


def gcv_score(gram: GramSet, cfg: FitConfig, dof: str = "smoother") -> float:
    """GCV score of one (lam, xi) pair under the configured variant."""
    if dof not in DOF_MODES:
        raise ValidationError(f"gcv_score: dof must be one of {DOF_MODES}")
    prep = _prepare_lambda(gram, cfg.lam, cfg.variant)
    trace = prep.trace_h if dof == "smoother" else _full_map_trace(gram, prep, cfg.xi)
    if trace >= gram.n:
        return np.inf
    result = _fit_prepared(gram, prep, cfg)
    return _score_from_parts(gram.y, result.fitted, trace)


@dataclass
class GcvGrid:
    """Score surface over the penalty grid with the selected pair."""

    variant: str
    lambda_values: np.ndarray
    xi_values: np.ndarray
    scores: np.ndarray
    traces: np.ndarray
    best_index: tuple[int, int]
    failures: list = field(default_factory=list)

    @property
    def best_lam(self) -> float:
        return float(self.lambda_values[self.best_index[0]])

    @property
    def best_xi(self) -> float:
        return float(self.xi_values[self.best_index[1]])

    @property
    def best_config(self) -> FitConfig:
        return FitConfig(lam=self.best_lam, xi=self.best_xi, variant=self.variant)


def _check_grid(values, name: str) -> np.ndarray:
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise ValidationError(f"grid_search: empty {name} grid")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValidationError(f"grid_search: {name} grid must be positive and finite")
    return arr


def grid_search(
    gram: GramSet,
    lambda_values=None,
    xi_values=None,
    variant: str = "seminorm",
    dof: str = "smoother",
) -> GcvGrid:
    """Exhaustive GCV search over the (lam, xi) grid.

    Pairs whose fit fails are recorded and scored +inf; ties between
    equal scores resolve toward the larger (lam, xi).
    """
    lams = _check_grid(default_grid() if lambda_values is None else lambda_values, "lambda")
    xis = _check_grid(default_grid() if xi_values is None else xi_values, "xi")
    if dof not in DOF_MODES:
        raise ValidationError(f"grid_search: dof must be one of {DOF_MODES}")
    scores = np.full((lams.size, xis.size), np.inf)
    traces = np.full((lams.size, xis.size), np.nan)
    failures = []
    for i, lam in enumerate(lams):
        try:
            prep = _prepare_lambda(gram, lam, variant)
        except NumericalError as exc:
            failures.extend((i, j, str(exc)) for j in range(xis.size))
            continue
        for j, xi in enumerate(xis):
            cfg = FitConfig(lam=lam, xi=xi, variant=variant)
            try:
                trace = prep.trace_h if dof == "smoother" else _full_map_trace(gram, prep, xi)
                traces[i, j] = trace
                if trace >= gram.n:
                    continue
                result = _fit_prepared(gram, prep, cfg)
                scores[i, j] = _score_from_parts(gram.y, result.fitted, trace)
            except NumericalError as exc:
                failures.append((i, j, str(exc)))
    if len(failures) == scores.size:
        raise NumericalError("grid_search: the fit failed at every grid pair")
    # visit large lam first, then large xi, so strict improvement keeps
    # the lexicographically larger pair on ties
    best = None
    best_score = np.inf
    for i in reversed(range(lams.size)):
        for j in reversed(range(xis.size)):
            if best is None or scores[i, j] < best_score:
                best = (i, j)
                best_score = scores[i, j]
    return GcvGrid(variant=variant, lambda_values=lams, xi_values=xis,
                   scores=scores, traces=traces, best_index=best, failures=failures)


def write_gcv_surface(grid: GcvGrid, path, meta: dict | None = None) -> None:
    """Score surface as CSV with columns lambda, xi, gcv, trace."""
    rows = []
    for i, lam in enumerate(grid.lambda_values):
        for j, xi in enumerate(grid.xi_values):
            rows.append([fmt(lam), fmt(xi), fmt(grid.scores[i, j]), fmt(grid.traces[i, j])])
    write_csv(path, ["lambda", "xi", "gcv", "trace"], rows, meta)
