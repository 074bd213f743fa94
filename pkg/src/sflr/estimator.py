"""Closed-form solvers for the double-penalized least squares fit.

The model is Y_i = int X_i(t) b(t) dt + g(Z_i) + e_i with both unknown
components represented through kernels: the functional coefficient b
through kernel sections against the observed curves, the scalar
component g through kernel sections at the observed covariates.  Two
variants are implemented.

Kernel variant ("kernel"): both components penalized through the full
kernel norm.  With Sigma and G the two Gram matrices, the objective over
coefficient vectors (c, eta) is

    ||Y - Sigma c - G eta||_n^2 + lam^2 c' Sigma c + xi^2 eta' G eta,

where ||v||_n^2 = v'v / n.  Profiling out c at fixed eta gives
c = W^{-1}(Y - G eta) with W = Sigma + n lam^2 I and leaves the exact
profiled criterion  lam^2 u' W^{-1} u + xi^2 eta' G eta,  so the
stationary eta solves

    [G (I - H) G + n xi^2 G] eta = G (I - H) Y,      H = Sigma W^{-1},

using the identity I - H = n lam^2 W^{-1}.  The implementation solves
the G-cancelled system [(I - H) G + n xi^2 I] eta = (I - H) Y instead:
its solution satisfies the display above with the bracket an exact
zero, and its matrix has eigenvalues bounded below by n xi^2, so the
stage stays well posed when G is singular (tied covariate values)
where the premultiplied form squares the conditioning.  Every returned
fit is an exact stationary point of the objective; the smoother H is
likewise assembled in the shifted SPD form I - n lam^2 W^{-1} rather
than through Sigma (Sigma' Sigma + n lam^2 Sigma)^+ Sigma', which is
algebraically identical whenever Sigma is invertible but stays well
posed when it is not.

Seminorm variant ("seminorm"): only the curvature seminorms are
penalized, and affine null spaces (d1 + d2 t for b, l1 + l2 z for g)
enter unpenalized.  With A the two-column functional null-space design,
N = [1 Z G], theta = (l1, l2, eta')', and L = blockdiag(0, G):

    ||Y - A d - Sigma c - N theta||_n^2 + lam^2 c' Sigma c
        + xi^2 theta' L theta.

Profiling (d, c) gives the classic partial-spline solution d =
(A'W^{-1}A)^{-1} A'W^{-1} v, c = W^{-1}(v - A d) for v = Y - N theta,
with fitted functional part H v where now I - H = n lam^2 Q and
Q = W^{-1} - W^{-1}A (A'W^{-1}A)^{-1} A'W^{-1}.  The exact profiled
stationarity condition for theta is

    [N'(I - H) N + n xi^2 L] theta = N'(I - H) Y,

solved through the same cancelled form: with F = [1 Z] the affine
columns, eta = [(I - H) G + n xi^2 I]^{-1} (I - H)(Y - F l) satisfies
the eta rows with G applied to an exact zero, under which the affine
rows reduce to the 2 x 2 system F' eta = 0 in l.  H satisfies H A = A
exactly, so affine-representable functional signal passes through the
smoother untouched.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .functional_data import QuadratureRule, build_A, build_sigma, simpson_rule
from .kernels import BernoulliKernel, gram_matrix, pairwise

__all__ = [
    "FitConfig",
    "GramSet",
    "KernelFit",
    "SemiNormFit",
    "Prediction",
    "make_gram_set",
    "fit",
    "fit_kernel_penalty",
    "fit_seminorm",
    "oracle_fit_beta",
    "oracle_fit_g",
    "smoother_matrix",
    "predict",
    "predict_functional",
    "predict_nonparametric",
    "objective_value",
    "objective_gradient",
]

VARIANTS = ("kernel", "seminorm")

# relative ridge added to a diagonal when a factorization fails
JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class FitConfig:
    """Penalty levels and variant selector.

    lam and xi must be positive; oracle fits record the parameter they
    do not use as inf.
    """

    lam: float
    xi: float
    variant: str = "seminorm"

    def __post_init__(self):
        if not (self.lam > 0 and self.xi > 0):
            raise ValidationError("FitConfig: lam and xi must be positive")
        if self.variant not in VARIANTS:
            raise ValidationError(f"FitConfig: variant must be one of {VARIANTS}")


@dataclass
class GramSet:
    """Precomputed matrices for one dataset.

    sigma and gram_z are the functional and scalar Gram matrices; a and
    nmat are the seminorm null-space designs (None when the scalar
    covariate is multivariate).  kernel_curves holds Kg (W X)' on the
    grid so new curves can be scored against the representer basis.
    """

    y: np.ndarray
    z: np.ndarray
    sigma: np.ndarray
    gram_z: np.ndarray
    rule: QuadratureRule
    kernel_z: object
    kernel_curves: np.ndarray = field(repr=False)
    a: np.ndarray | None = None
    nmat: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass
class KernelFit:
    config: FitConfig
    c: np.ndarray
    eta: np.ndarray
    fitted: np.ndarray
    gram: GramSet


@dataclass
class SemiNormFit:
    config: FitConfig
    d: np.ndarray
    c: np.ndarray
    l: np.ndarray
    eta: np.ndarray
    fitted: np.ndarray
    gram: GramSet

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.l, self.eta])


@dataclass
class Prediction:
    total: np.ndarray | float
    functional: np.ndarray | float
    nonparametric: np.ndarray | float


def make_gram_set(
    curves,
    z,
    y,
    kernel_t=BernoulliKernel(),
    kernel_z=BernoulliKernel(),
    rule: QuadratureRule | None = None,
    kernel_grid: np.ndarray | None = None,
) -> GramSet:
    """Assemble the Gram matrices and designs for one dataset.

    curves is (n, M) on the rule's grid, z is (n,) scalar or (n, p), and
    y is (n,).  The seminorm designs are built only for scalar z.
    """
    if rule is None:
        rule = simpson_rule()
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float)
    n = curves.shape[0]
    if y.shape[0] != n:
        raise ValidationError(f"make_gram_set: {n} curves but {y.shape[0]} responses")
    if z.shape[0] != n:
        raise ValidationError(f"make_gram_set: {n} curves but {z.shape[0]} covariates")
    if not np.all(np.isfinite(y)):
        raise ValidationError("make_gram_set: responses must be finite")
    if n < 1:
        raise ValidationError("make_gram_set: need at least one observation")
    if kernel_grid is None:
        kernel_grid = gram_matrix(kernel_t, rule.grid)
    sigma = build_sigma(curves, kernel_t, rule, kernel_grid=kernel_grid)
    gz = gram_matrix(kernel_z, z)
    weighted = curves * rule.weights
    kernel_curves = kernel_grid @ weighted.T
    a = nmat = None
    if z.ndim == 1:
        a = build_A(curves, rule)
        nmat = np.column_stack([np.ones(n), z, gz])
    return GramSet(
        y=y, z=z, sigma=sigma, gram_z=gz, rule=rule, kernel_z=kernel_z,
        kernel_curves=kernel_curves, a=a, nmat=nmat,
    )


# ---------------------------------------------------------------------------
# linear solves with a single documented fallback

def _jitter(mat: np.ndarray) -> float:
    scale = np.trace(mat) / mat.shape[0]
    return JITTER_SCALE * (scale if scale > 0 else 1.0)


def _spd_solver(mat: np.ndarray, context: str):
    """Cholesky solve callable for an SPD matrix, with one ridge retry."""
    for attempt in range(2):
        try:
            factor = scipy.linalg.cho_factor(mat, check_finite=False)
        except scipy.linalg.LinAlgError:
            if attempt == 0:
                mat = mat + _jitter(mat) * np.eye(mat.shape[0])
                continue
            raise NumericalError(f"{context}: matrix not positive definite after ridge fallback")
        return lambda b: scipy.linalg.cho_solve(factor, b, check_finite=False)
    raise NumericalError(f"{context}: unreachable")


def _affine_solve(m2: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    """Solve the 2 x 2 affine-block system, min-norm on exact collinearity."""
    try:
        return np.linalg.solve(m2, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(m2, rhs, rcond=None)
        if np.all(np.isfinite(sol)):
            return sol
    raise NumericalError(f"{context}: affine block is singular")


# ---------------------------------------------------------------------------
# per-lambda preparation shared by fits, smoothers, and grid search

@dataclass
class _PreparedLambda:
    variant: str
    lam: float
    nlam2: float
    w_solve: object
    ih: np.ndarray          # I - H, symmetric
    trace_h: float
    wia: np.ndarray | None = None       # W^{-1} A
    awa_solve: object | None = None     # solve with A'W^{-1}A


def _prepare_lambda(gram: GramSet, lam: float, variant: str) -> _PreparedLambda:
    if not np.isfinite(lam):
        raise ValidationError("fit: lam must be finite")
    n = gram.n
    nlam2 = n * lam * lam
    w = gram.sigma + nlam2 * np.eye(n)
    w_solve = _spd_solver(w, "fit: Sigma + n lam^2 I")
    winv = w_solve(np.eye(n))
    if variant == "kernel":
        ih = nlam2 * winv
        ih = (ih + ih.T) / 2.0
    elif variant == "seminorm":
        if gram.a is None:
            raise ValidationError("seminorm variant needs a scalar covariate")
        if n < 2:
            raise ValidationError("seminorm variant needs at least two observations")
        wia = w_solve(gram.a)
        awa = gram.a.T @ wia
        try:
            awa_solve = _spd_solver(awa, "fit: A'W^{-1}A")
        except NumericalError as exc:
            raise NumericalError(
                "fit: null-space design A is rank deficient "
                "(curves share identical first two moments)"
            ) from exc
        q = winv - wia @ awa_solve(wia.T)
        ih = nlam2 * ((q + q.T) / 2.0)
    else:
        raise ValidationError(f"fit: unknown variant {variant!r}")
    prep = _PreparedLambda(
        variant=variant, lam=lam, nlam2=nlam2, w_solve=w_solve, ih=ih,
        trace_h=n - float(np.trace(ih)),
    )
    if variant == "seminorm":
        prep.wia = wia
        prep.awa_solve = awa_solve
    return prep


def _stage_solver(gram: GramSet, prep: _PreparedLambda, xi: float, context: str):
    """LU solve callable for the cancelled smoothing-stage matrix.

    The matrix is (I - H)G + n xi^2 I, nonsingular for every xi > 0
    because (I - H)G shares its spectrum with the PSD product
    G^{1/2}(I - H)G^{1/2}; no fallback is needed.
    """
    n = gram.n
    p = prep.ih @ gram.gram_z
    p[np.diag_indices(n)] += n * xi * xi
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(p, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"{context}: smoothing-stage factorization failed") from exc
    return lambda b: scipy.linalg.lu_solve(lu, b, check_finite=False)


def _second_stage_solve(gram: GramSet, prep: _PreparedLambda, xi: float) -> np.ndarray:
    p_solve = _stage_solver(gram, prep, xi, "fit")
    if prep.variant == "kernel":
        coef = p_solve(prep.ih @ gram.y)
    else:
        fb = gram.nmat[:, :2]
        sol = p_solve(prep.ih @ np.column_stack([gram.y, fb]))
        uy, uf = sol[:, 0], sol[:, 1:]
        l = _affine_solve(fb.T @ uf, fb.T @ uy, "fit")
        coef = np.concatenate([l, uy - uf @ l])
    if not np.all(np.isfinite(coef)):
        raise NumericalError("fit: smoothing stage produced non-finite coefficients")
    return coef


def _fit_prepared(gram: GramSet, prep: _PreparedLambda, cfg: FitConfig):
    if not np.isfinite(cfg.xi):
        raise ValidationError("fit: xi must be finite")
    coef = _second_stage_solve(gram, prep, cfg.xi)
    if prep.variant == "kernel":
        eta = coef
        u = gram.y - gram.gram_z @ eta
        c = prep.w_solve(u)
        fitted = (u - prep.nlam2 * c) + gram.gram_z @ eta
        return KernelFit(config=cfg, c=c, eta=eta, fitted=fitted, gram=gram)
    theta = coef
    v = gram.y - gram.nmat @ theta
    d = prep.awa_solve(prep.wia.T @ v)
    c = prep.w_solve(v - gram.a @ d)
    fitted = (v - prep.nlam2 * c) + gram.nmat @ theta
    return SemiNormFit(config=cfg, d=d, c=c, l=theta[:2], eta=theta[2:],
                       fitted=fitted, gram=gram)


def fit(gram: GramSet, cfg: FitConfig):
    """Dispatch to the configured variant."""
    prep = _prepare_lambda(gram, cfg.lam, cfg.variant)
    return _fit_prepared(gram, prep, cfg)


def fit_kernel_penalty(gram: GramSet, cfg: FitConfig) -> KernelFit:
    """Exact minimizer of the kernel-variant objective."""
    if cfg.variant != "kernel":
        raise ValidationError("fit_kernel_penalty: config variant must be 'kernel'")
    return fit(gram, cfg)


def fit_seminorm(gram: GramSet, cfg: FitConfig) -> SemiNormFit:
    """Exact minimizer of the seminorm-variant objective."""
    if cfg.variant != "seminorm":
        raise ValidationError("fit_seminorm: config variant must be 'seminorm'")
    return fit(gram, cfg)


def smoother_matrix(gram: GramSet, cfg: FitConfig) -> np.ndarray:
    """The functional-stage smoother H mapping v to the fitted Ad + Sigma c."""
    prep = _prepare_lambda(gram, cfg.lam, cfg.variant)
    return np.eye(gram.n) - prep.ih


def oracle_fit_beta(gram: GramSet, lam: float, g0_values) -> SemiNormFit:
    """Functional-only fit against Y - g0(Z), the true g supplied.

    Runs the seminorm (d, c) stage on the corrected response; the
    returned fit has l = eta = 0 and records xi as inf.
    """
    g0_values = np.asarray(g0_values, dtype=float).ravel()
    if g0_values.shape[0] != gram.n:
        raise ValidationError("oracle_fit_beta: g0 values must match the sample size")
    prep = _prepare_lambda(gram, lam, "seminorm")
    yb = gram.y - g0_values
    d = prep.awa_solve(prep.wia.T @ yb)
    c = prep.w_solve(yb - gram.a @ d)
    fitted = yb - prep.nlam2 * c
    cfg = FitConfig(lam=lam, xi=np.inf, variant="seminorm")
    return SemiNormFit(config=cfg, d=d, c=c, l=np.zeros(2), eta=np.zeros(gram.n),
                       fitted=fitted, gram=gram)


def oracle_fit_g(gram: GramSet, xi: float, functional_values) -> SemiNormFit:
    """Scalar-only smoothing fit against Y - int X b0, the true b0 supplied.

    Minimizes ||Y - int X b0 - N theta||_n^2 + xi^2 eta' G eta through
    the cancelled SPD system [G + n xi^2 I]; the returned fit has
    d = c = 0 and records lam as inf.
    """
    if not np.isfinite(xi):
        raise ValidationError("oracle_fit_g: xi must be finite")
    fvals = np.asarray(functional_values, dtype=float).ravel()
    if fvals.shape[0] != gram.n:
        raise ValidationError("oracle_fit_g: functional values must match the sample size")
    if gram.nmat is None:
        raise ValidationError("oracle_fit_g needs a scalar covariate")
    n = gram.n
    yg = gram.y - fvals
    p_solve = _spd_solver(gram.gram_z + n * xi * xi * np.eye(n),
                          "oracle_fit_g: G + n xi^2 I")
    fb = gram.nmat[:, :2]
    uy = p_solve(yg)
    uf = p_solve(fb)
    l = _affine_solve(fb.T @ uf, fb.T @ uy, "oracle_fit_g")
    eta = uy - uf @ l
    cfg = FitConfig(lam=np.inf, xi=xi, variant="seminorm")
    return SemiNormFit(config=cfg, d=np.zeros(2), c=np.zeros(n), l=l, eta=eta,
                       fitted=fb @ l + gram.gram_z @ eta, gram=gram)


# ---------------------------------------------------------------------------
# prediction and the objective

def predict_functional(fit_result, x_new) -> np.ndarray:
    """int X_new(t) bhat(t) dt for a batch of curves on the training grid."""
    gram = fit_result.gram
    xb = np.atleast_2d(np.asarray(x_new, dtype=float))
    if xb.shape[1] != gram.rule.size:
        raise ValidationError("predict: curves must be sampled on the training grid")
    weighted = xb * gram.rule.weights
    out = (weighted @ gram.kernel_curves) @ fit_result.c
    if isinstance(fit_result, SemiNormFit):
        out = out + weighted.sum(axis=1) * fit_result.d[0] \
            + (weighted @ gram.rule.grid) * fit_result.d[1]
    return out


def predict_nonparametric(fit_result, z_new) -> np.ndarray:
    """ghat(z) for a batch of covariate points."""
    gram = fit_result.gram
    zb = np.asarray(z_new, dtype=float)
    zb = zb.reshape(-1) if gram.z.ndim == 1 else zb.reshape(-1, gram.z.shape[1])
    out = pairwise(gram.kernel_z, zb, gram.z) @ fit_result.eta
    if isinstance(fit_result, SemiNormFit):
        out = out + fit_result.l[0] + fit_result.l[1] * zb
    return out


def predict(fit_result, x_new, z_new) -> Prediction:
    """Score new observations with a fitted model.

    x_new is one curve (M,) or a batch (k, M) on the training grid;
    z_new is the matching scalar covariate (or (k, p) points for the
    kernel variant with multivariate z).  Returns the total prediction
    and its functional and nonparametric parts.
    """
    single = np.asarray(x_new).ndim == 1
    functional = predict_functional(fit_result, x_new)
    nonparam = predict_nonparametric(fit_result, z_new)
    if nonparam.shape[0] != functional.shape[0]:
        raise ValidationError("predict: curve and covariate batches differ in length")
    total = functional + nonparam
    if single:
        return Prediction(float(total[0]), float(functional[0]), float(nonparam[0]))
    return Prediction(total, functional, nonparam)


def _residual(gram: GramSet, c, eta, d, l) -> np.ndarray:
    r = gram.y - gram.sigma @ c - gram.gram_z @ eta
    if d is not None:
        r = r - gram.a @ d - l[0] - l[1] * gram.z
    return r


def _check_blocks(gram: GramSet, cfg: FitConfig, c, eta, d, l):
    c = np.asarray(c, dtype=float).ravel()
    eta = np.asarray(eta, dtype=float).ravel()
    if c.shape[0] != gram.n or eta.shape[0] != gram.n:
        raise ValidationError("objective: c and eta must have length n")
    if cfg.variant == "seminorm":
        if d is None or l is None:
            raise ValidationError("objective: seminorm variant needs d and l blocks")
        d = np.asarray(d, dtype=float).ravel()
        l = np.asarray(l, dtype=float).ravel()
        if d.shape[0] != 2 or l.shape[0] != 2:
            raise ValidationError("objective: d and l must have length 2")
    else:
        d = l = None
    return c, eta, d, l


def objective_value(gram: GramSet, cfg: FitConfig, *, c, eta, d=None, l=None) -> float:
    """Penalized least-squares objective at the given coefficient blocks."""
    c, eta, d, l = _check_blocks(gram, cfg, c, eta, d, l)
    r = _residual(gram, c, eta, d, l)
    value = r @ r / gram.n
    value += cfg.lam**2 * (c @ gram.sigma @ c) + cfg.xi**2 * (eta @ gram.gram_z @ eta)
    return float(value)


def objective_gradient(gram: GramSet, cfg: FitConfig, *, c, eta, d=None, l=None) -> np.ndarray:
    """Stacked gradient of the objective, in (d, c, l, eta) order."""
    c, eta, d, l = _check_blocks(gram, cfg, c, eta, d, l)
    r = _residual(gram, c, eta, d, l)
    scale = -2.0 / gram.n
    gc = scale * (gram.sigma @ r) + 2.0 * cfg.lam**2 * (gram.sigma @ c)
    geta = scale * (gram.gram_z @ r) + 2.0 * cfg.xi**2 * (gram.gram_z @ eta)
    if cfg.variant == "kernel":
        return np.concatenate([gc, geta])
    gd = scale * (gram.a.T @ r)
    gl = scale * np.array([r.sum(), r @ gram.z])
    return np.concatenate([gd, gc, gl, geta])
