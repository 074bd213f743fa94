"""Shared test fixtures: brute-force reference minimizer and instance factory.

The brute-force path never touches the closed-form solver internals: it
stacks the quadratic objective directly and solves the stationarity system
with a dense least-squares call, so agreement with the package is evidence
rather than tautology.
"""
import numpy as np

from sflr.estimator import GramSet, make_gram_set
from sflr.functional_data import cosine_basis, simpson_rule
from sflr.kernels import GaussianKernel, PolynomialKernel

# a direction with curvature sigma (relative to the largest Hessian
# eigenvalue) is pinned by the normal equations only to about
# grad_resolution / sigma ~ 1e-11 / sigma in float64, so coefficients
# cannot be compared to 1e-6 below sigma ~ 1e-5; such directions are
# null at working precision
NULL_EIG_TOL = 1e-5


def random_instance(seed: int, n: int, z_kernel: str = "gaussian",
                    duplicates: bool = False, grid_size: int = 21) -> GramSet:
    """Small random dataset wrapped in a GramSet.

    duplicates=True repeats the first observation's curve and covariate so
    Sigma and G are exactly singular.
    """
    rng = np.random.default_rng(seed)
    rule = simpson_rule(grid_size)
    basis = cosine_basis(rule.grid, 4)
    x = rng.standard_normal((n, 4)) @ basis.T
    z = rng.uniform(0.0, 1.0, size=n)
    y = rng.standard_normal(n)
    if duplicates and n >= 2:
        x[1] = x[0]
        z[1] = z[0]
    kernel = GaussianKernel(bandwidth=0.7) if z_kernel == "gaussian" else PolynomialKernel(degree=2)
    return make_gram_set(x, z, y, rule=rule, kernel_z=kernel)


def _stack(gram: GramSet, lam: float, xi: float, variant: str):
    n = gram.y.size
    if variant == "kernel":
        design = np.hstack([gram.sigma, gram.gram_z])
        penalty = np.zeros((2 * n, 2 * n))
        penalty[:n, :n] = lam**2 * gram.sigma
        penalty[n:, n:] = xi**2 * gram.gram_z
    else:
        ones = np.ones((n, 1))
        design = np.hstack([gram.a, gram.sigma, ones, gram.z[:, None], gram.gram_z])
        penalty = np.zeros((2 * n + 4, 2 * n + 4))
        penalty[2:n + 2, 2:n + 2] = lam**2 * gram.sigma
        penalty[n + 4:, n + 4:] = xi**2 * gram.gram_z
    return design, penalty


def brute_force_objective(gram: GramSet, lam: float, xi: float,
                          variant: str, params: np.ndarray) -> float:
    design, penalty = _stack(gram, lam, xi, variant)
    res = gram.y - design @ params
    return float(res @ res / gram.y.size + params @ penalty @ params)


def brute_force_fit(gram: GramSet, lam: float, xi: float, variant: str):
    """Minimum-norm minimizer of the stacked quadratic, plus its objective.

    Solved as one augmented least-squares problem: with penalty root R
    (R'R = P) the objective is |[y/sqrt(n); 0] - [B/sqrt(n); R] p|^2, so a
    single SVD solve finds the optimum without forming normal equations.
    """
    design, penalty = _stack(gram, lam, xi, variant)
    n = gram.y.size
    eigvals, eigvecs = np.linalg.eigh(penalty)
    nonneg = np.clip(eigvals, 0.0, None)
    root = np.sqrt(nonneg)[:, None] * eigvecs.T
    aug = np.vstack([design / np.sqrt(n), root])
    target = np.concatenate([gram.y / np.sqrt(n), np.zeros(penalty.shape[0])])
    params, *_ = np.linalg.lstsq(aug, target, rcond=None)
    return params, brute_force_objective(gram, lam, xi, variant, params)


def pack_fit(fit_result) -> np.ndarray:
    """Coefficient blocks of a fit, ordered to match the stacked design."""
    if fit_result.config.variant == "kernel":
        return np.concatenate([fit_result.c, fit_result.eta])
    return np.concatenate([fit_result.d, fit_result.c, fit_result.l, fit_result.eta])


def projected_gap(gram: GramSet, lam: float, xi: float, variant: str,
                  packed_a: np.ndarray, packed_b: np.ndarray) -> float:
    """Infinity norm of the coefficient difference outside the null space.

    Singular Sigma or G leaves directions the objective cannot see; any two
    minimizers may disagree there, so the comparison projects them out.
    """
    design, penalty = _stack(gram, lam, xi, variant)
    hess = design.T @ design / gram.y.size + penalty
    eigvals, eigvecs = np.linalg.eigh(hess)
    keep = eigvecs[:, eigvals > NULL_EIG_TOL * eigvals.max()]
    delta = packed_a - packed_b
    return float(np.max(np.abs(keep @ (keep.T @ delta))))
