"""Reproducing kernels for the functional and scalar model components.

Three kernel families are provided:

* ``BernoulliKernel`` -- the second-order Sobolev kernel on [0, 1] built
  from Bernoulli polynomials,

      K(s, t) = B2(s) B2(t) / (2!)^2 - B4(|s - t|) / 4!,

  used both for coefficient functions on the curve domain and for a
  scalar covariate living in [0, 1].
* ``GaussianKernel`` -- exp(-||z - w||^2 / bandwidth^2) on R^p.
* ``PolynomialKernel`` -- (z'w + 1)^degree on R^p.

Gram matrices are assembled by filling the upper triangle and mirroring
it, so symmetry holds bit for bit regardless of the evaluation order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "BernoulliKernel",
    "GaussianKernel",
    "PolynomialKernel",
    "bernoulli_poly",
    "kernel_eval",
    "pairwise",
    "gram_matrix",
]


def bernoulli_poly(order: int, x) -> np.ndarray | float:
    """Evaluate the Bernoulli polynomial B2 or B4 on [0, 1].

    Parameters
    ----------
    order : int
        Polynomial order; only 2 and 4 are supported.
    x : float or array_like
        Evaluation points, all inside [0, 1].

    Returns
    -------
    float or numpy.ndarray
        B2(x) = x^2 - x + 1/6 or B4(x) = x^4 - 2x^3 + x^2 - 1/30.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("bernoulli_poly: arguments must be finite")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValidationError("bernoulli_poly: arguments must lie in [0, 1]")
    if order == 2:
        out = arr * arr - arr + 1.0 / 6.0
    elif order == 4:
        out = arr**4 - 2.0 * arr**3 + arr * arr - 1.0 / 30.0
    else:
        raise ValidationError(f"bernoulli_poly: unsupported order {order}")
    return out if arr.ndim else float(out)


def _as_points(x) -> np.ndarray:
    # normalize point sets to shape (m, p)
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValidationError("kernel points must be scalars, vectors, or (m, p) arrays")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("kernel points must be finite")
    return arr


@dataclass(frozen=True)
class BernoulliKernel:
    """Second-order Sobolev kernel on [0, 1] from Bernoulli polynomials."""

    def _check_domain(self, pts: np.ndarray) -> None:
        if pts.shape[1] != 1:
            raise ValidationError("BernoulliKernel is defined on [0, 1], got multivariate points")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValidationError("BernoulliKernel points must lie in [0, 1]")

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = _as_points(a)
        b = _as_points(b)
        self._check_domain(a)
        self._check_domain(b)
        s = a[:, 0]
        t = b[:, 0]
        b2s = bernoulli_poly(2, s)
        b2t = bernoulli_poly(2, t)
        gap = np.abs(s[:, None] - t[None, :])
        return np.outer(b2s, b2t) / 4.0 - bernoulli_poly(4, gap) / 24.0


@dataclass(frozen=True)
class GaussianKernel:
    """Radial kernel exp(-||z - w||^2 / bandwidth^2)."""

    bandwidth: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValidationError("GaussianKernel bandwidth must be positive")

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = _as_points(a)
        b = _as_points(b)
        if a.shape[1] != b.shape[1]:
            raise ValidationError("point sets have mismatched dimensions")
        diff = a[:, None, :] - b[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        return np.exp(-sq / self.bandwidth**2)


@dataclass(frozen=True)
class PolynomialKernel:
    """Inhomogeneous polynomial kernel (z'w + 1)^degree."""

    degree: int = 1

    def __post_init__(self):
        if not (isinstance(self.degree, (int, np.integer)) and self.degree >= 1):
            raise ValidationError("PolynomialKernel degree must be an integer >= 1")

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = _as_points(a)
        b = _as_points(b)
        if a.shape[1] != b.shape[1]:
            raise ValidationError("point sets have mismatched dimensions")
        return (a @ b.T + 1.0) ** self.degree


Kernel = BernoulliKernel | GaussianKernel | PolynomialKernel


def kernel_eval(kernel, s, t) -> float:
    """Evaluate a kernel at a single pair of points."""
    return float(kernel.pairwise(s, t)[0, 0])


def pairwise(kernel, a, b) -> np.ndarray:
    """Cross-evaluation matrix K[i, j] = kernel(a_i, b_j)."""
    return kernel.pairwise(a, b)


def gram_matrix(kernel, points) -> np.ndarray:
    """Symmetric Gram matrix of a kernel over one point set.

    The upper triangle is computed and mirrored, so the result is
    bit-exactly symmetric.  Rank deficiency (duplicate points) is
    permitted here; downstream solvers carry the fallback.
    """
    full = kernel.pairwise(points, points)
    upper = np.triu(full)
    return upper + np.triu(full, 1).T
