"""Curves on a shared grid, quadrature, and the functional Gram blocks.

Curves are stored as rows of an ``(n, M)`` array of samples on one
uniform grid over [0, 1] with an odd number of points, so composite
Simpson weights apply.  All integrals against curves reduce to weighted
dot products with the rule's weight vector, and the functional Gram
matrix is assembled as

    Sigma = (W X)' Kg (W X)

where ``W`` is the diagonal weight matrix and ``Kg`` the kernel Gram
matrix over the grid itself.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kernels import gram_matrix

__all__ = [
    "QuadratureRule",
    "simpson_rule",
    "integrate",
    "functional_dot",
    "CosineExpansion",
    "cosine_basis",
    "build_sigma",
    "build_A",
    "read_curves_csv",
    "read_matrix_csv",
]

DEFAULT_GRID_SIZE = 201


@dataclass(frozen=True)
class QuadratureRule:
    """Uniform grid on [0, 1] with composite Simpson weights."""

    grid: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.grid.shape[0]


def simpson_rule(m: int = DEFAULT_GRID_SIZE) -> QuadratureRule:
    """Composite Simpson rule on m uniform points over [0, 1].

    m must be odd and at least 3; the weights integrate cubics on the
    grid exactly and sum to 1.
    """
    if not (isinstance(m, (int, np.integer)) and m >= 3 and m % 2 == 1):
        raise ValidationError(f"simpson_rule: grid size must be odd and >= 3, got {m}")
    grid = np.linspace(0.0, 1.0, m)
    h = 1.0 / (m - 1)
    w = np.full(m, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return QuadratureRule(grid=grid, weights=w * (h / 3.0))


def _check_values(rule: QuadratureRule, values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape[-1] != rule.size:
        raise ValidationError(
            f"{name}: expected {rule.size} grid samples, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: samples must be finite")
    return arr


def integrate(values, rule: QuadratureRule) -> float | np.ndarray:
    """Integral over [0, 1] of one curve (1-d) or each row (2-d)."""
    arr = _check_values(rule, values, "integrate")
    return arr @ rule.weights


def functional_dot(x, y, rule: QuadratureRule) -> float | np.ndarray:
    """Inner product int x(t) y(t) dt under the rule; x may be (n, M)."""
    xa = _check_values(rule, x, "functional_dot")
    ya = _check_values(rule, y, "functional_dot")
    return (xa * ya) @ rule.weights


def cosine_basis(points, nbasis: int) -> np.ndarray:
    """Design matrix of the cosine system on arbitrary points in [0, 1].

    Column 1 is the constant function, column k+1 is sqrt(2) cos(k pi t).
    """
    pts = np.asarray(points, dtype=float).ravel()
    if not np.all(np.isfinite(pts)):
        raise ValidationError("cosine_basis: points must be finite")
    out = np.empty((pts.size, nbasis))
    out[:, 0] = 1.0
    for k in range(1, nbasis):
        out[:, k] = np.sqrt(2.0) * np.cos(k * np.pi * pts)
    return out


@dataclass(frozen=True)
class CosineExpansion:
    """Function on [0, 1] given by coefficients on the cosine system."""

    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coefficients, dtype=float)
        if arr.ndim != 1 or not 1 <= arr.size <= 50:
            raise ValidationError("CosineExpansion: need between 1 and 50 coefficients")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("CosineExpansion: coefficients must be finite")
        object.__setattr__(self, "coefficients", arr)

    def evaluate(self, points) -> np.ndarray:
        """Pointwise values at arbitrary points in [0, 1]."""
        return cosine_basis(points, self.coefficients.size) @ self.coefficients

    def render(self, rule: QuadratureRule) -> np.ndarray:
        """Samples on the rule's grid."""
        return self.evaluate(rule.grid)


def build_sigma(curves, kernel, rule: QuadratureRule, kernel_grid: np.ndarray | None = None) -> np.ndarray:
    """Functional Gram matrix Sigma[i, j] = int int X_i(s) K(s, t) X_j(t) ds dt.

    Parameters
    ----------
    curves : array_like, shape (n, M)
        Curve samples on the rule's grid.
    kernel : kernel object
        Kernel over the curve domain [0, 1].
    rule : QuadratureRule
        Shared grid and weights.
    kernel_grid : ndarray, optional
        Precomputed ``gram_matrix(kernel, rule.grid)``; callers looping
        over many datasets on one grid can pass it to skip reassembly.

    Returns
    -------
    numpy.ndarray, shape (n, n)
        Bit-exactly symmetric, positive semidefinite up to roundoff.
    """
    arr = np.atleast_2d(_check_values(rule, curves, "build_sigma"))
    if kernel_grid is None:
        kernel_grid = gram_matrix(kernel, rule.grid)
    weighted = arr * rule.weights
    full = weighted @ kernel_grid @ weighted.T
    upper = np.triu(full)
    return upper + np.triu(full, 1).T


def build_A(curves, rule: QuadratureRule) -> np.ndarray:
    """Null-space design: columns int X_i(t) dt and int t X_i(t) dt."""
    arr = np.atleast_2d(_check_values(rule, curves, "build_A"))
    return np.column_stack([arr @ rule.weights, arr @ (rule.weights * rule.grid)])


def read_matrix_csv(path) -> np.ndarray:
    """Numeric CSV as a 2-d array; lines starting with '#' are skipped."""
    try:
        arr = np.loadtxt(path, delimiter=",", comments="#", ndmin=2, dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: could not parse numeric CSV ({exc})") from exc
    if arr.size == 0:
        raise ValidationError(f"{path}: no data rows")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{path}: non-finite entries")
    return arr


def read_curves_csv(path) -> tuple[np.ndarray, QuadratureRule]:
    """Load curves (one row per observation) from a numeric CSV.

    The grid is implied: M columns map to M uniform points on [0, 1],
    and M must be odd so the Simpson rule applies.
    """
    arr = read_matrix_csv(path)
    m = arr.shape[1]
    if m % 2 == 0 or m < 3:
        raise ValidationError(
            f"{path}: {m} columns; the implied uniform grid needs an odd count >= 3"
        )
    return arr, simpson_rule(m)
