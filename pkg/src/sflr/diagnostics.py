"""Empirical eigenvalue decay of the Gram operators.

The decay exponent of the spectrum of Sigma/n and G/n drives the
attainable convergence rates, so the sweep tooling reports a power-law
fit alpha from a least-squares line of log(eigenvalue) against
log(rank).  The leading eigenvalue is excluded (it reflects the mean
component, not the tail law), as are trailing eigenvalues below
1e-12 times the largest, which sit at the numerical noise floor.
"""

from dataclasses import dataclass

import numpy as np

from ._serialize import fmt, write_csv
from .errors import ValidationError

__all__ = ["DecayReport", "empirical_eigendecay", "write_spectrum_csv"]

SYMMETRY_TOL = 1e-8
NOISE_FLOOR = 1e-12
PSD_TOL = 1e-8


@dataclass
class DecayReport:
    """Sorted spectrum with the fitted power-law exponent."""

    eigenvalues: np.ndarray
    exponent: float
    used: np.ndarray      # 1-based ranks entering the fit


def empirical_eigendecay(mat, k_range: tuple[int, int] | None = None) -> DecayReport:
    """Fit log(eig_k) ~ alpha log(k) over the eligible rank range.

    Parameters
    ----------
    mat : array_like, shape (n, n)
        Symmetric positive semidefinite matrix (up to roundoff).
    k_range : (int, int), optional
        Inclusive 1-based rank window; it is intersected with the
        default eligibility rule (k >= 2, eigenvalue above the noise
        floor).

    Returns
    -------
    DecayReport
    """
    arr = np.asarray(mat, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError("empirical_eigendecay: matrix must be square")
    scale = np.abs(arr).max()
    if scale == 0:
        raise ValidationError("empirical_eigendecay: zero matrix has no decay")
    if np.abs(arr - arr.T).max() > SYMMETRY_TOL * scale:
        raise ValidationError("empirical_eigendecay: matrix is not symmetric")
    eig = np.linalg.eigvalsh((arr + arr.T) / 2.0)[::-1]
    top = eig[0]
    if top <= 0:
        raise ValidationError("empirical_eigendecay: no positive eigenvalues")
    if eig[-1] < -PSD_TOL * top:
        raise ValidationError("empirical_eigendecay: matrix is not numerically PSD")
    ranks = np.arange(1, eig.size + 1)
    keep = (ranks >= 2) & (eig > NOISE_FLOOR * top)
    if k_range is not None:
        lo, hi = k_range
        if not 1 <= lo <= hi:
            raise ValidationError("empirical_eigendecay: bad k_range")
        keep &= (ranks >= lo) & (ranks <= hi)
    used = ranks[keep]
    if used.size < 2:
        raise ValidationError("empirical_eigendecay: fewer than two eligible eigenvalues")
    slope = np.polyfit(np.log(used.astype(float)), np.log(eig[keep]), 1)[0]
    return DecayReport(eigenvalues=eig, exponent=float(slope), used=used)


def write_spectrum_csv(report: DecayReport, path, meta: dict | None = None) -> None:
    """Spectrum as CSV with columns rank, eigenvalue, used."""
    in_fit = set(report.used.tolist())
    rows = [[str(k), fmt(float(v)), str(int(k in in_fit))]
            for k, v in enumerate(report.eigenvalues, start=1)]
    write_csv(path, ["rank", "eigenvalue", "used"], rows, meta)
