"""Compressive-sensing encoders: dense Gaussian matrices and implicit partial DCT.

Operators are immutable after construction and safe to share between
concurrent solver runs; apply/apply_adjoint are exact linear maps.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import fft as spfft

__all__ = [
    "DEFAULT_MAX_ENTRIES",
    "SPECTRAL_SAFETY_FACTOR",
    "SensingOperator",
    "DenseOperator",
    "GaussianOperator",
    "PartialDCTOperator",
    "Observation",
    "SpectralEstimate",
    "make_gaussian_operator",
    "make_partial_dct_operator",
    "estimate_spectral_radius",
    "synthesize_observation",
]

DEFAULT_MAX_ENTRIES = 2 ** 26  # dense payload cap, ~0.5 GiB of float64
SPECTRAL_SAFETY_FACTOR = 1.05  # applied to unconverged spectral estimates


def _check_sizes(m, n2):
    if m < 1 or n2 < 1:
        raise ValueError(f"sizes must be positive, got m={m}, n2={n2}")
    if m > n2:
        raise ValueError(f"m={m} exceeds signal length n2={n2}")


class SensingOperator:
    """Abstract linear map A: R^n2 -> R^m with an exact adjoint."""

    kind = "abstract"

    def __init__(self, m, n2, seed=None):
        self.m = int(m)
        self.n2 = int(n2)
        self.seed = seed

    def apply(self, u):
        raise NotImplementedError

    def apply_adjoint(self, y):
        raise NotImplementedError

    def _check_signal(self, u):
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.n2:
            raise ValueError(f"signal length {u.size} does not match operator n2={self.n2}")
        return u

    def _check_measurement(self, y):
        y = np.asarray(y, dtype=float).ravel()
        if y.size != self.m:
            raise ValueError(f"measurement length {y.size} does not match operator m={self.m}")
        return y


class DenseOperator(SensingOperator):
    """Sensing operator backed by an explicit m-by-n2 matrix."""

    kind = "dense"

    def __init__(self, matrix, seed=None):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError("dense operator requires a 2-D matrix")
        super().__init__(matrix.shape[0], matrix.shape[1], seed)
        matrix.setflags(write=False)
        self.matrix = matrix

    def apply(self, u):
        return self.matrix @ self._check_signal(u)

    def apply_adjoint(self, y):
        return self.matrix.T @ self._check_measurement(y)


class GaussianOperator(DenseOperator):
    kind = "dense-gaussian"


class PartialDCTOperator(SensingOperator):
    """Random rows of an orthonormal DCT, stored as indices plus fast transforms.

    The default transform is the 1-D orthonormal type-II DCT of the flattened
    signal; a separable 2-D variant is available via ``two_dimensional=True``.
    Rows of an orthonormal matrix give A A^T = I, hence lambda_max(A^T A) = 1.
    """

    kind = "partial-dct"

    def __init__(self, rows, n2, seed=None, two_dimensional=False):
        rows = np.asarray(rows, dtype=np.intp)
        if rows.ndim != 1 or rows.size == 0:
            raise ValueError("rows must be a nonempty 1-D index array")
        if np.unique(rows).size != rows.size:
            raise ValueError("row indices must be distinct")
        if rows.min() < 0 or rows.max() >= n2:
            raise ValueError(f"row indices must lie in [0, {n2})")
        super().__init__(rows.size, n2, seed)
        self.rows = np.sort(rows)
        self.two_dimensional = bool(two_dimensional)
        if two_dimensional:
            side = math.isqrt(n2)
            if side * side != n2:
                raise ValueError(f"2-D DCT needs a square signal length, got n2={n2}")
            self._side = side

    def apply(self, u):
        u = self._check_signal(u)
        if self.two_dimensional:
            coeffs = spfft.dctn(u.reshape(self._side, self._side), norm="ortho").ravel()
        else:
            coeffs = spfft.dct(u, norm="ortho")
        return coeffs[self.rows]

    def apply_adjoint(self, y):
        y = self._check_measurement(y)
        full = np.zeros(self.n2)
        full[self.rows] = y
        if self.two_dimensional:
            return spfft.idctn(full.reshape(self._side, self._side), norm="ortho").ravel()
        return spfft.idct(full, norm="ortho")


def make_gaussian_operator(m, n2, seed, max_entries=DEFAULT_MAX_ENTRIES):
    """Dense CS encoder with i.i.d. N(0, 1/n2) entries, deterministic per seed.

    The 1/n2 entry variance (columns of unit expected norm, the usual
    ``randn / sqrt(n2)`` convention) keeps lambda_max(A^T A) near
    (sqrt(m) + sqrt(n2))^2 / n2, a small constant, so fidelity weights
    transfer across sampling ratios. Nothing downstream assumes this:
    step-size bounds always measure lambda_max(A^T A) explicitly.
    """
    _check_sizes(m, n2)
    if m * n2 > max_entries:
        raise ValueError(
            f"dense Gaussian operator would hold {m * n2} entries "
            f"({m * n2 * 8 / 2**20:.0f} MiB), above the cap of {max_entries}; "
            "use the partial-dct encoder for signals this large")
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, 1.0 / math.sqrt(n2), size=(m, n2))
    return GaussianOperator(matrix, seed=seed)


def make_partial_dct_operator(m, n2, seed, two_dimensional=False):
    """Choose m distinct DCT row indices at random, always keeping row 0.

    Row 0 is the constant atom. The difference operator annihilates
    constants, so an encoder that misses row 0 leaves the image mean in the
    intersection of both null spaces: the well-posedness assumption fails
    and the mean becomes unrecoverable. The remaining m - 1 rows are drawn
    uniformly without replacement.
    """
    _check_sizes(m, n2)
    rng = np.random.default_rng(seed)
    rest = 1 + rng.choice(n2 - 1, size=m - 1, replace=False)
    rows = np.sort(np.concatenate([[0], rest]))
    return PartialDCTOperator(rows, n2, seed=seed, two_dimensional=two_dimensional)


class SpectralEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def estimate_spectral_radius(op, tol=1e-6, max_iters=500):
    """Estimate lambda_max(A^T A) by power iteration with Rayleigh quotients.

    Partial-DCT operators short-circuit to exactly 1.0 (orthonormal rows).
    The Rayleigh estimate converges monotonically from below, so the result
    never overshoots; if ``max_iters`` is exhausted first, the best estimate
    is returned with ``converged=False`` and callers deriving step sizes
    must inflate it by :data:`SPECTRAL_SAFETY_FACTOR`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if op.kind == "partial-dct":
        return SpectralEstimate(1.0, True, 0)
    rng = np.random.default_rng(0 if op.seed is None else op.seed)
    x = rng.standard_normal(op.n2)
    x /= np.linalg.norm(x)
    value = 0.0
    for it in range(1, max_iters + 1):
        y = op.apply_adjoint(op.apply(x))
        new = float(x @ y)
        ynorm = float(np.linalg.norm(y))
        if ynorm == 0.0:
            return SpectralEstimate(0.0, True, it)
        if it > 1 and abs(new - value) <= tol * abs(new):
            return SpectralEstimate(new, True, it)
        value = new
        x = y / ynorm
    return SpectralEstimate(value, False, max_iters)


@dataclass(frozen=True)
class Observation:
    """Measurement vector f = A u + sigma * z together with its noise level."""

    values: np.ndarray
    sigma: float


def synthesize_observation(op, u_true, sigma, seed):
    """Project a ground-truth image and add white Gaussian measurement noise."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    values = op.apply(np.asarray(u_true, dtype=float).ravel())
    if sigma > 0:
        values = values + sigma * np.random.default_rng(seed).standard_normal(op.m)
    return Observation(values=values, sigma=float(sigma))
