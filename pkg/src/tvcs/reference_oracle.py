"""Dense desk-scale ground truth for the solvers and the convergence theory.

Everything here is built from explicit matrices: the difference operator
assembled by index arithmetic, the penalty-model normal matrix factorized
directly, and the contraction operator of the iteration analysis realized
densely so its spectral radius can be eigendecomposed. Intentionally capped
at tiny grids; production reconstruction goes through ``solvers``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "MAX_SIDE",
    "DenseProblem",
    "FixedPointReport",
    "dense_difference_matrices",
    "build_dense_problem",
    "dense_problem_from_operator",
    "exact_penalty_solve",
    "check_fixed_point",
    "check_kkt_constrained",
    "build_q_operator",
    "fixed_point_coordinates",
    "support_sets",
    "spectral_factor",
]

MAX_SIDE = 16  # dense R is (3 n^2)^2; n = 16 gives 768^2, still exact and cheap

_ZERO_PAIR_TOL = 1e-10  # pairs below this magnitude take the zero subgradient branch


def dense_difference_matrices(n):
    """Explicit periodic forward-difference matrices (horizontal, vertical).

    Row i of each matrix differences pixel i = r*n + c against its right or
    down neighbour with wrap-around; assembled by index arithmetic so it is
    independent of any FFT or rolling-view implementation.
    """
    n2 = n * n
    d1 = np.zeros((n2, n2))
    d2 = np.zeros((n2, n2))
    for r in range(n):
        for c in range(n):
            i = r * n + c
            d1[i, r * n + (c + 1) % n] += 1.0
            d1[i, i] -= 1.0
            d2[i, ((r + 1) % n) * n + c] += 1.0
            d2[i, i] -= 1.0
    return d1, d2


@dataclass
class DenseProblem:
    """Small instance with every matrix of the analysis materialized.

    ``D`` stacks the horizontal block on the vertical one, ``M`` is the
    penalty-model normal matrix, ``H`` the proximal system matrix, ``T`` the
    gradient-step contraction, ``R`` the iteration operator whose Gram
    spectrum drives the q-linear rate, and ``G = D^T D + eta^2 T^2`` the
    metric in which that rate is measured.
    """

    n: int
    A: np.ndarray
    D: np.ndarray
    f: np.ndarray
    mu: float
    beta: float
    tau: float
    eta: float
    M: np.ndarray
    H: np.ndarray
    T: np.ndarray
    R: np.ndarray
    G: np.ndarray

    @property
    def n2(self):
        return self.n * self.n


def build_dense_problem(A, f, mu, beta, tau):
    """Assemble a :class:`DenseProblem`, checking the well-posedness assumptions.

    Raises if the grid is larger than :data:`MAX_SIDE`, if the stacked
    null-space condition fails ("Assumption 1 violated"), or if the internal
    identity H - M = eta^2 T does not hold to 1e-10.
    """
    A = np.asarray(A, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    if A.ndim != 2:
        raise ValueError("A must be a 2-D matrix")
    m, n2 = A.shape
    if f.size != m:
        raise ValueError(f"f has length {f.size}, expected {m}")
    n = math.isqrt(n2)
    if n * n != n2 or n < 2:
        raise ValueError(f"A column count {n2} is not a valid square grid size")
    if n > MAX_SIDE:
        raise ValueError(f"dense oracle is capped at n <= {MAX_SIDE}, got n = {n}")
    if min(mu, beta, tau) <= 0:
        raise ValueError("mu, beta, tau must be positive")

    d1, d2 = dense_difference_matrices(n)
    D = np.vstack([d1, d2])
    if np.linalg.matrix_rank(np.vstack([A, D])) < n2:
        raise ValueError("Assumption 1 violated: null spaces of A and D intersect")

    ata = A.T @ A
    dtd = D.T @ D
    eta = math.sqrt(mu / (beta * tau))
    M = dtd + (mu / beta) * ata
    H = dtd + (eta ** 2) * np.eye(n2)
    T = np.eye(n2) - tau * ata
    gap = np.linalg.norm(H - M - eta ** 2 * T)
    if gap > 1e-10 * (1.0 + np.linalg.norm(H)):
        raise RuntimeError(f"identity H - M = eta^2 T violated by {gap:.3e}")

    stacked = np.vstack([D, eta * np.eye(n2)])  # (D; eta I)
    hinv_stacked_t = np.linalg.solve(H, stacked.T)  # H^{-1} (D; eta I)^T
    R = np.vstack([D, eta * T]) @ hinv_stacked_t
    G = dtd + eta ** 2 * (T @ T)
    return DenseProblem(n=n, A=A, D=D, f=f, mu=float(mu), beta=float(beta),
                        tau=float(tau), eta=eta, M=M, H=H, T=T, R=R, G=G)


def dense_problem_from_operator(op, f, mu, beta, tau):
    """Materialize a sensing operator column-by-column and build the problem."""
    if hasattr(op, "matrix"):
        A = np.asarray(op.matrix, dtype=float)
    else:
        cols = [op.apply(np.eye(op.n2)[:, j]) for j in range(op.n2)]
        A = np.column_stack(cols)
    return build_dense_problem(A, f, mu, beta, tau)


def _shrink_pairs(z, threshold):
    # z stacked (2 n^2,); pairwise Euclidean shrinkage, zero on the closed disc
    pairs = z.reshape(2, -1)
    mag = np.hypot(pairs[0], pairs[1])
    scale = np.where(mag > threshold, 1.0 - threshold / np.where(mag > 0.0, mag, 1.0), 0.0)
    return (scale * pairs).ravel()


def _pair_norms(z):
    pairs = z.reshape(2, -1)
    return np.hypot(pairs[0], pairs[1])


def _as_flat_image(dp, u):
    u = np.asarray(u, dtype=float)
    if u.shape == (dp.n, dp.n):
        return u.ravel()
    if u.shape == (dp.n2,):
        return u
    raise ValueError(f"image shape {u.shape} does not match n = {dp.n}")


def _as_stacked_field(dp, w):
    w = np.asarray(w, dtype=float)
    if w.shape == (2, dp.n, dp.n):
        return w.reshape(2, -1).ravel()
    if w.shape == (2 * dp.n2,):
        return w
    raise ValueError(f"field shape {w.shape} does not match n = {dp.n}")


def exact_penalty_solve(dp, tol=1e-10, max_iters=200000, u_first=False):
    """Minimize the penalty model by exact alternation with a dense solve.

    The normal matrix M is factorized once; each sweep applies exact
    pairwise shrinkage and an exact solve of the u normal equations until
    the relative change of u falls below ``tol``. Serves as ground truth for
    the FFT-based solver at desk scale.
    """
    factor = cho_factor(dp.M)
    atf = (dp.mu / dp.beta) * (dp.A.T @ dp.f)
    threshold = 1.0 / dp.beta
    u = dp.A.T @ dp.f
    w = np.zeros(2 * dp.n2)
    for _ in range(max_iters):
        if u_first:
            u_new = cho_solve(factor, dp.D.T @ w + atf)
            w = _shrink_pairs(dp.D @ u_new, threshold)
        else:
            w = _shrink_pairs(dp.D @ u, threshold)
            u_new = cho_solve(factor, dp.D.T @ w + atf)
        change = np.linalg.norm(u_new - u) / max(np.linalg.norm(u), 1e-12)
        u = u_new
        if change <= tol:
            return u.reshape(dp.n, dp.n)
    raise RuntimeError(f"exact penalty alternation did not reach tol={tol} "
                       f"in {max_iters} sweeps")


@dataclass(frozen=True)
class FixedPointReport:
    """Residuals of the penalty-model fixed-point system at a candidate (u, w)."""

    shrink_residual: float
    normal_eq_residual: float
    kkt_residual: float
    support_L: np.ndarray
    omega: float


def check_fixed_point(dp, u, w):
    """Measure how far (u, w) is from satisfying the fixed-point system.

    Returns the shrinkage-equation residual, the normal-equation residual,
    the constrained-model KKT residual under the implied multiplier
    beta * (Du - w), the support set L of pairs inside the shrinkage disc,
    and the margin omega = min over L of (1/beta - ||D_i u||).
    """
    u_flat = _as_flat_image(dp, u)
    w_vec = _as_stacked_field(dp, w)
    du = dp.D @ u_flat
    shrink_res = float(np.linalg.norm(w_vec - _shrink_pairs(du, 1.0 / dp.beta)))
    rhs = dp.D.T @ w_vec + (dp.mu / dp.beta) * (dp.A.T @ dp.f)
    normal_res = float(np.linalg.norm(dp.M @ u_flat - rhs))
    lam_implied = dp.beta * (du - w_vec)
    kkt = check_kkt_constrained(dp, u_flat, w_vec, lam_implied)
    norms = _pair_norms(du)
    support = np.flatnonzero(norms <= 1.0 / dp.beta)
    omega = float(np.min(1.0 / dp.beta - norms[support])) if support.size else math.inf
    return FixedPointReport(shrink_residual=shrink_res, normal_eq_residual=normal_res,
                            kkt_residual=kkt, support_L=support, omega=omega)


def check_kkt_constrained(dp, u, w, lam):
    """Optimality residual of the constrained model at (u, w, lambda).

    Maximum of primal feasibility ||w - Du||, dual stationarity
    ||D^T lambda + mu A^T (Au - f)||, and the worst per-pair violation of
    lambda_i being a subgradient of the norm at w_i.
    """
    u_flat = _as_flat_image(dp, u)
    w_vec = _as_stacked_field(dp, w)
    lam_vec = _as_stacked_field(dp, lam)
    primal = float(np.linalg.norm(w_vec - dp.D @ u_flat))
    dual = float(np.linalg.norm(
        dp.D.T @ lam_vec + dp.mu * (dp.A.T @ (dp.A @ u_flat - dp.f))))
    w_pairs = w_vec.reshape(2, -1)
    lam_pairs = lam_vec.reshape(2, -1)
    w_norms = np.hypot(w_pairs[0], w_pairs[1])
    lam_norms = np.hypot(lam_pairs[0], lam_pairs[1])
    active = w_norms >= _ZERO_PAIR_TOL
    violations = np.maximum(lam_norms - 1.0, 0.0)  # zero branch: ||lambda_i|| <= 1
    if np.any(active):
        unit = w_pairs[:, active] / w_norms[active]
        violations[active] = np.hypot(*(lam_pairs[:, active] - unit))
    return max(primal, dual, float(violations.max(initial=0.0)))


def build_q_operator(dp):
    """Dense realization of one iteration in shrinkage/velocity coordinates.

    The returned callable maps stacked (w, v) to the next pair; composing it
    reproduces the FFT solver's sweep through the substitution
    v = eta T u + eta tau A^T f, and its fixed points coincide with the
    penalty-model minimizers.
    """
    factor = cho_factor(dp.H)
    forcing = dp.eta * dp.tau * (dp.A.T @ dp.f)
    threshold = 1.0 / dp.beta

    def q(w, v):
        x = cho_solve(factor, dp.D.T @ np.asarray(w, float)
                      + dp.eta * np.asarray(v, float))
        w_next = _shrink_pairs(dp.D @ x, threshold)
        v_next = dp.eta * (dp.T @ x) + forcing
        return w_next, v_next

    return q


def fixed_point_coordinates(dp, u):
    """Map a penalty-model minimizer u to its (w, v) fixed-point coordinates."""
    u_flat = _as_flat_image(dp, u)
    w = _shrink_pairs(dp.D @ u_flat, 1.0 / dp.beta)
    v = dp.eta * (dp.T @ u_flat) + dp.eta * dp.tau * (dp.A.T @ dp.f)
    return w, v


def support_sets(dp, u):
    """Index sets (L, E): pairs inside the shrinkage disc at u, and the rest."""
    norms = _pair_norms(dp.D @ _as_flat_image(dp, u))
    L = np.flatnonzero(norms <= 1.0 / dp.beta)
    E = np.flatnonzero(norms > 1.0 / dp.beta)
    return L, E


def spectral_factor(dp, support_E):
    """Spectral radius of the Gram submatrix retained on the active pairs.

    Rows and columns {i, i + n^2} for every pair outside ``support_E`` are
    removed from R^T R (the velocity block is always kept); the result
    bounds the asymptotic contraction of the iteration in the metric G. An
    empty ``support_E`` returns 0 by convention: every pair shrinks to zero
    and convergence is finite.
    """
    E = np.asarray(sorted(set(int(i) for i in np.atleast_1d(support_E))), dtype=int)
    if E.size == 0:
        return 0.0
    if E.min() < 0 or E.max() >= dp.n2:
        raise ValueError("support indices must lie in [0, n^2)")
    keep = np.concatenate([E, E + dp.n2, np.arange(2 * dp.n2, 3 * dp.n2)])
    gram = dp.R.T @ dp.R
    sub = gram[np.ix_(keep, keep)]
    return float(max(np.linalg.eigvalsh(sub).max(), 0.0))
