"""Shared test oracles, built independently of the package internals.

The dense matrices here are assembled by explicit index loops and closed
formulas so they cannot inherit a bug from the FFT/rolling-view code paths
they are used to check.
"""

import math
from dataclasses import replace

import numpy as np

from tvcs import SolverConfig, TVProblem, make_gaussian_operator, synthesize_observation
from tvcs.reference_oracle import dense_problem_from_operator
from tvcs.solvers import resolve_tau


def dense_diff_matrices(n):
    """Loop-built periodic forward-difference matrices (horizontal, vertical)."""
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


def dense_dct_matrix(n):
    """Orthonormal type-II DCT matrix from the cosine formula."""
    mat = np.zeros((n, n))
    for k in range(n):
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for j in range(n):
            mat[k, j] = scale * math.cos(math.pi * (2 * j + 1) * k / (2 * n))
    return mat


def minimize_shrink_objective(a, beta, rounds=16, grid=41):
    """Grid search with local refinement for min ||w|| + (beta/2) ||w - a||^2."""
    a = np.asarray(a, dtype=float)
    best = a.copy()
    half = max(1.0, float(np.hypot(*a)))
    for _ in range(rounds):
        xs = np.linspace(best[0] - half, best[0] + half, grid)
        ys = np.linspace(best[1] - half, best[1] + half, grid)
        X, Y = np.meshgrid(xs, ys)
        F = np.hypot(X, Y) + 0.5 * beta * ((X - a[0]) ** 2 + (Y - a[1]) ** 2)
        k = np.argmin(F)
        best = np.array([X.flat[k], Y.flat[k]])
        half /= 5.0
    return best


def blocky_truth(n, seed):
    """Piecewise-constant image with a little texture; gradients at many scales."""
    rng = np.random.default_rng(seed + 500)
    truth = np.zeros((n, n))
    truth[2:6, 2:6] = 0.8
    truth[4:7, 1:3] += 0.4
    truth += 0.05 * rng.standard_normal((n, n))
    return truth


def desk_instance(seed, n=8, m=48, mu=60.0, beta=10.0, tau_fraction=1.5,
                  tol=1e-8, sigma=0.01, keep_history=False, record_trace=False):
    """Standard small instance: problem, resolved config, dense oracle, truth."""
    op = make_gaussian_operator(m, n * n, seed)
    truth = blocky_truth(n, seed)
    obs = synthesize_observation(op, truth, sigma, seed + 900)
    problem = TVProblem(op, obs.values)
    config = SolverConfig(mu=mu, beta=beta, tau_fraction=tau_fraction,
                          beta_schedule=(beta,), tol_rel_change=tol,
                          max_iters=60000, record_trace=record_trace,
                          keep_history=keep_history)
    config = replace(config, tau=resolve_tau(config, op))
    dense = dense_problem_from_operator(op, problem.f, mu, beta, config.tau)
    return problem, config, dense, truth
