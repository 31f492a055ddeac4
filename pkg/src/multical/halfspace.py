"""Halfspace oracle: a forecast distribution that keeps the product reward at most B/m.

Given theta with |theta|_inf <= 1 and the value h(x), the returned distribution w over the
grid satisfies, for every label y in [0, 1],

    sum_i theta(i) h(x) w(i) (y - i/m) <= B/m.

The scaled vector theta_hat = h(x) * theta is either non-positive at 0 (predict 0),
non-negative at m (predict 1), or changes sign between two adjacent grid points, in
which case w mixes those two points so the label terms cancel.
"""
from __future__ import annotations

import numpy as np

from .core import PredictionGrid


def sign_change_index(theta_hat: np.ndarray) -> int:
    """Index i with theta_hat[i] > 0 >= theta_hat[i+1], by bisection.

    Requires theta_hat[0] > 0 and theta_hat[-1] < 0.
    """
    lo, hi = 0, theta_hat.size - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if theta_hat[mid] > 0:
            lo = mid
        else:
            hi = mid
    return lo


def sign_change_index_linear(theta_hat: np.ndarray) -> int:
    for i in range(theta_hat.size - 1):
        if theta_hat[i] > 0 and theta_hat[i + 1] <= 0:
            return i
    raise ValueError("no sign change")


def halfspace_oracle(hx: float, theta, grid: PredictionGrid) -> np.ndarray:
    """Distribution over the grid for hypothesis value ``hx = h(x)`` and direction ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (grid.size,):
        raise ValueError(f"theta has shape {theta.shape}, grid needs ({grid.size},)")
    return scaled_halfspace_oracle(theta * hx, grid)


def scaled_halfspace_oracle(theta_hat, grid: PredictionGrid) -> np.ndarray:
    """Same oracle, given the scaled direction theta_hat = h(x) theta directly.

    For any theta_hat with |theta_hat|_inf <= B the result keeps
    sum_i theta_hat(i) w(i) (y - i/m) <= B/m for all y in [0, 1].
    """
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    if theta_hat.shape != (grid.size,):
        raise ValueError(f"theta_hat has shape {theta_hat.shape}, grid needs ({grid.size},)")
    M = grid.size
    w = np.zeros(M)
    if theta_hat[0] <= 0:
        w[0] = 1.0
    elif theta_hat[-1] >= 0:
        w[-1] = 1.0
    else:
        i = sign_change_index(theta_hat)
        a, b = theta_hat[i], theta_hat[i + 1]
        # + 0.0 turns a -0.0 weight (b == 0) into 0.0
        w[i] = b / (b - a) + 0.0
        w[i + 1] = a / (a - b)
    return w


def guarantee_value(hx: float, theta, w, y, grid: PredictionGrid):
    """sum_i theta(i) h(x) w(i) (y - i/m); ``y`` may be an array of labels."""
    coef = np.asarray(theta, dtype=np.float64) * hx * np.asarray(w)
    y = np.asarray(y, dtype=np.float64)
    return coef.sum() * y - coef @ grid.points


def random_guarantee_sweep(n_draws: int, rng: np.random.Generator, bounds=(1.0, 5.0),
                           m_range=(2, 64), n_labels: int = 101) -> float:
    """Largest value of (guarantee sum - B/m) over random (h(x), theta, m) and a label sweep."""
    ys = np.linspace(0.0, 1.0, n_labels)
    worst = -np.inf
    for _ in range(n_draws):
        B = float(rng.choice(bounds))
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        grid = PredictionGrid(m)
        hx = float(rng.uniform(-B, B))
        theta = rng.uniform(-1.0, 1.0, size=grid.size)
        # exact zeros exercise the boundary branches
        theta[rng.random(grid.size) < 0.05] = 0.0
        w = halfspace_oracle(hx, theta, grid)
        worst = max(worst, float(np.max(guarantee_value(hx, theta, w, ys, grid))) - B / m)
    return worst


def halfspace_for(x, h, theta, grid: PredictionGrid) -> np.ndarray:
    """Oracle call in terms of a context and Hypothesis rather than the value h(x)."""
    return halfspace_oracle(h.evaluate(x), theta, grid)
