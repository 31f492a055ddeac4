"""Finite beta-covers of l1-bounded linear and polynomial hypothesis classes.

Weights live in the l1 ball of radius B in R^(kd).  On X = [0,1]^d every power feature lies
in [0,1], so weight l1 distance bounds the sup-norm distance between hypotheses and a
weight-space cover is a functional cover.

The cover is the cubic lattice of spacing s intersected with the ball.  A ball point is
mapped into it by rounding magnitudes down and then rounding up the largest remainders
while the l1 budget allows (``nearest_member``).  That rounding stays inside the ball and
costs at most ceil(n/2) * s in l1 for n <= 3 coordinates; for larger n only the
round-down bound n * s is guaranteed, so the spacing is chosen accordingly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HypothesisClass, LinearHypothesis

ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class CoverSpec:
    d: int
    beta: float
    bound: float = 1.0
    degree: int = 1

    def __post_init__(self):
        if self.d < 1 or self.degree < 1:
            raise ValueError("d and degree must be >= 1")
        if self.bound <= 0 or self.beta <= 0:
            raise ValueError("bound and beta must be positive")

    @property
    def n(self) -> int:
        return self.d * self.degree

    @property
    def size_bound(self) -> float:
        return (1 + 2 * self.bound / self.beta) ** self.n


def lattice_spacing(n: int, beta: float) -> float:
    if n <= 3:
        return beta / math.ceil(n / 2)
    return beta / n


def _budget(bound: float, s: float) -> int:
    # largest integer K with K*s <= bound, tolerant to representation error
    return math.floor(bound / s + 1e-9)


def cover_weights(spec: CoverSpec, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Lattice points (multiples of the spacing) with l1 norm <= B, as a (N, kd) array."""
    n = spec.n
    s = lattice_spacing(n, spec.beta)
    K = _budget(spec.bound, s)
    pts = []
    # integer points with sum |z_i| <= K, generated coordinate by coordinate
    def rec(prefix, remaining, left):
        if left == 0:
            pts.append(prefix)
            if len(pts) > cap:
                raise ValueError(f"cover enumeration exceeds cap {cap}")
            return
        for z in range(-remaining, remaining + 1):
            rec(prefix + (z,), remaining - abs(z), left - 1)

    rec((), K, n)
    return np.array(pts, dtype=np.float64) * s


def linear_cover(spec: CoverSpec, cap: int = ENUMERATION_CAP) -> HypothesisClass:
    W = cover_weights(spec, cap)
    return HypothesisClass([LinearHypothesis(w, spec.degree) for w in W], spec.bound)


def nearest_member(w, spec: CoverSpec) -> np.ndarray:
    """A lattice point inside the ball close to ``w`` (see module docstring)."""
    w = np.asarray(w, dtype=np.float64)
    s = lattice_spacing(spec.n, spec.beta)
    K = _budget(spec.bound, s)
    a = np.abs(w) / s
    base = np.floor(a)
    frac = a - base
    # never round up a remainder below one half
    room = K - int(base.sum())
    order = np.argsort(-frac, kind="stable")
    up = [i for i in order[:max(room, 0)] if frac[i] >= 0.5]
    z = base.copy()
    z[up] += 1
    return np.sign(w) * z * s


def sample_l1_ball(n: int, radius: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the l1 ball in R^n."""
    E = rng.exponential(size=(size, n + 1))
    mags = E[:, :n] / E.sum(axis=1, keepdims=True)
    signs = rng.choice((-1.0, 1.0), size=(size, n))
    return radius * signs * mags


def cover_distance(points: np.ndarray, cover: np.ndarray) -> np.ndarray:
    """l1 distance from each point to its closest cover member (brute force)."""
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], 1024):
        chunk = points[start:start + 1024]
        out[start:start + 1024] = np.abs(chunk[:, None, :] - cover[None, :, :]).sum(axis=2).min(axis=1)
    return out
