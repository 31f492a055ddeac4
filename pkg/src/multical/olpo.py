"""Online linear-product optimisation (OLPO): learner interface, regret, and the Lin-OLPO learner.

In each round the learner plays (h, theta) and receives reward <theta, h(x) f>.  Lin-OLPO
runs one projected online gradient ascent per hypothesis over the box [-1, 1]^M and
aggregates them with multiplicative weights; rewards are scaled by 1/B so every
per-hypothesis reward vector has l1 norm at most 1.
"""
from __future__ import annotations

import math
from typing import Protocol

import numpy as np

from .core import NORM_TOL, HypothesisClass, PredictionGrid, sample_from_distribution


class OlpoLearner(Protocol):
    hclass: HypothesisClass
    grid: PredictionGrid

    def propose(self, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        """Decision (hypothesis index, theta) for the coming round, from past feedback only."""

    def update(self, x, f: np.ndarray) -> float:
        """Feed the round's context and reward vector; returns the learner's expected reward."""


class Hedge:
    """Multiplicative weights for reward-maximising experts."""

    def __init__(self, n: int, rate: float):
        if n < 1:
            raise ValueError("need at least one expert")
        self.rate = float(rate)
        self.log_weights = np.zeros(n)

    @property
    def distribution(self) -> np.ndarray:
        z = np.exp(self.log_weights - self.log_weights.max())
        return z / z.sum()

    def update(self, rewards) -> None:
        self.log_weights = self.log_weights + self.rate * np.asarray(rewards, dtype=np.float64)


class BoxGradientAscent:
    """Independent projected gradient ascent iterates on [-1, 1]^M, one row per instance."""

    def __init__(self, n: int, dim: int, step: float):
        self.step = float(step)
        self.theta = np.zeros((n, dim))

    def update(self, grads: np.ndarray) -> None:
        self.theta = np.clip(self.theta + self.step * grads, -1.0, 1.0)


class LinOlpo:
    """Per-hypothesis OGD on the box plus Hedge over hypotheses.

    Default tunings assume a known horizon T: OGD step sqrt(M/T) and Hedge rate
    sqrt(ln|H| / T).

    With ``mixed=True`` the forecaster uses ``mixture_direction`` instead of a sampled
    (h, theta): the reward vector f_t is built from the forecast, so it depends on which
    hypothesis was sampled, and only the deterministic gamma-mixture makes the played
    reward equal the gamma-expected reward that Hedge and OGD are accountable for.
    """

    def __init__(self, hclass: HypothesisClass, grid: PredictionGrid, horizon: int,
                 ogd_step: float | None = None, mwu_rate: float | None = None,
                 mixed: bool = True):
        if horizon < 1:
            raise ValueError("horizon must be positive")
        self.mixed = mixed
        self.hclass = hclass
        self.grid = grid
        self.horizon = horizon
        n, M = len(hclass), grid.size
        self.ogd = BoxGradientAscent(n, M, math.sqrt(M / horizon) if ogd_step is None else ogd_step)
        self.experts = Hedge(n, math.sqrt(math.log(n) / horizon) if mwu_rate is None else mwu_rate)
        # running totals for the deterministic (gamma-expected) regret
        self.scaled_reward_sum = np.zeros((n, M))
        self.expected_scaled_reward = 0.0
        self.rounds = 0

    @property
    def gamma(self) -> np.ndarray:
        return self.experts.distribution

    @property
    def thetas(self) -> np.ndarray:
        return self.ogd.theta

    def propose(self, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        idx = sample_from_distribution(self.gamma, rng)
        return idx, self.ogd.theta[idx].copy()

    def mixture_direction(self, x) -> np.ndarray:
        """sum_h gamma(h) h(x) theta^h: the scaled direction of the gamma-mixed play."""
        return (self.gamma * self.hclass.values(x)) @ self.ogd.theta

    def scaled_rewards(self, x, f) -> np.ndarray:
        """|H| x M matrix whose row h is h(x) f / B."""
        return np.outer(self.hclass.values(x), f) / self.hclass.bound

    def update(self, x, f) -> float:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.grid.size,):
            raise ValueError("reward vector length does not match the grid")
        if np.abs(f).sum() > 1.0 + NORM_TOL:
            raise ValueError(f"reward vector l1 norm {np.abs(f).sum()} exceeds 1")
        F = self.scaled_rewards(x, f)
        expert_rewards = np.einsum("hm,hm->h", self.ogd.theta, F)
        expected = float(self.gamma @ expert_rewards)
        self.scaled_reward_sum += F
        self.expected_scaled_reward += expected
        self.rounds += 1
        self.ogd.update(F)
        self.experts.update(expert_rewards)
        return self.hclass.bound * expected

    def lin_regret(self) -> float:
        """max_h |sum_t f~_t(h)|_1 minus the gamma-expected cumulative reward (scaled units)."""
        best = float(np.abs(self.scaled_reward_sum).sum(axis=1).max())
        return best - self.expected_scaled_reward

    def regret_bound(self) -> float:
        """sqrt(T ln|H|) + sqrt(T M) evaluated at the rounds seen so far."""
        T = self.rounds
        return math.sqrt(T * math.log(len(self.hclass))) + math.sqrt(T * self.grid.size)


def best_fixed_action(contexts, rewards, hclass: HypothesisClass) -> tuple[int, np.ndarray, float]:
    """argmax over (h, theta in the box) of sum_t <theta, h(x_t) f_t>; theta is a sign vector."""
    S = hclass.values_many(contexts) @ np.atleast_2d(np.asarray(rewards, dtype=np.float64))
    values = np.abs(S).sum(axis=1)
    idx = int(np.argmax(values))
    theta = np.where(S[idx] >= 0, 1.0, -1.0)
    return idx, theta, float(values[idx])


def olpo_regret(contexts, rewards, realized_rewards, hclass: HypothesisClass) -> float:
    """Best fixed action's cumulative reward minus the learner's (expected) cumulative reward."""
    if len(realized_rewards) == 0:
        raise ValueError("empty history")
    _, _, best = best_fixed_action(contexts, rewards, hclass)
    return best - float(np.sum(realized_rewards))
