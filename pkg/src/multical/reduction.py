"""Online multicalibration from an OLPO learner and the halfspace oracle.

Each round: observe x_t, ask the learner for (h_t, theta_t), turn it into a forecast
distribution w_t with the halfspace oracle, sample p_t ~ w_t, obtain y_t from the stream
(which sees w_t but not p_t), and feed f_t(i) = w_t(i) (y_t - i/m) back to the learner.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (NORM_TOL, HypothesisClass, PredictionGrid, Transcript, integer_root_ceil,
                   sample_from_distribution, spawn_rngs)
from .gftpl import GammaSpec, GftplLearner, gftpl_defaults
from .halfspace import scaled_halfspace_oracle
from .mcerror import k_error_all
from .olpo import LinOlpo, OlpoLearner, olpo_regret
from .streams import Stream, StreamSpec

LEARNERS = ("linolpo", "linolpo-sampled", "gftpl")


def build_reward(w, y: float, grid: PredictionGrid) -> np.ndarray:
    """f(i) = w(i) (y - i/m)."""
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"label {y} outside [0,1]")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (grid.size,):
        raise ValueError("distribution length does not match the grid")
    return w * (y - grid.points)


@dataclass(frozen=True)
class RoundRecord:
    context: np.ndarray
    hypothesis: int  # -1 when the learner plays its gamma-mixture
    theta: np.ndarray
    theta_hat: np.ndarray  # scaled direction handed to the halfspace oracle
    distribution: np.ndarray
    prediction: int
    label: float
    reward: np.ndarray
    realized_reward: float  # <theta_hat_t, f_t>, i.e. <theta_t, h_t(x_t) f_t> for a single pair
    expected_reward: float  # learner's expected reward over its own sampling


def run_round(learner: OlpoLearner, x, stream: Stream, rng: np.random.Generator) -> RoundRecord:
    grid = learner.grid
    if getattr(learner, "mixed", False):
        k = -1
        theta_hat = learner.mixture_direction(x)
        theta = theta_hat
    else:
        k, theta = learner.propose(rng)
        theta_hat = float(learner.hclass.values(x)[k]) * theta
    w = scaled_halfspace_oracle(theta_hat, grid)
    p = sample_from_distribution(w, rng)
    y = stream.next_label(x, w)
    f = build_reward(w, y, grid)
    realized = float(theta_hat @ f)
    expected = learner.update(x, f)
    return RoundRecord(np.asarray(x), k, theta, theta_hat, w, p, y, f, realized, expected)


@dataclass
class ExperimentConfig:
    hclass: HypothesisClass
    T: int
    learner: str = "linolpo"
    seed: int = 0
    m: int | None = None
    epsilon: float | None = None
    stream: StreamSpec = field(default_factory=StreamSpec)
    separator: np.ndarray | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}; expected one of {LEARNERS}")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be at least 1")

    def grid(self) -> PredictionGrid:
        if self.m is not None:
            return PredictionGrid(self.m)
        if self.learner == "gftpl":
            return PredictionGrid(gftpl_defaults(self.T)[2])
        return PredictionGrid(integer_root_ceil(self.T, 3))

    def resolved_epsilon(self) -> float | None:
        if self.learner != "gftpl":
            return None
        return gftpl_defaults(self.T)[0] if self.epsilon is None else self.epsilon


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    grid: PredictionGrid
    transcript: Transcript
    rounds: list
    k_per_member: np.ndarray
    k_max: float
    k_argmax: int
    regret: float
    wall_ms: float
    lin_regret: float | None = None


def make_learner(cfg: ExperimentConfig, grid: PredictionGrid, rng: np.random.Generator) -> OlpoLearner:
    if cfg.learner.startswith("linolpo"):
        return LinOlpo(cfg.hclass, grid, cfg.T, mixed=cfg.learner == "linolpo")
    if cfg.separator is not None:
        spec = GammaSpec(cfg.separator, grid.size)
    elif cfg.hclass.universe is not None:
        spec = GammaSpec.from_universe(cfg.hclass.universe, grid)
    else:
        raise ValueError("gftpl needs a separator or a table class with a universe")
    return GftplLearner(cfg.hclass, grid, spec, cfg.T, rng, epsilon=cfg.resolved_epsilon())


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    start = time.perf_counter()
    grid = cfg.grid()
    learner_rng, sample_rng, stream_rng = spawn_rngs(cfg.seed, 3)
    learner = make_learner(cfg, grid, learner_rng)
    stream = cfg.stream.build(stream_rng, cfg.hclass, grid)
    rounds = []
    for _ in range(cfg.T):
        x = stream.next_context()
        rounds.append(run_round(learner, x, stream, sample_rng))
    transcript = Transcript(
        grid,
        np.array([r.context for r in rounds]),
        np.array([r.prediction for r in rounds]),
        np.array([r.label for r in rounds]),
        np.array([r.distribution for r in rounds]),
    )
    errs = k_error_all(transcript, cfg.hclass)
    k_idx = int(np.argmax(errs))
    regret = olpo_regret(transcript.contexts, np.array([r.reward for r in rounds]),
                         [r.expected_reward for r in rounds], cfg.hclass)
    wall_ms = (time.perf_counter() - start) * 1000.0
    lin = learner.lin_regret() if isinstance(learner, LinOlpo) else None
    return ExperimentResult(cfg, grid, transcript, rounds, errs, float(errs[k_idx]), k_idx,
                            regret, wall_ms, lin)


def max_chain_violation(result: ExperimentResult) -> float:
    """max_t <theta_t, h_t(x_t) f_t> - B/m over the run."""
    B, m = result.config.hclass.bound, result.grid.m
    return max(r.realized_reward for r in result.rounds) - B / m


def reward_norms_ok(result: ExperimentResult) -> bool:
    return all(np.abs(r.reward).sum() <= 1.0 + NORM_TOL for r in result.rounds)
