"""Oracle-efficient OLPO via generalized follow-the-perturbed-leader.

Decisions live in H x {-1,+1}^M.  The perturbation of action (h, theta) is alpha . Gamma_(h,theta)
with Gamma_(h,theta),(j,i) = h(x^j) theta_i for separator contexts x^1..x^D.  Because
alpha . Gamma_(h,theta) = sum_j h(x^j) <alpha_j, theta>, the perturbed leader is one call to the
offline oracle on the history extended by D synthetic rounds (x^j, alpha_j, kappa=1); the
learner never builds Gamma.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import HypothesisClass, PredictionGrid, Universe, integer_root_ceil

MAX_GAMMA_ROWS = 4096


@dataclass(frozen=True)
class GammaSpec:
    """Separator (or transductive universe) contexts and grid size defining Gamma implicitly."""

    separator: np.ndarray  # D x d
    grid_size: int

    def __post_init__(self):
        sep = np.atleast_2d(np.asarray(self.separator, dtype=np.float64))
        if sep.shape[0] < 1:
            raise ValueError("separator needs at least one context")
        if self.grid_size < 1:
            raise ValueError("grid size must be positive")
        sep.setflags(write=False)
        object.__setattr__(self, "separator", sep)

    @property
    def D(self) -> int:
        return self.separator.shape[0]

    @property
    def n_columns(self) -> int:
        return self.D * self.grid_size

    @classmethod
    def from_universe(cls, universe: Universe, grid: PredictionGrid) -> "GammaSpec":
        return cls(universe.contexts, grid.size)


def separator_values(spec: GammaSpec, hclass: HypothesisClass) -> np.ndarray:
    """|H| x D matrix of h(x^j)."""
    return hclass.values_many(spec.separator)


def draw_noise(spec: GammaSpec, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """alpha indexed (j, i), i.i.d. Unif[0, sqrt(T)]."""
    return rng.uniform(0.0, math.sqrt(horizon), size=(spec.D, spec.grid_size))


def gamma_entry(spec: GammaSpec, h, theta, j: int, i: int) -> float:
    if not (0 <= j < spec.D and 0 <= i < spec.grid_size):
        raise IndexError(f"Gamma column ({j}, {i}) out of range")
    theta = np.asarray(theta)
    if theta.shape != (spec.grid_size,):
        raise ValueError("theta length does not match the grid")
    return float(h.evaluate(spec.separator[j]) * theta[i])


def perturbation(spec: GammaSpec, alpha, h, theta) -> float:
    """alpha . Gamma_(h,theta) = sum_j h(x^j) <alpha_j, theta>, in O(D M)."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(spec.D, -1)
    theta = np.asarray(theta, dtype=np.float64)
    if alpha.shape[1] != spec.grid_size or theta.shape != (spec.grid_size,):
        raise ValueError("alpha / theta dimensions do not match the spec")
    return float(h.evaluate_many(spec.separator) @ (alpha @ theta))


def sign_vectors(M: int) -> np.ndarray:
    """All of {-1,+1}^M, lexicographic with -1 first."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=M)))


def materialize_gamma(spec: GammaSpec, hclass: HypothesisClass,
                      max_rows: int = MAX_GAMMA_ROWS) -> tuple[np.ndarray, list[tuple[int, tuple]]]:
    """Explicit Gamma with rows (h, theta) and columns (j, i) in row-major (j, i) order."""
    n_rows = len(hclass) * 2**spec.grid_size
    if n_rows > max_rows:
        raise ValueError(f"Gamma would have {n_rows} rows, cap is {max_rows}")
    hv = separator_values(spec, hclass)
    thetas = sign_vectors(spec.grid_size)
    rows, labels = [], []
    for k in range(len(hclass)):
        for th in thetas:
            rows.append(np.outer(hv[k], th).ravel())
            labels.append((k, tuple(th)))
    return np.array(rows), labels


def verify_admissibility(spec: GammaSpec, hclass: HypothesisClass,
                         tol: float = 1e-12) -> tuple[bool, float]:
    """(rows distinct and unequal column entries >= 1 apart, smallest such gap).

    Only binary-valued classes are accepted.
    """
    if not hclass.is_binary:
        raise ValueError("admissibility is only defined here for binary-valued classes")
    G, _ = materialize_gamma(spec, hclass)
    distinct_rows = len({row.tobytes() for row in G}) == G.shape[0]
    gap = math.inf
    for col in G.T:
        vals = np.unique(col)
        if vals.size > 1:
            gap = min(gap, float(np.min(np.diff(vals))))
    return distinct_rows and gap >= 1.0 - tol, gap


# ---------------------------------------------------------------------------
# offline oracle


class RewardLog:
    """Append-only record of (context, reward vector, coefficient) rounds."""

    def __init__(self):
        self.contexts: list[np.ndarray] = []
        self.rewards: list[np.ndarray] = []
        self.kappas: list[float] = []

    def __len__(self) -> int:
        return len(self.rewards)

    def append(self, x, f, kappa: float = 1.0) -> None:
        self.contexts.append(np.asarray(x, dtype=np.float64))
        self.rewards.append(np.asarray(f, dtype=np.float64))
        self.kappas.append(float(kappa))


@dataclass(frozen=True)
class OracleQuery:
    """The first ``length`` rounds of ``log`` plus extra (context, reward, kappa) terms."""

    log: RewardLog
    length: int
    extra: tuple = ()
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not 0 <= self.length <= len(self.log):
            raise ValueError("query length exceeds the log")

    def terms(self):
        for s in range(self.length):
            yield self.log.contexts[s], self.log.rewards[s], self.log.kappas[s]
        yield from self.extra

    def __len__(self) -> int:
        return self.length + len(self.extra)


def _sign_rule(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, 1.0, -1.0)


def _argmax_members(V: np.ndarray) -> tuple[int, np.ndarray, float]:
    """V is |H| x M with rows v(h); returns (index, theta*, value) with lowest-index ties."""
    values = np.abs(V).sum(axis=1)
    k = int(np.argmax(values))
    return k, _sign_rule(V[k]), float(values[k])


def offline_oracle(query: OracleQuery, hclass: HypothesisClass) -> tuple[int, np.ndarray, float]:
    """Exact maximiser of sum_s kappa_s <theta, h(x_s) f_s> over H x {-1,+1}^M.

    For each h the objective is <theta, v(h)> with v(h) = sum_s kappa_s h(x_s) f_s, maximised by
    theta = sign(v(h)) (zeros -> +1) with value |v(h)|_1.
    """
    terms = list(query.terms())
    if not terms:
        raise ValueError("empty oracle query")
    X = np.array([t[0] for t in terms])
    F = np.array([t[1] for t in terms])
    kappa = np.array([t[2] for t in terms])
    V = hclass.values_many(X) @ (kappa[:, None] * F)
    return _argmax_members(V)


class EnumerationOracle:
    """Offline oracle with the closed-form theta and enumeration over members.

    Partial sums over a log prefix are memoised per log, so repeated queries on a growing
    log cost O(|H| M) per new round plus O(|H| M) per extra term.
    """

    def __init__(self, hclass: HypothesisClass):
        self.hclass = hclass
        self.calls = 0
        self._log = None
        self._folded = 0
        self._sums = None

    def _prefix_sums(self, log: RewardLog, length: int) -> np.ndarray:
        M = len(log.rewards[0]) if len(log) else None
        if self._log is not log or length < self._folded:
            self._log, self._folded, self._sums = log, 0, None
        if self._sums is None:
            if M is None:
                return None
            self._sums = np.zeros((len(self.hclass), M))
        for s in range(self._folded, length):
            self._sums += np.outer(self.hclass.values(log.contexts[s]),
                                   log.kappas[s] * log.rewards[s])
        self._folded = length
        return self._sums

    def __call__(self, query: OracleQuery) -> tuple[int, np.ndarray, float]:
        self.calls += 1
        if len(query) == 0:
            raise ValueError("empty oracle query")
        V = None
        if query.length:
            V = self._prefix_sums(query.log, query.length).copy()
        if query.extra:
            X = np.array([e[0] for e in query.extra])
            F = np.array([np.asarray(e[2], dtype=np.float64) * np.asarray(e[1]) for e in query.extra])
            extra = self.hclass.values_many(X) @ F
            V = extra if V is None else V + extra
        return _argmax_members(V)


def brute_force_oracle(query: OracleQuery, hclass: HypothesisClass) -> tuple[int, np.ndarray, float]:
    """Exhaustive search over H x {-1,+1}^M (tests only)."""
    terms = list(query.terms())
    M = len(terms[0][1])
    best = (-math.inf, None, None)
    thetas = sign_vectors(M)[::-1]  # all +1 first so ties match the sign rule
    for k in range(len(hclass)):
        h = hclass[k]
        for th in thetas:
            val = sum(kappa * h.evaluate(x) * float(th @ f) for x, f, kappa in terms)
            if val > best[0] + 1e-12:
                best = (val, k, th)
    return best[1], best[2], best[0]


# ---------------------------------------------------------------------------
# learner


def gftpl_defaults(T: int, end_to_end: bool = True) -> tuple[float, float, int]:
    """(epsilon, noise scale, grid m) for horizon T.

    End-to-end multicalibration: epsilon = T^(-1/4), m = ceil(T^(1/4)).  Standalone regret
    path: epsilon = T^(-1/2).  Noise is Unif[0, sqrt(T)] in both.
    """
    if T < 1:
        raise ValueError("T must be positive")
    m = integer_root_ceil(T, 4)
    eps = T ** -0.25 if end_to_end else T ** -0.5
    return eps, math.sqrt(T), m


@dataclass
class GftplLearner:
    """Perturbed leader over H x {-1,+1}^M with one oracle call per round."""

    hclass: HypothesisClass
    grid: PredictionGrid
    spec: GammaSpec
    horizon: int
    rng: np.random.Generator
    epsilon: float | None = None
    oracle: Callable | None = None
    alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.spec.grid_size != self.grid.size:
            raise ValueError("Gamma spec and grid disagree on M")
        if self.epsilon is None:
            self.epsilon = 1.0 / math.sqrt(self.horizon)
        if self.oracle is None:
            self.oracle = EnumerationOracle(self.hclass)
        self.alpha = draw_noise(self.spec, self.horizon, self.rng)
        self.alpha.setflags(write=False)
        self.log = RewardLog()
        self._synthetic = tuple((self.spec.separator[j], self.alpha[j], 1.0)
                                for j in range(self.spec.D))
        self._decision = None

    def perturbed_query(self) -> OracleQuery:
        return OracleQuery(self.log, len(self.log), self._synthetic, self.epsilon)

    def propose(self, rng: np.random.Generator | None = None) -> tuple[int, np.ndarray]:
        # all randomness is in alpha; rng is accepted for interface compatibility
        k, theta, _ = self.oracle(self.perturbed_query())
        self._decision = (k, theta)
        return k, theta.copy()

    def update(self, x, f) -> float:
        f = np.asarray(f, dtype=np.float64)
        reward = 0.0
        if self._decision is not None:
            k, theta = self._decision
            reward = float(self.hclass.values(x)[k] * (theta @ f))
        self.log.append(x, f, 1.0)
        self._decision = None
        return reward
