"""Context and label streams.

A stream emits a context, then a label given that context and the learner's forecast
distribution w_t.  It never sees the realised forecast of the current round.

Kinds:

* ``stochastic-linear``: contexts uniform on [0,1]^d (or on a finite universe), labels
  Bernoulli(g(x)) with g(x) = clip(bias + <a, x>, 0, 1).
* ``adaptive-bucket``: same contexts; binary labels picked greedily against the
  (hypothesis, bucket) pair with the largest expected residual so far.
* ``scripted``: replays (context, label) rows from a file in order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HypothesisClass, PredictionGrid, Universe, check_context, read_contexts

STREAM_KINDS = ("stochastic-linear", "adaptive-bucket", "scripted")


class StreamExhausted(RuntimeError):
    pass


class Stream:
    d: int

    def next_context(self) -> np.ndarray:
        raise NotImplementedError

    def next_label(self, x, w) -> float:
        raise NotImplementedError


class _ContextSource(Stream):
    def __init__(self, d: int, rng: np.random.Generator, universe: Universe | None = None):
        if universe is not None and universe.dim != d:
            raise ValueError("universe dimension does not match d")
        self.d = d
        self.rng = rng
        self.universe = universe

    def next_context(self) -> np.ndarray:
        if self.universe is not None:
            return self.universe.contexts[int(self.rng.integers(len(self.universe)))]
        return self.rng.random(self.d)


class StochasticLinearStream(_ContextSource):
    def __init__(self, d: int, rng: np.random.Generator, weights=None, bias: float = 0.5,
                 universe: Universe | None = None):
        super().__init__(d, rng, universe)
        if weights is None:
            weights = rng.uniform(-0.5, 0.5, size=d) / d
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)

    def mean(self, x) -> float:
        return float(np.clip(self.bias + self.weights @ np.asarray(x), 0.0, 1.0))

    def next_label(self, x, w) -> float:
        return float(self.rng.random() < self.mean(x))


class AdaptiveBucketStream(_ContextSource):
    """Greedy stress adversary.

    Tracks expected residuals R[h, p] = sum_t w_t(p) h(x_t) (y_t - p/m).  Each round it
    takes the pair with the largest |R| and emits the binary label maximising the
    expected absolute increment w_t(p) |h(x_t) (y - p/m)|; ties go to the label that
    moves R away from zero, then to 0.
    """

    def __init__(self, d: int, rng: np.random.Generator, hclass: HypothesisClass,
                 grid: PredictionGrid, universe: Universe | None = None):
        super().__init__(d, rng, universe)
        self.hclass = hclass
        self.grid = grid
        self.residuals = np.zeros((len(hclass), grid.size))

    def next_label(self, x, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        hv = self.hclass.values(x)
        k, p = np.unravel_index(int(np.argmax(np.abs(self.residuals))), self.residuals.shape)
        point = self.grid.points[p]
        gains = [w[p] * abs(hv[k] * (y - point)) for y in (0.0, 1.0)]
        if gains[0] != gains[1]:
            y = float(np.argmax(gains))
        else:
            r = self.residuals[k, p]
            push = [abs(r + w[p] * hv[k] * (y - point)) for y in (0.0, 1.0)]
            y = 1.0 if push[1] > push[0] else 0.0
        self.residuals += np.outer(hv, w * (y - self.grid.points))
        return y


class ScriptedStream(Stream):
    def __init__(self, contexts, labels):
        self.contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        self.labels = np.asarray(labels, dtype=np.float64)
        if self.labels.size != self.contexts.shape[0]:
            raise ValueError("scripted stream needs one label per context")
        for x in self.contexts:
            check_context(x)
        if np.any(self.labels < 0) or np.any(self.labels > 1):
            raise ValueError("labels must lie in [0,1]")
        self.d = self.contexts.shape[1]
        self._t = 0
        self._pending = None

    def next_context(self) -> np.ndarray:
        if self._t >= self.labels.size:
            raise StreamExhausted(f"scripted stream has only {self.labels.size} rounds")
        x = self.contexts[self._t]
        self._pending = self._t
        self._t += 1
        return x

    def next_label(self, x, w) -> float:
        return float(self.labels[self._pending])

    @classmethod
    def from_file(cls, path) -> "ScriptedStream":
        rows = read_contexts(path)
        return cls(rows[:, :-1], rows[:, -1])


@dataclass
class StreamSpec:
    kind: str = "stochastic-linear"
    d: int = 2
    bias: float = 0.5
    weights: tuple | None = None
    universe: np.ndarray | None = None
    script: str | None = None

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise ValueError(f"unknown stream kind {self.kind!r}; expected one of {STREAM_KINDS}")

    def build(self, rng: np.random.Generator, hclass: HypothesisClass,
              grid: PredictionGrid) -> Stream:
        universe = None
        if self.universe is not None:
            universe = Universe(self.universe)
        elif hclass.universe is not None:
            universe = hclass.universe
        d = universe.dim if universe is not None else self.d
        if self.kind == "stochastic-linear":
            return StochasticLinearStream(d, rng, self.weights, self.bias, universe)
        if self.kind == "adaptive-bucket":
            return AdaptiveBucketStream(d, rng, hclass, grid, universe)
        if self.script is None:
            raise ValueError("scripted stream needs a script file")
        return ScriptedStream.from_file(self.script)
