"""Shared domain types: prediction grid, hypotheses, transcripts and seeded randomness.

Randomness uses numpy's Philox4x32-10 bit generator (a counter-based PRNG) seeded
through ``SeedSequence``, so every fixture can be replayed bit-for-bit.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-12


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Philox-backed generator for ``seed``."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent Philox generators derived from one run seed."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def integer_root_ceil(T: int, k: int) -> int:
    """Smallest integer m >= 1 with m**k >= T, i.e. ceil(T**(1/k)) without float error."""
    if T < 1:
        raise ValueError("T must be positive")
    m = max(1, int(round(T ** (1.0 / k))))
    while m**k < T:
        m += 1
    while m > 1 and (m - 1) ** k >= T:
        m -= 1
    return m


@dataclass(frozen=True)
class PredictionGrid:
    """The forecast grid {0, 1/m, ..., 1}."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"grid parameter m must be >= 1, got {self.m}")

    @property
    def size(self) -> int:
        return self.m + 1

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.float64) / self.m

    def __getitem__(self, i: int) -> float:
        if not 0 <= i <= self.m:
            raise IndexError(i)
        return i / self.m


def check_distribution(w, size: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("distribution must be a non-empty vector")
    if size is not None and w.size != size:
        raise ValueError(f"distribution has length {w.size}, expected {size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("distribution has negative or non-finite entries")
    if abs(w.sum() - 1.0) > NORM_TOL:
        raise ValueError(f"distribution sums to {w.sum()!r}, not 1")
    return w


def sample_from_distribution(w, rng: np.random.Generator) -> int:
    """Draw a grid index by inverse CDF; ties go to the lower index.

    Consumes exactly one uniform draw from ``rng``.
    """
    w = check_distribution(w)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
    # cumsum may land a hair below 1; fall back to the last index with mass
    if idx >= w.size:
        idx = int(np.flatnonzero(w)[-1])
    return idx


# ---------------------------------------------------------------------------
# contexts and hypotheses


def check_context(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("context must be a vector")
    if d is not None and x.size != d:
        raise ValueError(f"context has dimension {x.size}, expected {d}")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError(f"context coordinates must lie in [0,1]: {x}")
    return x


class Universe:
    """Finite, ordered set of contexts with exact lookup."""

    def __init__(self, contexts):
        arr = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        if arr.shape[0] == 0:
            raise ValueError("universe must contain at least one context")
        for row in arr:
            check_context(row)
        self.contexts = arr
        self.contexts.setflags(write=False)
        self._index = {}
        for j, row in enumerate(arr):
            key = (row + 0.0).tobytes()
            if key in self._index:
                raise ValueError(f"duplicate context in universe: {row}")
            self._index[key] = j

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def index(self, x) -> int:
        # +0.0 folds -0.0 into 0.0 so both hash alike
        key = (np.asarray(x, dtype=np.float64) + 0.0).tobytes()
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"context {np.asarray(x)} is not in the universe") from None


class Hypothesis:
    """Bounded real-valued function over contexts."""

    kind: str

    def evaluate(self, x) -> float:
        raise NotImplementedError

    def evaluate_many(self, X) -> np.ndarray:
        return np.array([self.evaluate(x) for x in X], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class TableHypothesis(Hypothesis):
    """{0,1}-valued hypothesis given by a lookup table over a finite universe."""

    universe: Universe
    table: tuple
    kind: str = field(default="table-binary", init=False)

    def __post_init__(self):
        if len(self.table) != len(self.universe):
            raise ValueError("table length must match universe size")
        if any(v not in (0, 1) for v in self.table):
            raise ValueError("table-binary hypotheses take values in {0,1}")

    def evaluate(self, x) -> float:
        return float(self.table[self.universe.index(x)])

    def evaluate_many(self, X) -> np.ndarray:
        tab = np.asarray(self.table, dtype=np.float64)
        return tab[[self.universe.index(x) for x in X]]


def polynomial_features(x, degree: int) -> np.ndarray:
    """(x_1, ..., x_d, x_1^2, ..., x_d^2, ..., x_d^k): power-major ordering."""
    x = np.asarray(x, dtype=np.float64)
    if degree == 1:
        return x
    return np.concatenate([x**a for a in range(1, degree + 1)], axis=-1)


@dataclass(frozen=True, eq=False)
class LinearHypothesis(Hypothesis):
    """h(x) = <w, phi_k(x)> with phi_k the degree-k power features (k=1: plain linear)."""

    weights: np.ndarray
    degree: int = 1
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if w.size % self.degree:
            raise ValueError("weight length must be a multiple of the degree")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.size // self.degree

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.dim:
            raise ValueError(f"context has dimension {x.size}, hypothesis expects {self.dim}")
        return float(polynomial_features(x, self.degree) @ self.weights)

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return polynomial_features(X, self.degree) @ self.weights


class HypothesisClass:
    """Finite, ordered family of hypotheses bounded in absolute value by ``bound``."""

    def __init__(self, members: Sequence[Hypothesis], bound: float):
        members = list(members)
        if not members:
            raise ValueError("hypothesis class must be non-empty")
        if bound <= 0:
            raise ValueError("bound must be positive")
        self.members = members
        self.bound = float(bound)
        self.universe = None
        if all(isinstance(h, TableHypothesis) for h in members):
            universes = {id(h.universe) for h in members}
            if len(universes) != 1:
                raise ValueError("table hypotheses must share one universe")
            self.universe = members[0].universe
            tables = np.array([h.table for h in members], dtype=np.float64)
            if np.any(tables.sum(axis=1) == 0):
                raise ValueError("identically-zero table hypotheses are not allowed")
            if len({t.tobytes() for t in tables}) != len(members):
                raise ValueError("table hypotheses must be pairwise distinct")
            if bound < 1:
                raise ValueError("binary hypotheses need bound >= 1")
            self._table = tables  # |H| x D
        else:
            self._table = None
            for h in members:
                if isinstance(h, LinearHypothesis) and np.abs(h.weights).sum() > bound + NORM_TOL:
                    raise ValueError("linear hypothesis weights exceed the l1 bound")
            if any(isinstance(h, TableHypothesis) for h in members):
                raise ValueError("cannot mix table and linear hypotheses")
            self._weights = np.array([h.weights for h in members])
            if len({w.tobytes() for w in self._weights}) != len(members):
                raise ValueError("linear hypotheses must be pairwise distinct")
            degrees = {h.degree for h in members}
            if len(degrees) != 1:
                raise ValueError("linear hypotheses must share one degree")
            self._degree = degrees.pop()

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i: int) -> Hypothesis:
        return self.members[i]

    @property
    def is_binary(self) -> bool:
        return self._table is not None

    @property
    def table(self) -> np.ndarray:
        """|H| x D value matrix of a table class."""
        if self._table is None:
            raise TypeError("not a table class")
        return self._table

    def values(self, x) -> np.ndarray:
        """Values of every member at one context."""
        if self._table is not None:
            return self._table[:, self.universe.index(x)]
        return self._weights @ polynomial_features(np.asarray(x, dtype=np.float64), self._degree)

    def values_many(self, X) -> np.ndarray:
        """|H| x T matrix of member values on a context sequence."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self._table is not None:
            cols = [self.universe.index(x) for x in X]
            return self._table[:, cols]
        return self._weights @ polynomial_features(X, self._degree).T


def table_class(universe: Universe, tables: Iterable[Sequence[int]]) -> HypothesisClass:
    return HypothesisClass([TableHypothesis(universe, tuple(int(v) for v in t)) for t in tables], 1.0)


def random_table_class(universe: Universe, size: int, rng: np.random.Generator) -> HypothesisClass:
    """``size`` distinct, not-identically-zero binary tables drawn uniformly."""
    D = len(universe)
    if size > 2**D - 1:
        raise ValueError(f"only {2**D - 1} distinct nonzero tables exist over {D} contexts")
    seen, tables = set(), []
    while len(tables) < size:
        t = tuple(int(v) for v in rng.integers(0, 2, size=D))
        if any(t) and t not in seen:
            seen.add(t)
            tables.append(t)
    return table_class(universe, tables)


def linear_class(weights, bound: float, degree: int = 1) -> HypothesisClass:
    return HypothesisClass([LinearHypothesis(np.asarray(w), degree) for w in weights], bound)


# ---------------------------------------------------------------------------
# transcripts


@dataclass(frozen=True)
class Transcript:
    """Per-round record of (context, prediction index, label, prediction distribution)."""

    grid: PredictionGrid
    contexts: np.ndarray  # T x d
    predictions: np.ndarray  # T, grid indices
    labels: np.ndarray  # T
    distributions: np.ndarray  # T x M

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.contexts, dtype=np.float64))
        p = np.asarray(self.predictions, dtype=np.int64)
        y = np.asarray(self.labels, dtype=np.float64)
        W = np.atleast_2d(np.asarray(self.distributions, dtype=np.float64))
        T = p.size
        if X.shape[0] != T or y.size != T or W.shape[0] != T:
            raise ValueError("transcript columns have inconsistent lengths")
        if W.shape[1] != self.grid.size:
            raise ValueError("distribution width does not match the grid")
        if T and (p.min() < 0 or p.max() > self.grid.m):
            raise ValueError("prediction index outside the grid")
        if np.any(y < 0) or np.any(y > 1):
            raise ValueError("labels must lie in [0,1]")
        if np.any(X < 0) or np.any(X > 1):
            raise ValueError("contexts must lie in [0,1]^d")
        if np.any(W < 0) or np.any(np.abs(W.sum(axis=1) - 1.0) > NORM_TOL):
            raise ValueError("every stored distribution must be a probability vector")
        for name, arr in (("contexts", X), ("predictions", p), ("labels", y), ("distributions", W)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.predictions.size

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    @property
    def prediction_values(self) -> np.ndarray:
        return self.predictions / self.grid.m

    def head(self, n: int) -> "Transcript":
        return Transcript(self.grid, self.contexts[:n], self.predictions[:n],
                          self.labels[:n], self.distributions[:n])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        d, M = self.dim, self.grid.size
        writer.writerow(["round"] + [f"x{i}" for i in range(d)] + ["p_index", "y"]
                        + [f"w{i}" for i in range(M)])
        for t in range(len(self)):
            writer.writerow([t + 1] + [repr(float(v)) for v in self.contexts[t]]
                            + [int(self.predictions[t]), repr(float(self.labels[t]))]
                            + [repr(float(v)) for v in self.distributions[t]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Transcript":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty transcript file")
        header, body = rows[0], rows[1:]
        d = sum(1 for h in header if h.startswith("x"))
        M = sum(1 for h in header if h.startswith("w"))
        if header != (["round"] + [f"x{i}" for i in range(d)] + ["p_index", "y"]
                      + [f"w{i}" for i in range(M)]):
            raise ValueError(f"unrecognised transcript header: {header}")
        data = [[float(v) for v in r] for r in body if r]
        arr = np.array(data, dtype=np.float64).reshape(len(data), 1 + d + 2 + M)
        return cls(PredictionGrid(M - 1), arr[:, 1:1 + d], arr[:, 1 + d].astype(np.int64),
                   arr[:, 2 + d], arr[:, 3 + d:])

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "Transcript":
        with open(path) as fh:
            return cls.from_csv(fh.read())


def read_contexts(path) -> np.ndarray:
    """Delimited file, one context per row; a non-numeric first row is treated as a header."""
    rows = []
    with open(path) as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if i == 0:
                    continue
                raise
    if not rows:
        raise ValueError(f"no contexts in {path}")
    return np.array(rows, dtype=np.float64)


def l1(v) -> float:
    return float(np.abs(v).sum())
