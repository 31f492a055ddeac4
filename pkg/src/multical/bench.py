"""Sweeps over horizons and seeds, results files, class specs and rate fitting.

Configuration is a flat ``key = value`` text file; every resolved default is echoed into
the results header so a results file describes the run that produced it.
"""
from __future__ import annotations

import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (HypothesisClass, Universe, linear_class, make_rng, random_table_class,
                   read_contexts, table_class)
from .covers import CoverSpec, linear_cover
from .reduction import LEARNERS, ExperimentConfig, run_experiment
from .streams import STREAM_KINDS, StreamSpec

RESULT_COLUMNS = ("T", "seed", "m", "epsilon", "K", "regret", "wall_ms")

# 16 random binary tables over 8 random contexts in [0,1]^2
DEFAULT_CLASS = {"kind": "random-table", "n_contexts": 8, "d": 2, "size": 16,
                 "universe_seed": 0, "seed": 1}


# ---------------------------------------------------------------------------
# hypothesis class specs


def _universe_from(spec: dict, base: Path | None) -> Universe:
    if "universe" in spec:
        return Universe(np.asarray(spec["universe"], dtype=np.float64))
    if "universe_file" in spec:
        path = Path(spec["universe_file"])
        if base is not None and not path.is_absolute():
            path = base / path
        return Universe(read_contexts(path))
    n, d = int(spec["n_contexts"]), int(spec.get("d", 2))
    return Universe(make_rng(int(spec.get("universe_seed", 0))).random((n, d)))


def build_class(spec: dict, base: Path | None = None) -> HypothesisClass:
    """Hypothesis class from a JSON-style dict.

    kinds: ``table`` (universe + members), ``random-table`` (universe + size + seed),
    ``linear`` (weights, B, k) and ``linear-cover`` (d, k, B, beta).
    """
    kind = spec.get("kind")
    if kind == "table":
        return table_class(_universe_from(spec, base), spec["members"])
    if kind == "random-table":
        return random_table_class(_universe_from(spec, base), int(spec["size"]),
                                  make_rng(int(spec.get("seed", 0))))
    if kind == "linear":
        return linear_class(spec["weights"], float(spec.get("B", 1.0)), int(spec.get("k", 1)))
    if kind == "linear-cover":
        return linear_cover(CoverSpec(int(spec["d"]), float(spec["beta"]),
                                      float(spec.get("B", 1.0)), int(spec.get("k", 1))))
    raise ValueError(f"unknown class kind {kind!r}")


def load_class(path) -> HypothesisClass:
    path = Path(path)
    with open(path) as fh:
        return build_class(json.load(fh), path.parent)


# ---------------------------------------------------------------------------
# config files


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {n}: empty key")
        out[key] = value
    return out


def _int_list(text: str) -> tuple[int, ...]:
    vals = []
    for tok in text.replace(",", " ").split():
        if "^" in tok:
            b, e = tok.split("^")
            vals.append(int(b) ** int(e))
        else:
            vals.append(int(tok))
    return tuple(vals)


def _opt(text: str | None, cast):
    if text is None or text.lower() in ("", "none", "auto"):
        return None
    return cast(text)


@dataclass
class SweepConfig:
    learner: str = "linolpo"
    T: tuple[int, ...] = (1024, 2048, 4096)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    class_spec: dict = field(default_factory=lambda: dict(DEFAULT_CLASS))
    stream: StreamSpec = field(default_factory=StreamSpec)
    m: int | None = None
    epsilon: float | None = None
    output: str | None = None
    workers: int = 1
    timing: bool = True

    def __post_init__(self):
        self.T = tuple(int(t) for t in self.T)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}")
        if not self.T or any(t < 1 for t in self.T):
            raise ValueError("T values must be positive")
        if any(b <= a for a, b in zip(self.T, self.T[1:])):
            raise ValueError("T values must be strictly increasing")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_mapping(cls, kv: dict[str, str], base: Path | None = None) -> "SweepConfig":
        """Keys: learner, T, seeds (count) or seed_list, class (JSON file), stream, bias,
        stream_weights, script, m, epsilon, output, workers, timing."""
        known = {"learner", "T", "seeds", "seed_list", "class", "stream", "bias",
                 "stream_weights", "script", "m", "epsilon", "output", "workers", "timing"}
        unknown = set(kv) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        args = {}
        if "learner" in kv:
            args["learner"] = kv["learner"]
        if "T" in kv:
            args["T"] = _int_list(kv["T"])
        if "seed_list" in kv:
            args["seeds"] = _int_list(kv["seed_list"])
        elif "seeds" in kv:
            args["seeds"] = tuple(range(int(kv["seeds"])))
        if "class" in kv:
            path = Path(kv["class"])
            if base is not None and not path.is_absolute():
                path = base / path
            with open(path) as fh:
                spec = json.load(fh)
            if "universe_file" in spec and not Path(spec["universe_file"]).is_absolute():
                spec["universe_file"] = str(path.parent / spec["universe_file"])
            args["class_spec"] = spec
        kind = kv.get("stream", "stochastic-linear")
        if kind not in STREAM_KINDS:
            raise ValueError(f"unknown stream kind {kind!r}")
        weights = _opt(kv.get("stream_weights"),
                       lambda s: tuple(float(v) for v in s.replace(",", " ").split()))
        args["stream"] = StreamSpec(kind, bias=float(kv.get("bias", 0.5)), weights=weights,
                                    script=kv.get("script"))
        args["m"] = _opt(kv.get("m"), int)
        args["epsilon"] = _opt(kv.get("epsilon"), float)
        args["output"] = kv.get("output")
        args["workers"] = int(kv.get("workers", 1))
        args["timing"] = kv.get("timing", "true").lower() in ("1", "true", "yes", "on")
        return cls(**args)

    @classmethod
    def from_file(cls, path, overrides: dict[str, str] | None = None) -> "SweepConfig":
        path = Path(path)
        kv = parse_kv(path.read_text())
        kv.update(overrides or {})
        return cls.from_mapping(kv, path.parent)

    def experiment(self, hclass: HypothesisClass, T: int, seed: int) -> ExperimentConfig:
        return ExperimentConfig(hclass, T, self.learner, seed, self.m, self.epsilon, self.stream)

    def echo(self) -> dict[str, str]:
        """Every setting and resolved default, for the results header."""
        out = {
            "learner": self.learner,
            "T": " ".join(map(str, self.T)),
            "seeds": " ".join(map(str, self.seeds)),
            "class": json.dumps(self.class_spec, sort_keys=True),
            "stream": self.stream.kind,
            "bias": repr(self.stream.bias),
            "stream_weights": "auto" if self.stream.weights is None
            else " ".join(repr(float(v)) for v in self.stream.weights),
            "m": "auto" if self.m is None else str(self.m),
            "epsilon": "auto" if self.epsilon is None else repr(self.epsilon),
            "timing": str(self.timing).lower(),
        }
        if self.learner.startswith("linolpo"):
            out["m_rule"] = "ceil(T^(1/3))"
            out["ogd_step"] = "sqrt(M/T)"
            out["mwu_rate"] = "sqrt(ln|H|/T)"
            out["mode"] = "mixture" if self.learner == "linolpo" else "sampled"
        else:
            out["m_rule"] = "ceil(T^(1/4))"
            out["epsilon_rule"] = "T^(-1/4)"
            out["noise"] = "Unif[0, sqrt(T)] per (separator context, grid point)"
            out["oracle"] = "exact enumeration over H, closed-form sign theta"
        return out


# ---------------------------------------------------------------------------
# results tables


@dataclass(frozen=True)
class ResultRow:
    T: int
    seed: int
    m: int
    epsilon: float | None
    K: float
    regret: float
    wall_ms: float


@dataclass
class ResultsTable:
    rows: list[ResultRow]
    header: dict[str, str] = field(default_factory=dict)

    def emit(self) -> str:
        buf = io.StringIO()
        for k, v in self.header.items():
            buf.write(f"# {k} = {v}\n")
        buf.write(",".join(RESULT_COLUMNS) + "\n")
        for r in self.rows:
            eps = "none" if r.epsilon is None else repr(r.epsilon)
            buf.write(f"{r.T},{r.seed},{r.m},{eps},{r.K!r},{r.regret!r},{r.wall_ms!r}\n")
        return buf.getvalue()

    @classmethod
    def parse(cls, text: str) -> "ResultsTable":
        header, rows, seen_columns = {}, [], False
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                header[k.strip()] = v.strip()
                continue
            cells = line.split(",")
            if not seen_columns:
                if tuple(cells) != RESULT_COLUMNS:
                    raise ValueError(f"unexpected results columns: {cells}")
                seen_columns = True
                continue
            if len(cells) != len(RESULT_COLUMNS):
                raise ValueError(f"malformed results row: {line!r}")
            T, seed, m, eps, K, regret, wall = cells
            rows.append(ResultRow(int(T), int(seed), int(m),
                                  None if eps == "none" else float(eps),
                                  float(K), float(regret), float(wall)))
        return cls(rows, header)

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.emit())

    @classmethod
    def load(cls, path) -> "ResultsTable":
        with open(path) as fh:
            return cls.parse(fh.read())


def result_row(result, timing: bool = True) -> ResultRow:
    cfg = result.config
    return ResultRow(cfg.T, cfg.seed, result.grid.m, cfg.resolved_epsilon(), result.k_max,
                     result.regret, result.wall_ms if timing else 0.0)


def _run_cell(args) -> ResultRow:
    cfg, T, seed = args
    hclass = build_class(cfg.class_spec)
    return result_row(run_experiment(cfg.experiment(hclass, T, seed)), cfg.timing)


def run_sweep(cfg: SweepConfig) -> ResultsTable:
    """One row per (T, seed), ordered by T then seed regardless of worker count."""
    cells = [(cfg, T, s) for T in cfg.T for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        hclass = build_class(cfg.class_spec)
        rows = [result_row(run_experiment(cfg.experiment(hclass, T, s)), cfg.timing)
                for _, T, s in cells]
    table = ResultsTable(rows, cfg.echo())
    if cfg.output:
        table.save(cfg.output)
    return table


# ---------------------------------------------------------------------------
# rate fitting


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    T: np.ndarray
    mean_K: np.ndarray
    stderr_K: np.ndarray
    scatter: dict

    def predict(self, T) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(T, dtype=np.float64) ** self.slope


def fit_rate(data) -> RateFit:
    """Least squares of log(mean K) on log T over the per-T means across seeds.

    ``data`` is a ResultsTable or an iterable of (T, K) pairs.
    """
    pairs = [(r.T, r.K) for r in data.rows] if isinstance(data, ResultsTable) else list(data)
    groups: dict[int, list[float]] = {}
    for T, K in pairs:
        groups.setdefault(int(T), []).append(float(K))
    if len(groups) < 3:
        raise ValueError(f"rate fit needs at least 3 distinct T, got {len(groups)}")
    Ts = np.array(sorted(groups), dtype=np.float64)
    means = np.array([np.mean(groups[int(t)]) for t in Ts])
    stderr = np.array([np.std(groups[int(t)], ddof=1) / math.sqrt(len(groups[int(t)]))
                       if len(groups[int(t)]) > 1 else 0.0 for t in Ts])
    floor = np.finfo(np.float64).eps
    if np.any(means <= 0):
        warnings.warn("nonpositive mean K replaced by machine epsilon before the log fit")
        means = np.maximum(means, floor)
    A = np.column_stack([np.log(Ts), np.ones_like(Ts)])
    (slope, intercept), *_ = np.linalg.lstsq(A, np.log(means), rcond=None)
    if not math.isfinite(slope):
        raise ValueError("rate fit produced a non-finite slope")
    return RateFit(float(slope), float(intercept), Ts, means, stderr,
                   {int(t): tuple(groups[int(t)]) for t in Ts})


def strictly_decreasing(values) -> bool:
    v = np.asarray(values, dtype=np.float64)
    return bool(np.all(np.diff(v) < 0))


def format_fit(fit: RateFit) -> str:
    lines = [f"{'T':>8} {'mean K':>12} {'stderr':>10}"]
    for t, k, s in zip(fit.T, fit.mean_K, fit.stderr_K):
        lines.append(f"{int(t):>8} {k:>12.6f} {s:>10.6f}")
    lines.append(f"slope = {fit.slope:.4f}, intercept = {fit.intercept:.4f}")
    return "\n".join(lines)


__all__ = [
    "DEFAULT_CLASS", "RESULT_COLUMNS", "RateFit", "ResultRow", "ResultsTable", "SweepConfig",
    "build_class", "fit_rate", "format_fit", "load_class", "parse_kv", "result_row",
    "run_sweep", "strictly_decreasing",
]
