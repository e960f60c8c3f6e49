"""Comparing learned policies: bootstrap tests, chess scores and the experiment grid.

Two policies are compared on a test set through the per-example differences
of their total costs.  Bootstrap means of those differences give a 95%
interval; an interval entirely below zero is a win for the first policy.  Wins
and ties accumulate into chess scores over cost levels and replicas.
"""

from __future__ import annotations

import csv
import io
import json
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .aostar import AoConfig, ao_star, ppp_prune
from .dataset import CostModel, Dataset, Replica
from .errors import ConfigError, EmptyDatasetError, ExperimentError
from .graph import DEFAULT_BYTE_LIMIT
from .greedy import GreedyConfig, greedy_learn
from .mdp import Estimator
from .policy import Policy, example_costs

WIN, TIE, LOSS = "Win", "Tie", "Loss"
BOOTSTRAP_B = 1000


class Outcome(NamedTuple):
    variant: str
    ci: tuple[float, float]

    def mirror(self) -> "Outcome":
        flip = {WIN: LOSS, LOSS: WIN, TIE: TIE}[self.variant]
        return Outcome(flip, (-self.ci[1], -self.ci[0]))


def classify(low: float, high: float) -> str:
    if high < 0:
        return WIN
    if low > 0:
        return LOSS
    return TIE


def bdelta_from_costs(c1, c2, B: int = BOOTSTRAP_B, seed: int = 0) -> Outcome:
    """Bootstrap interval on ``mean(c1 - c2)``; negative means the first policy is cheaper."""
    delta = np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float)
    m = len(delta)
    if m == 0:
        raise EmptyDatasetError("empty test set")
    idx = np.random.default_rng(seed).integers(0, m, size=(B, m))
    means = np.sort(delta[idx].mean(axis=1))
    drop = int(round(0.025 * B))
    low, high = float(means[drop]), float(means[B - drop - 1])
    return Outcome(classify(low, high), (low, high))


def bdelta_cost(p1: Policy, p2: Policy, data: Dataset, test_idx, cm: CostModel,
                B: int = BOOTSTRAP_B, seed: int = 0) -> Outcome:
    """BDeltaCost comparison of two policies on the examples ``data[test_idx]``."""
    if len(test_idx) == 0:
        raise EmptyDatasetError("empty test set")
    c1 = example_costs(p1, data, test_idx, cm)
    c2 = example_costs(p2, data, test_idx, cm)
    return bdelta_from_costs(c1, c2, B, seed)


def chess_score(results: Iterable[Outcome | str]) -> float:
    score = 0.0
    for r in results:
        v = r.variant if isinstance(r, Outcome) else r
        score += 1.0 if v == WIN else 0.5 if v == TIE else 0.0
    return score


# ---------------------------------------------------------------------------
# Score bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class ScoreTable:
    """Win/tie/loss counts per (domain, algorithm, opponent)."""

    counts: dict[tuple[str, str, str], list[int]] = field(default_factory=dict)

    def add(self, domain: str, a: str, b: str, outcome: Outcome | str) -> None:
        """Record a game of ``a`` against ``b`` and its mirror for ``b``."""
        v = outcome.variant if isinstance(outcome, Outcome) else outcome
        col = {WIN: 0, TIE: 1, LOSS: 2}[v]
        self.counts.setdefault((domain, a, b), [0, 0, 0])[col] += 1
        self.counts.setdefault((domain, b, a), [0, 0, 0])[2 - col] += 1

    def record(self, domain: str, a: str, b: str) -> tuple[int, int, int]:
        return tuple(self.counts.get((domain, a, b), (0, 0, 0)))

    def score(self, domain: str, a: str, b: str | None = None) -> float:
        """Head-to-head score against ``b``, or the overall score when ``b`` is None."""
        w, t, _ = self._sum(domain, a, b)
        return w + 0.5 * t

    def games(self, domain: str, a: str, b: str | None = None) -> int:
        return sum(self._sum(domain, a, b))

    def tie_score(self, domain: str, a: str, b: str | None = None) -> float:
        return 0.5 * self.games(domain, a, b)

    def _sum(self, domain, a, b):
        tot = [0, 0, 0]
        for (d, x, y), c in self.counts.items():
            if d == domain and x == a and (b is None or y == b):
                tot = [p + q for p, q in zip(tot, c)]
        return tot

    def domains(self) -> list[str]:
        return sorted({d for d, _, _ in self.counts})

    def algorithms(self, domain: str) -> list[str]:
        return sorted({a for d, a, _ in self.counts if d == domain})

    def rows(self) -> list[dict]:
        out = []
        for (d, a, b) in sorted(self.counts):
            w, t, l = self.counts[(d, a, b)]
            out.append({"domain": d, "algorithm": a, "opponent": b, "wins": w, "ties": t,
                        "losses": l, "games": w + t + l, "score": w + 0.5 * t,
                        "tie_score": 0.5 * (w + t + l)})
        return out


# ---------------------------------------------------------------------------
# Algorithm registry
# ---------------------------------------------------------------------------


BASE_ALGORITHMS = ("AO*", "SP", "ES", "PPP", "Nor", "MC-N", "VOI")
ALGORITHMS = tuple(n for b in BASE_ALGORITHMS for n in (b, b + "-L"))
_GREEDY = {"Nor": "Nor", "MC-N": "MCN", "VOI": "VOI"}


class Algorithm(NamedTuple):
    name: str
    base: str
    laplace: bool

    @property
    def systematic(self) -> bool:
        return self.base not in _GREEDY


def parse_algorithm(name: str) -> Algorithm:
    m = re.fullmatch(r"(.+?)(-L)?", name.strip())
    base, laplace = m.group(1), m.group(2) is not None
    if base not in BASE_ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; valid names: {', '.join(ALGORITHMS)}")
    return Algorithm(base + ("-L" if laplace else ""), base, laplace)


def ao_config(algo: Algorithm, seed: int = 0, byte_limit: int = DEFAULT_BYTE_LIMIT) -> AoConfig:
    return AoConfig(laplace=algo.laplace, sp=algo.base == "SP", es=algo.base == "ES",
                    ppp=algo.base == "PPP", byte_limit=byte_limit, seed=seed)


def learn(algo: Algorithm | str, data: Dataset, cm: CostModel, indices=None, seed: int = 0,
          byte_limit: int = DEFAULT_BYTE_LIMIT):
    """Train one named algorithm; returns (policy, search trace or None for greedy learners)."""
    if isinstance(algo, str):
        algo = parse_algorithm(algo)
    if algo.systematic:
        return ao_star(data, cm, ao_config(algo, seed, byte_limit), indices)
    return greedy_learn(data, cm, GreedyConfig(_GREEDY[algo.base], algo.laplace), indices), None


# ---------------------------------------------------------------------------
# Experiment grid
# ---------------------------------------------------------------------------


def cell_seeds(seed: int, level: int, replica: int) -> tuple[int, int]:
    """(search seed, bootstrap seed) for one grid cell."""
    s = np.random.SeedSequence([seed, level, replica]).generate_state(2)
    return int(s[0]), int(s[1])


@dataclass
class CellResult:
    level: str
    replica: int
    search_seed: int
    bootstrap_seed: int
    v_test: dict[str, float]
    n_tests: dict[str, int]
    memory_exhausted: dict[str, bool]
    games: list[tuple[str, str, str, tuple[float, float]]]
    seconds: dict[str, float]


def run_cell(data: Dataset, cm: CostModel, level: str, level_idx: int, replica: Replica,
             algorithms: Sequence[str], seed: int, B: int = BOOTSTRAP_B,
             byte_limit: int = DEFAULT_BYTE_LIMIT) -> CellResult:
    """Train every algorithm on one replica and play every pair on its test split."""
    search_seed, boot_seed = cell_seeds(seed, level_idx, replica.id)
    cm = cm.for_dataset(data)
    train, test = np.asarray(replica.train_idx), np.asarray(replica.test_idx)
    policies, costs, seconds, exhausted = {}, {}, {}, {}
    plain = {}  # laplace -> plain AO* (policy, trace), shared with PPP
    for name in algorithms:
        algo = parse_algorithm(name)
        t0 = time.perf_counter()
        try:
            if algo.base in ("AO*", "PPP"):
                if algo.laplace not in plain:
                    plain[algo.laplace] = learn(parse_algorithm("AO*" + "-L" * algo.laplace), data, cm,
                                                train, search_seed, byte_limit)
                policy, trace = plain[algo.laplace]
                if algo.base == "PPP":
                    est = Estimator(data, train, laplace=algo.laplace)
                    policy = ppp_prune(policy, est, cm, algo.laplace)
            else:
                policy, trace = learn(algo, data, cm, train, search_seed, byte_limit)
            costs[name] = example_costs(policy, data, test, cm)
        except Exception as exc:
            raise ExperimentError(f"level {level!r}, replica {replica.id}, algorithm {name}: {exc}") from exc
        seconds[name] = time.perf_counter() - t0
        policies[name] = policy
        exhausted[name] = bool(trace is not None and trace.memory_exhausted)
    games = []
    for a, b in combinations(algorithms, 2):
        out = bdelta_from_costs(costs[a], costs[b], B, boot_seed)
        games.append((a, b, out.variant, out.ci))
    return CellResult(level, replica.id, search_seed, boot_seed,
                      {a: float(costs[a].mean()) for a in algorithms},
                      {a: policies[a].n_tests for a in algorithms},
                      exhausted, games, seconds)


def _run_cell_args(args):
    return run_cell(*args)


@dataclass
class Experiment:
    domain: str
    algorithms: list[str]
    levels: list[str]
    seed: int
    replicas: list[Replica]
    cells: list[CellResult]
    table: ScoreTable

    def manifest(self) -> dict:
        return {
            "domain": self.domain,
            "seed": self.seed,
            "algorithms": self.algorithms,
            "levels": self.levels,
            "replicas": [{"id": r.id, "seed": r.seed} for r in self.replicas],
            "cells": [{"level": c.level, "replica": c.replica, "search_seed": c.search_seed,
                       "bootstrap_seed": c.bootstrap_seed} for c in self.cells],
        }

    def scores_csv(self) -> str:
        buf = io.StringIO()
        rows = self.table.rows()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["domain"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "replica", "algorithm", "v_test", "n_tests", "memory_exhausted"])
        for c in self.cells:
            for a in self.algorithms:
                w.writerow([c.level, c.replica, a, repr(c.v_test[a]), c.n_tests[a], c.memory_exhausted[a]])
        return buf.getvalue()

    def report(self) -> dict:
        d = self.domain
        return {
            "domain": d,
            "overall": {a: {"score": self.table.score(d, a), "games": self.table.games(d, a),
                            "tie_score": self.table.tie_score(d, a)} for a in self.algorithms},
            "pairs": self.table.rows(),
            "games": [{"level": c.level, "replica": c.replica, "algorithm": a, "opponent": b,
                       "outcome": v, "ci": list(ci)} for c in self.cells for a, b, v, ci in c.games],
        }

    def summary(self) -> str:
        d = self.domain
        ranked = sorted(self.algorithms, key=lambda a: (-self.table.score(d, a), a))
        lines = [f"domain {d}: {len(self.levels)} cost levels x {len(self.replicas)} replicas",
                 f"top algorithm: {ranked[0]}"]
        for a in ranked:
            s, tie = self.table.score(d, a), self.table.tie_score(d, a)
            flag = "  below Tie-Score" if s < tie else ""
            lines.append(f"  {a:8s} score {s:7.1f} / tie {tie:6.1f}{flag}")
        return "\n".join(lines) + "\n"

    def write(self, outdir) -> None:
        from pathlib import Path
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scores.csv").write_text(self.scores_csv())
        (out / "results.csv").write_text(self.results_csv())
        (out / "report.json").write_text(json.dumps(self.report(), indent=1, sort_keys=True))
        (out / "summary.txt").write_text(self.summary())
        (out / "manifest.json").write_text(json.dumps(self.manifest(), indent=1, sort_keys=True))


def run_experiment(data: Dataset, cost_levels: Mapping[str, CostModel], replicas: Sequence[Replica],
                   algorithms: Sequence[str], seed: int = 0, *, domain: str = "domain",
                   B: int = BOOTSTRAP_B, byte_limit: int = DEFAULT_BYTE_LIMIT, jobs: int = 1,
                   progress: Callable[[CellResult], None] | None = None) -> Experiment:
    """Train and compare every algorithm on every (cost level, replica) cell.

    Each unordered pair plays one game per cell; the mirrored result is
    credited to the opponent.  Results do not depend on ``jobs``.
    """
    algorithms = [parse_algorithm(a).name for a in algorithms]
    if len(algorithms) < 2 or len(set(algorithms)) != len(algorithms):
        raise ConfigError("need at least two distinct algorithms")
    levels = list(cost_levels)
    tasks = [(data, cost_levels[lv], lv, i, r, algorithms, seed, B, byte_limit)
             for i, lv in enumerate(levels) for r in replicas]
    cells = []
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            for cell in pool.map(_run_cell_args, tasks):
                cells.append(cell)
                if progress:
                    progress(cell)
    else:
        for t in tasks:
            cells.append(run_cell(*t))
            if progress:
                progress(cells[-1])
    table = ScoreTable()
    for c in cells:
        for a, b, v, _ in c.games:
            table.add(domain, a, b, v)
    return Experiment(domain, algorithms, levels, seed, list(replicas), cells, table)
