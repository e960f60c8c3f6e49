"""Shared fixtures: tiny datasets, random instances and an exhaustive DP oracle."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pytest

from diagsearch.dataset import AttributeMeta, CostModel, Dataset
from diagsearch.greedy import one_step_la
from diagsearch.mdp import Estimator, State
from diagsearch.policy import TestNode


def make_dataset(X, y, arities=None, classes=("c0", "c1")) -> Dataset:
    X = np.asarray(X, dtype=np.int64)
    if X.ndim == 1:
        X = X[:, None]
    if arities is None:
        arities = [max(2, int(X[:, n].max()) + 1) if len(X) else 2 for n in range(X.shape[1])]
    attrs = tuple(AttributeMeta(f"x{n}", tuple(f"v{v}" for v in range(a))) for n, a in enumerate(arities))
    return Dataset(attrs, tuple(classes), X, np.asarray(y, dtype=np.int64))


def make_costs(data: Dataset, test_costs, mc) -> CostModel:
    return CostModel(dict(zip(data.names, map(float, test_costs))), mc, data.classes)


@dataclass
class Instance:
    data: Dataset
    cm: CostModel
    seed: int


def random_instance(seed: int, max_tests: int = 4, max_examples: int = 64) -> Instance:
    """Binary tests, two classes, labels partly driven by the attributes."""
    rng = np.random.default_rng(seed)
    N = int(rng.integers(1, max_tests + 1))
    m = int(rng.integers(1, max_examples + 1))
    X = rng.integers(0, 2, size=(m, N))
    w = rng.normal(size=N)
    logits = (X - 0.5) @ w * 3 + rng.normal(size=m)
    y = (logits > 0).astype(int)
    data = make_dataset(X, y, [2] * N)
    tc = rng.uniform(0.1, 10.0, size=N)
    mc = rng.uniform(0.0, 100.0, size=(2, 2))
    mc[0, 0] *= rng.integers(0, 2)
    mc[1, 1] *= rng.integers(0, 2)
    return Instance(data, make_costs(data, tc, mc), seed)


def dp_optimum(est: Estimator, cm: CostModel) -> float:
    """Optimal expected cost by backward induction over every reachable state."""
    cm = cm.for_dataset(est.data)
    tc = cm.test_costs(est.data.names)
    N = est.n_attributes

    @lru_cache(maxsize=None)
    def value(pairs: tuple) -> float:
        match = est.match_local(State(pairs))
        best = float((cm.mc @ est.smooth(est.class_counts(match))).min())
        measured = {n for n, _ in pairs}
        for n in range(N):
            if n in measured:
                continue
            probs = est.smooth(est.outcome_counts(match, n))
            q = tc[n]
            for v, p in enumerate(probs):
                if p > 0:
                    q += p * value(State(pairs).extend(n, v).pairs)
            best = min(best, q)
        return best

    return value(())


def walk(policy, data: Dataset):
    """Yield (state, node) for every node reachable in ``policy``."""
    stack = [(State(), policy.root)]
    while stack:
        s, node = stack.pop()
        yield s, node
        if isinstance(node, TestNode):
            n = data.attribute_index(node.attribute)
            for v, label in enumerate(data.attributes[n].values):
                stack.append((s.extend(n, v), node.children[label]))


def voi_violations(policy, est: Estimator, cm: CostModel, tol: float = 1e-9) -> list:
    """Internal nodes of an annotated VOI policy breaking Q <= 1-step-LA < C(s, f_best)."""
    data = est.data
    cm = cm.for_dataset(data)
    bad = []
    for s, node in walk(policy, data):
        if not isinstance(node, TestNode) or node.value is None:
            continue
        n = data.attribute_index(node.attribute)
        la = one_step_la(est, cm, s, n)
        _, c_best = est.best_diagnosis(cm, s)
        if not (node.value <= la + tol and la < c_best):
            bad.append((s, node.attribute, node.value, la, c_best))
    return bad


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def tiny():
    """Eight examples, two binary tests; x0 determines the class, x1 is noise."""
    X = [[0, 0], [0, 1], [0, 0], [0, 1], [1, 0], [1, 1], [1, 0], [1, 1]]
    y = [0, 0, 0, 0, 1, 1, 1, 1]
    return make_dataset(X, y)


@pytest.fixture(scope="session")
def pima():
    from diagsearch.dataset import discretize, load_pima, preprocess
    return discretize(preprocess(load_pima()))


@pytest.fixture(scope="session")
def pima_costs(pima):
    from importlib.resources import files
    from diagsearch.dataset import load_cost_models
    path = files("diagsearch") / "data" / "pima_costs.json"
    return {k: cm.for_dataset(pima) for k, cm in load_cost_models(path).items()}
