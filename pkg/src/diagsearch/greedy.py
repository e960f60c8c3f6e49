"""Greedy top-down policy learners: Nor, MC-N and VOI, each optionally Laplace-corrected.

Nor and MC-N pick tests by information gain per unit cost (Norton's rule)
under a minimum-support condition.  Nor labels leaves with the most likely
class and is post-pruned C4.5 style; MC-N labels leaves with the cheapest
diagnosis and is post-pruned on expected total cost.  VOI looks one test ahead
and only tests when that is expected to be cheaper than diagnosing now.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import CostModel, Dataset
from .errors import ConfigError
from .mdp import Estimator, State, best_diagnosis_from, entropy
from .policy import DiagnoseNode, Policy, TestNode, annotate

C45_CF_Z = 0.6744898
METHODS = ("Nor", "MCN", "VOI")

__all__ = [
    "GreedyConfig", "entropy", "info_gain", "grow_nor", "grow_mcn", "grow_voi",
    "c45_pessimistic_error", "c45_post_prune", "post_prune_expected_cost",
    "one_step_la", "greedy_learn",
]


@dataclass(frozen=True)
class GreedyConfig:
    method: str = "Nor"
    laplace: bool = False
    min_support: tuple[int, int] = (2, 2)  # (outcomes, examples per outcome)
    c45_cf_z: float = C45_CF_Z

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown greedy method {self.method!r}; expected one of {METHODS}")


# ---------------------------------------------------------------------------
# Selection criteria
# ---------------------------------------------------------------------------


def _table(est: Estimator, match: np.ndarray, n: int) -> np.ndarray:
    """Outcome-by-class count table of test ``n`` over ``match``."""
    K = est.n_classes
    flat = est.X[match, n] * K + est.y[match]
    return np.bincount(flat, minlength=est.arities[n] * K).reshape(est.arities[n], K).astype(float)


def _dist(counts: np.ndarray, laplace: bool) -> np.ndarray:
    """Row-wise ``Estimator.smooth``; all-zero ML rows stay zero."""
    if laplace:
        return (counts + 1.0) / (counts.sum(axis=-1, keepdims=True) + counts.shape[-1])
    tot = counts.sum(axis=-1, keepdims=True)
    return np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0)


def _h(p: np.ndarray) -> np.ndarray:
    logs = np.log2(p, out=np.zeros_like(p), where=p > 0)
    return -(p * logs).sum(axis=-1)


def _gain(est: Estimator, match: np.ndarray, n: int) -> float:
    table = _table(est, match, n)
    pv = _dist(table.sum(axis=1), est.laplace)
    return float(_h(_dist(table.sum(axis=0), est.laplace)) - pv @ _h(_dist(table, est.laplace)))


def info_gain(est: Estimator, s: State, n: int) -> float:
    """Mutual information (bits) between test ``n`` and the class, in state ``s``."""
    if n in s:
        raise ValueError(f"attribute {n} already measured in {s}")
    return _gain(est, est.match_local(s), n)


def _supported(est: Estimator, match: np.ndarray, n: int, min_support: tuple[int, int]) -> bool:
    outcomes, examples = min_support
    return int((est.outcome_counts(match, n) >= examples).sum()) >= outcomes


def _la(est: Estimator, cm: CostModel, match: np.ndarray, n: int, cost: float) -> float:
    table = _table(est, match, n)
    pv = _dist(table.sum(axis=1), est.laplace)
    # ML rows with no examples have pv = 0 and contribute nothing
    return cost + float(pv @ (_dist(table, est.laplace) @ cm.mc.T).min(axis=1))


def one_step_la(est: Estimator, cm: CostModel, s: State, n: int) -> float:
    """Expected cost of measuring ``n`` in ``s`` and then diagnosing at once."""
    if n in s:
        raise ValueError(f"attribute {n} already measured in {s}")
    cm = cm.for_dataset(est.data)
    cost = float(cm.test_cost[est.data.names[n]])
    return _la(est, cm, est.match_local(s), n, cost)


# ---------------------------------------------------------------------------
# Norton growth (shared by Nor and MC-N)
# ---------------------------------------------------------------------------


def _grow_norton(est: Estimator, tc: np.ndarray, leaf, min_support) -> Policy:
    """Grow by argmax gain/cost; ``leaf(match, parent_match)`` picks a class index."""
    data = est.data

    def rec(match, measured, parent):
        if len(match) == 0:
            return DiagnoseNode(data.classes[leaf(match, parent)])
        counts = est.class_counts(match)
        best, best_ratio = None, -math.inf
        if (counts > 0).sum() > 1:
            for n in range(data.n_attributes):
                if n in measured or not _supported(est, match, n, min_support):
                    continue
                ratio = _gain(est, match, n) / tc[n]
                if ratio > best_ratio:
                    best, best_ratio = n, ratio
        if best is None:
            return DiagnoseNode(data.classes[leaf(match, parent)])
        meta = data.attributes[best]
        children = {
            label: rec(est.refine(match, best, v), measured | {best}, match)
            for v, label in enumerate(meta.values)
        }
        return TestNode(meta.name, children)

    return Policy(rec(np.arange(len(est)), frozenset(), None))


def _majority(est: Estimator, match, parent) -> int:
    if len(match) == 0:
        match = parent
    return int(np.argmax(est.class_counts(match)))


def _cheapest(est: Estimator, cm: CostModel):
    def leaf(match, parent):
        if len(match) == 0 and not est.laplace:
            match = parent
        return best_diagnosis_from(cm, est.smooth(est.class_counts(match)))[0]
    return leaf


def grow_nor(data: Dataset, cm: CostModel, cfg: GreedyConfig | None = None, indices=None) -> Policy:
    """Norton-grown tree with most-likely-class leaves, then C4.5 pessimistic pruning."""
    cfg = cfg or GreedyConfig("Nor")
    cm = cm.for_dataset(data)
    est = Estimator(data, indices, laplace=cfg.laplace)
    grown = _grow_norton(est, cm.test_costs(data.names), lambda m, p: _majority(est, m, p), cfg.min_support)
    return annotate(c45_post_prune(grown, est, cfg.laplace, cfg.c45_cf_z), est, cm)


def grow_mcn(data: Dataset, cm: CostModel, cfg: GreedyConfig | None = None, indices=None) -> Policy:
    """Norton-grown tree with cheapest-diagnosis leaves, then expected-cost pruning."""
    cfg = cfg or GreedyConfig("MCN")
    cm = cm.for_dataset(data)
    est = Estimator(data, indices, laplace=cfg.laplace)
    grown = _grow_norton(est, cm.test_costs(data.names), _cheapest(est, cm), cfg.min_support)
    return post_prune_expected_cost(grown, est, cm)


def grow_voi(data: Dataset, cm: CostModel, cfg: GreedyConfig | None = None, indices=None) -> Policy:
    """Test the attribute with the cheapest one-step lookahead while that beats diagnosing."""
    cfg = cfg or GreedyConfig("VOI")
    cm = cm.for_dataset(data)
    est = Estimator(data, indices, laplace=cfg.laplace)
    tc = cm.test_costs(data.names)

    def rec(match, measured):
        k, c_diag = best_diagnosis_from(cm, est.smooth(est.class_counts(match)))
        best, best_la = None, math.inf
        for n in range(data.n_attributes):
            if n in measured:
                continue
            la = _la(est, cm, match, n, tc[n])
            if la < best_la:
                best, best_la = n, la
        if best is None or not c_diag - best_la > 0:
            return DiagnoseNode(data.classes[k])
        meta = data.attributes[best]
        probs = est.smooth(est.outcome_counts(match, best))
        children = {}
        for v, label in enumerate(meta.values):
            if probs[v] > 0:
                children[label] = rec(est.refine(match, best, v), measured | {best})
            else:
                children[label] = DiagnoseNode(data.classes[k])
        return TestNode(meta.name, children)

    return annotate(Policy(rec(np.arange(len(est)), frozenset())), est, cm)


def greedy_learn(data: Dataset, cm: CostModel, cfg: GreedyConfig, indices=None) -> Policy:
    return {"Nor": grow_nor, "MCN": grow_mcn, "VOI": grow_voi}[cfg.method](data, cm, cfg, indices)


# ---------------------------------------------------------------------------
# Post-pruning
# ---------------------------------------------------------------------------


def c45_pessimistic_error(n: int, e: float, z: float = C45_CF_Z, p: float | None = None) -> float:
    """Pessimistic error count ``n * UCL``; ``p`` overrides the observed rate ``e / n``."""
    if n <= 0:
        raise ValueError("pessimistic error needs at least one example")
    if p is None:
        p = e / n
    ucl = p + z * math.sqrt(p * (1.0 - p) / n) + 1.0 / (2 * n)
    return n * min(max(ucl, 0.0), 1.0)


def _leaf_error(est: Estimator, match: np.ndarray, k: int, laplace: bool, z: float) -> float:
    n = len(match)
    if n == 0:
        return 0.0
    counts = est.class_counts(match)
    e = n - int(counts[k])
    p = (e + est.n_classes - 1) / (n + est.n_classes) if laplace else None
    return c45_pessimistic_error(n, e, z, p)


def c45_post_prune(policy: Policy, est: Estimator, laplace: bool | None = None,
                   z: float = C45_CF_Z) -> Policy:
    """Collapse a test to a majority leaf when its leaves' pessimistic errors sum to at least the leaf's."""
    if laplace is None:
        laplace = est.laplace
    data = est.data

    def rec(node, match):
        if isinstance(node, DiagnoseNode):
            return node, _leaf_error(est, match, data.class_index(node.diagnosis), laplace, z)
        n = data.attribute_index(node.attribute)
        meta = data.attributes[n]
        children, total = {}, 0.0
        for v, label in enumerate(meta.values):
            child, err = rec(node.children[label], est.refine(match, n, v))
            children[label] = child
            total += err
        k = int(np.argmax(est.class_counts(match)))
        as_leaf = _leaf_error(est, match, k, laplace, z)
        if total >= as_leaf:
            return DiagnoseNode(data.classes[k]), as_leaf
        return TestNode(node.attribute, children), total

    return Policy(rec(policy.root, np.arange(len(est)))[0])


def post_prune_expected_cost(policy: Policy, est: Estimator, cm: CostModel) -> Policy:
    """Collapse a test to the best diagnosis when diagnosing is strictly cheaper than the subtree."""
    data = est.data
    cm = cm.for_dataset(data)
    tc = cm.test_costs(data.names)

    def rec(node, match):
        pc = est.smooth(est.class_counts(match))
        if isinstance(node, DiagnoseNode):
            return node, float(cm.mc[data.class_index(node.diagnosis)] @ pc)
        n = data.attribute_index(node.attribute)
        meta = data.attributes[n]
        probs = est.smooth(est.outcome_counts(match, n))
        children, q = {}, float(tc[n])
        for v, label in enumerate(meta.values):
            child = node.children[label]
            if probs[v] > 0:
                child, cv = rec(child, est.refine(match, n, v))
                q += probs[v] * cv
            children[label] = child
        k, c_diag = best_diagnosis_from(cm, pc)
        if c_diag < q:
            return DiagnoseNode(data.classes[k]), c_diag
        return TestNode(node.attribute, children), q

    return annotate(Policy(rec(policy.root, np.arange(len(est)))[0]), est, cm)
