"""AO* for diagnostic policies, with its regularizers.

Every iteration either expands one AND node of the optimistic policy or, with
statistical pruning on, removes the optimistic action at the node about to be
expanded.  After each iteration the realistic policy is complete, so the search
can be stopped at any time.

Regularizers:

* Laplace   -- add-one smoothing of every probability (``laplace=True``);
* SP        -- statistical pruning of optimistic actions that cannot be told
  apart from the realistic policy (``sp=True``);
* ES        -- early stopping on a held-out half of the training set
  (``es=True``);
* PPP       -- pessimistic post-pruning of the final policy (``ppp=True``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .dataset import CostModel, Dataset, stratified_split
from .errors import ConfigError
from .graph import DEFAULT_BYTE_LIMIT, AndNode, AndOrGraph, MemoryLimitError, OrNode
from .mdp import Diagnose, Estimator, Test, best_diagnosis_from
from .policy import DiagnoseNode, Policy, TestNode, annotate

Z_95 = 1.959964


@dataclass
class AoConfig:
    laplace: bool = False
    sp: bool = False
    es: bool = False
    ppp: bool = False
    byte_limit: int = DEFAULT_BYTE_LIMIT
    max_iterations: int | None = None
    seed: int = 0
    ci_z_95: float = Z_95


@dataclass
class IterationRecord:
    iteration: int
    kind: str  # "expand" | "prune"
    state: list
    attribute: int
    v_opt: float
    v_real: float
    validation_cost: float | None = None


@dataclass
class PruneEvent:
    iteration: int
    state: list
    attribute: int
    v_opt: float
    v_real: float
    ci_lower: float
    n_examples: int
    real_changed: bool


@dataclass
class SearchTrace:
    records: list[IterationRecord] = field(default_factory=list)
    prune_events: list[PruneEvent] = field(default_factory=list)
    converged: bool = False
    memory_exhausted: bool = False
    truncated: bool = False
    initial_v_opt: float = math.nan
    initial_v_real: float = math.nan
    stats: dict = field(default_factory=dict)
    best_iteration: int | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def expansions(self) -> int:
        return sum(r.kind == "expand" for r in self.records)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"event": "start", "v_opt": self.initial_v_opt,
                             "v_real": self.initial_v_real})]
        lines += [json.dumps({"event": r.kind, **asdict(r)}) for r in self.records]
        lines.append(json.dumps({
            "event": "end", "converged": self.converged, "memory_exhausted": self.memory_exhausted,
            "truncated": self.truncated, "best_iteration": self.best_iteration, **self.stats,
        }))
        return "\n".join(lines) + "\n"


def select_tip(graph: AndOrGraph) -> AndNode | None:
    """Unexpanded AND node of the optimistic policy with the largest reach probability.

    Ties go to the lexicographically smallest state.  Returns None when the
    optimistic policy is complete, i.e. the search has converged.
    """
    return graph.best_tip()


def realistic_example_costs(graph: AndOrGraph, node: OrNode) -> np.ndarray:
    """Total cost for each training example matching ``node`` under the realistic policy from it."""
    est = graph.est
    idx = node.match
    costs = np.zeros(len(idx))
    pos = np.arange(len(idx))
    mc = graph.cm.mc

    def rec(nd, sel):
        act = nd.real_action
        if isinstance(act, Diagnose):
            costs[sel] += mc[act.diagnosis, est.y[idx[sel]]]
            return
        a = nd.real_and
        costs[sel] += a.cost
        vals = est.X[idx[sel], a.attribute]
        for v, child in enumerate(a.children):
            sub = sel[vals == v]
            if len(sub):
                rec(child, sub)

    rec(node, pos)
    return costs


def sp_check(graph: AndOrGraph, node: OrNode, z: float = Z_95) -> tuple[bool, float]:
    """Statistical-pruning test at ``node``; returns (prune?, CI lower limit).

    The interval is centred on the realistic value and its half-width comes
    from the spread of the per-example realistic costs.  Because the optimistic
    value never exceeds the realistic one, only the lower limit matters.  With
    fewer than two matching examples no spread is available and nothing is
    pruned.
    """
    m = node.match_count
    if m < 2 or not isinstance(node.opt_action, Test):
        return False, -math.inf
    costs = realistic_example_costs(graph, node)
    half = z * float(np.std(costs, ddof=1)) / math.sqrt(m)
    lower = node.v_real - half
    return node.v_opt >= lower, lower


class AOStar:
    """Stepwise AO* search; :func:`ao_star` drives it to completion."""

    def __init__(self, data: Dataset, cm: CostModel, cfg: AoConfig | None = None, indices=None):
        self.cfg = cfg or AoConfig()
        self.cm = cm.for_dataset(data)
        self.est = Estimator(data, indices, laplace=self.cfg.laplace)
        self.graph = AndOrGraph(self.est, self.cm, self.cfg.byte_limit)
        self.trace = SearchTrace(initial_v_opt=self.graph.root.v_opt,
                                 initial_v_real=self.graph.root.v_real)
        self.done = False

    @property
    def root(self) -> OrNode:
        return self.graph.root

    def step(self) -> bool:
        """Run one iteration; returns True if the realistic policy may have changed.

        Sets ``done`` once the search has converged, run out of memory, or hit
        ``max_iterations``.
        """
        if self.done:
            return False
        cfg, trace, graph = self.cfg, self.trace, self.graph
        if cfg.max_iterations is not None and trace.iterations >= cfg.max_iterations:
            trace.truncated = self.done = True
            return False
        tip = select_tip(graph)
        if tip is None:
            trace.converged = self.done = True
            return False
        node = tip.parent
        it = trace.iterations + 1
        if cfg.sp:
            prune, lower = sp_check(graph, node, cfg.ci_z_95)
            if prune:
                v_opt, v_real = node.v_opt, node.v_real
                real_changed = graph.prune(node, tip.attribute)
                trace.prune_events.append(PruneEvent(
                    it, [list(p) for p in node.state.pairs], tip.attribute, v_opt, v_real,
                    lower, node.match_count, real_changed))
                trace.records.append(IterationRecord(
                    it, "prune", [list(p) for p in node.state.pairs], tip.attribute,
                    self.root.v_opt, self.root.v_real))
                return real_changed
        try:
            graph.expand(tip)
        except MemoryLimitError:
            trace.memory_exhausted = self.done = True
            return False
        real_changed = graph.backup([node])
        trace.records.append(IterationRecord(
            it, "expand", [list(p) for p in node.state.pairs], tip.attribute,
            self.root.v_opt, self.root.v_real))
        return real_changed

    def run(self, on_iteration: Callable[["AOStar", bool], None] | None = None) -> "AOStar":
        """Iterate until done; ``on_iteration(search, realistic_changed)`` follows each recorded step."""
        while not self.done:
            before = self.trace.iterations
            changed = self.step()
            if on_iteration is not None and self.trace.iterations > before:
                on_iteration(self, changed)
        self.trace.stats = self.graph.stats()
        return self

    def policy(self) -> Policy:
        return self.graph.realistic_policy()


def ao_star(data: Dataset, cm: CostModel, cfg: AoConfig | None = None, indices=None
            ) -> tuple[Policy, SearchTrace]:
    """Learn a policy by AO* on the training examples ``data[indices]``.

    Without regularizers the result is optimal for the MDP estimated from the
    training data.  If the byte limit is hit, the realistic policy at that point
    is returned and ``trace.memory_exhausted`` is set.
    """
    cfg = cfg or AoConfig()
    if cfg.es:
        return es_learn(data, cm, cfg, indices)
    search = AOStar(data, cm, cfg, indices).run()
    policy = search.policy()
    if cfg.ppp:
        policy = ppp_prune(policy, search.est, search.cm, cfg.laplace, cfg.ci_z_95)
    return policy, search.trace


def es_learn(data: Dataset, cm: CostModel, cfg: AoConfig | None = None, indices=None
             ) -> tuple[Policy, SearchTrace]:
    """AO* on half the training set, keeping the realistic policy that scores best on the other half.

    The split is stratified by class and seeded by ``cfg.seed``.  Ties keep the
    earlier (smaller) policy.
    """
    cfg = cfg or AoConfig()
    if indices is None:
        indices = np.arange(len(data))
    indices = np.asarray(indices, dtype=np.int64)
    counts = np.bincount(data.y[indices], minlength=data.n_classes)
    if (counts[counts > 0] < 2).any():
        raise ConfigError("early stopping needs at least 2 training examples per class")
    sub_pos, val_pos = stratified_split(data.y[indices], Fraction(1, 2), np.random.default_rng(cfg.seed))
    sub, val = indices[sub_pos], indices[val_pos]
    Xv, yv = data.X[val], data.y[val]

    search = AOStar(data, cm, cfg, sub)
    cost0 = float(search.graph.realistic_costs(Xv, yv).mean())
    best = {"cost": cost0, "policy": search.policy(), "it": 0, "last": cost0}

    def watch(s: AOStar, changed: bool):
        rec = s.trace.records[-1]
        cost = float(s.graph.realistic_costs(Xv, yv).mean()) if changed else best["last"]
        rec.validation_cost = best["last"] = cost
        if cost < best["cost"]:
            best.update(cost=cost, policy=s.policy(), it=rec.iteration)

    search.run(watch)
    search.trace.best_iteration = best["it"]
    policy = best["policy"]
    if cfg.ppp:
        policy = ppp_prune(policy, search.est, search.cm, cfg.laplace, cfg.ci_z_95)
    return policy, search.trace


# ---------------------------------------------------------------------------
# Pessimistic post-pruning
# ---------------------------------------------------------------------------


def diagnosis_upper_bound(est: Estimator, cm: CostModel, match: np.ndarray, k: int,
                          laplace: bool, z: float = Z_95) -> float:
    """Upper limit of a normal confidence interval on the cost of diagnosing ``k``.

    The sample is the misdiagnosis cost ``MC(k, y)`` of each matching training
    example, plus one fake example per class under Laplace.  Without real
    examples, or with fewer than two samples, the interval has zero width.
    """
    sample = cm.mc[k, est.y[match]]
    if laplace:
        sample = np.concatenate([sample, cm.mc[k]])
    if len(sample) == 0:
        return 0.0
    mean = float(sample.mean())
    if len(match) == 0 or len(sample) < 2:
        return mean
    return mean + z * float(np.std(sample, ddof=1)) / math.sqrt(len(sample))


def ppp_prune(policy: Policy, est: Estimator, cm: CostModel, laplace: bool | None = None,
              z: float = Z_95) -> Policy:
    """Bottom-up replacement of tests by diagnoses using pessimistic cost bounds.

    A leaf is bounded by the upper confidence limit of its diagnosis cost; a test
    node by its cost plus the probability-weighted bounds of its children.  A
    test node becomes a leaf for its best diagnosis when that diagnosis' bound
    is strictly smaller.
    """
    if laplace is None:
        laplace = est.laplace
    data = est.data
    cm = cm.for_dataset(data)
    tc = cm.test_costs(data.names)

    def rec(node, match):
        if isinstance(node, DiagnoseNode):
            k = data.class_index(node.diagnosis)
            return node, diagnosis_upper_bound(est, cm, match, k, laplace, z)
        n = data.attribute_index(node.attribute)
        probs = est.smooth(est.outcome_counts(match, n))
        meta = data.attributes[n]
        children, ub = {}, tc[n]
        for v, label in enumerate(meta.values):
            child = node.children[label]
            if probs[v] > 0:
                child, cub = rec(child, est.refine(match, n, v))
                ub += probs[v] * cub
            children[label] = child
        k, _ = best_diagnosis_from(cm, est.smooth(est.class_counts(match)))
        leaf_ub = diagnosis_upper_bound(est, cm, match, k, laplace, z)
        if leaf_ub < ub:
            return DiagnoseNode(data.classes[k]), leaf_ub
        return TestNode(node.attribute, children, node.cost, node.probs), ub

    pruned, _ = rec(policy.root, np.arange(len(est)))
    return annotate(Policy(pruned), est, cm)
