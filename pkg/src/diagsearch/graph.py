"""The explicit AND/OR search graph used by AO*.

OR nodes are states and are hash-consed: every ordering of the same measured
tests reaches the same node.  AND nodes are (state, test) pairs.  Each OR node
carries two values:

* ``v_opt`` -- optimistic: unexpanded AND nodes count at their one-step
  lookahead heuristic, so it never exceeds the optimal value;
* ``v_real`` -- realistic: unexpanded AND nodes are ignored, so it is the value
  of a complete policy and never falls below the optimal value.

Memory is accounted with fixed per-node constants (see ``*_BYTES``) rather than
measured, so limits are reproducible across platforms.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .dataset import CostModel
from .errors import DiagSearchError
from .mdp import Diagnose, Estimator, State, Test
from .policy import DiagnoseNode, Policy, TestNode

OR_NODE_BYTES = 256
AND_NODE_BYTES = 128
EDGE_BYTES = 16
MATCH_BYTES = 8  # per stored example index
DEFAULT_BYTE_LIMIT = 100 * 2**20

INF = math.inf


class MemoryLimitError(DiagSearchError):
    """Raised by :meth:`AndOrGraph.expand` when an expansion would exceed the byte limit."""


def canonical_key(s: State) -> tuple:
    """Hashable key identifying a state regardless of measurement order."""
    return s.pairs


def heuristic_q(s: State, n: int, est: Estimator, cm: CostModel) -> float:
    """Optimistic cost of testing ``n`` in ``s``.

    Pays for the test, then for every outcome charges the cheapest single action
    available afterwards: either a diagnosis (its expected misdiagnosis cost) or
    one more test (its bare cost).  Outcomes with no matching examples have
    probability zero under maximum likelihood and are skipped; under Laplace
    they can only be diagnosed.
    """
    if n in s:
        raise ValueError(f"attribute {n} already measured")
    tc = cm.test_costs(est.data.names)
    match = est.match_local(s)
    probs = est.smooth(est.outcome_counts(match, n))
    rest = [m for m in range(est.n_attributes) if m not in s and m != n]
    cheapest_test = min((tc[m] for m in rest), default=INF)
    total = tc[n]
    for v, p in enumerate(probs):
        if p == 0:
            continue
        child = est.refine(match, n, v)
        dist = est.smooth(est.class_counts(child))
        best = float((cm.mc @ dist).min())
        if len(child):
            best = min(best, cheapest_test)
        total += p * best
    return float(total)


class AndNode:
    __slots__ = ("parent", "attribute", "cost", "probs", "plist", "heuristic",
                 "q_opt", "q_real", "children", "expanded", "dirty")

    def __init__(self, parent, attribute, cost, probs, heuristic):
        self.parent = parent
        self.attribute = attribute
        self.cost = cost
        self.probs = probs
        self.plist = probs.tolist()
        self.heuristic = heuristic
        self.q_opt = heuristic
        self.q_real = INF
        self.children = None  # list of OrNode | None, one per attribute value
        self.expanded = False
        self.dirty = False

    def refresh(self):
        qo = qr = self.cost
        for p, child in zip(self.plist, self.children):
            if child is not None:
                qo += p * child.v_opt
                qr += p * child.v_real
        self.q_opt, self.q_real = qo, qr
        self.dirty = False

    def __repr__(self):
        return f"AndNode({self.parent.state.pairs}, x{self.attribute}, q_opt={self.q_opt:.6g})"


class OrNode:
    __slots__ = ("state", "match", "class_counts", "diag", "diag_cost", "ands",
                 "pruned", "parents", "v_opt", "v_real", "opt_action", "real_action",
                 "opt_and", "real_and", "reach", "stamp")

    def __init__(self, state, match):
        self.state = state
        self.match = match
        self.ands = []
        self.pruned = set()
        self.parents = []
        self.v_opt = self.v_real = INF
        self.opt_action = self.real_action = None
        self.opt_and = self.real_and = None
        self.reach = 0.0
        self.stamp = -1

    @property
    def depth(self) -> int:
        return len(self.state)

    @property
    def match_count(self) -> int:
        return len(self.match)

    @property
    def best_diag(self) -> tuple[int, float]:
        return self.diag, self.diag_cost

    def and_for(self, attribute: int) -> AndNode:
        for a in self.ands:
            if a.attribute == attribute:
                return a
        raise KeyError(attribute)

    def recompute(self) -> tuple[bool, bool]:
        """Refresh values/actions from the AND children; returns (opt changed, real changed)."""
        vo = vr = self.diag_cost
        bo = br = None
        pruned = self.pruned
        for a in self.ands:
            if pruned and a.attribute in pruned:
                continue
            if a.expanded:
                if a.dirty:
                    a.refresh()
                if a.q_real < vr:
                    vr, br = a.q_real, a
            if a.q_opt < vo:
                vo, bo = a.q_opt, a
        opt_changed = vo != self.v_opt or bo is not self.opt_and or self.opt_action is None
        real_changed = vr != self.v_real or br is not self.real_and or self.real_action is None
        if opt_changed:
            self.v_opt, self.opt_and = vo, bo
            self.opt_action = Diagnose(self.diag) if bo is None else Test(bo.attribute)
        if real_changed:
            self.v_real, self.real_and = vr, br
            self.real_action = Diagnose(self.diag) if br is None else Test(br.attribute)
        return opt_changed, real_changed

    def __repr__(self):
        return (f"OrNode({self.state.pairs}, m={len(self.match)}, v_opt={self.v_opt:.6g}, "
                f"v_real={self.v_real:.6g})")


class AndOrGraph:
    """Search graph over the MDP defined by ``est`` and ``cm``."""

    def __init__(self, est: Estimator, cm: CostModel, byte_limit: int = DEFAULT_BYTE_LIMIT):
        self.est = est
        self.cm = cm
        self.byte_limit = byte_limit
        self.tc = cm.test_costs(est.data.names)
        self.K = est.n_classes
        self.A = int(est.arities.max())
        self.table: dict[tuple, OrNode] = {}
        self.bytes_used = 0
        self.n_and = 0
        self.expansions = 0
        self._sweeps = 0
        root_match = np.arange(len(est), dtype=np.int64)
        self.bytes_used += self._node_bytes(State(), root_match)
        self.root = self._make_or(State(), root_match)

    # -- construction ------------------------------------------------------

    def _n_tests(self, state, match) -> int:
        return 0 if len(match) == 0 else self.est.n_attributes - len(state)

    def _node_bytes(self, state, match) -> int:
        return OR_NODE_BYTES + MATCH_BYTES * len(match) + AND_NODE_BYTES * self._n_tests(state, match)

    def _make_or(self, state: State, match: np.ndarray) -> OrNode:
        est, cm = self.est, self.cm
        node = OrNode(state, match)
        node.class_counts = est.class_counts(match)
        node.diag, node.diag_cost = _best(cm, est.smooth(node.class_counts))
        if len(match):
            measured = state.measured
            tests = np.array([n for n in range(est.n_attributes) if n not in measured], dtype=np.int64)
            if tests.size:
                for a in self._stubs(node, tests):
                    node.ands.append(a)
                self.n_and += len(tests)
        node.recompute()
        self.table[canonical_key(state)] = node
        return node

    def _stubs(self, node: OrNode, tests: np.ndarray) -> list[AndNode]:
        """AND nodes for every unmeasured test, with heuristic values, built in one pass."""
        est, K, A = self.est, self.K, self.A
        match = node.match
        m = len(match)
        T = len(tests)
        codes = est.X[np.ix_(match, tests)] * K + est.y[match, None] + np.arange(T) * (A * K)
        joint = np.bincount(codes.ravel(), minlength=T * A * K).reshape(T, A, K).astype(float)
        counts = joint.sum(axis=2)  # (T, A)
        arity = est.arities[tests]
        valid = np.arange(A)[None, :] < arity[:, None]
        if est.laplace:
            probs = np.where(valid, (counts + 1.0) / (m + arity[:, None]), 0.0)
            dist = (joint + 1.0) / (counts[..., None] + K)
        else:
            probs = counts / m
            with np.errstate(invalid="ignore", divide="ignore"):
                dist = joint / np.where(counts > 0, counts, 1.0)[..., None]
        diag_min = (dist @ self.cm.mc.T).min(axis=2)  # (T, A)

        costs = self.tc[tests]
        order = np.argsort(costs, kind="stable")
        cheapest = np.full(T, INF)
        if T > 1:
            cheapest[:] = costs[order[0]]
            cheapest[order[0]] = costs[order[1]]
        # an outcome with no examples is diagnosis-only
        step = np.where(counts > 0, np.minimum(diag_min, cheapest[:, None]), diag_min)
        h = costs + np.where(probs > 0, probs * step, 0.0).sum(axis=1)

        out = []
        for t in range(T):
            n = int(tests[t])
            out.append(AndNode(node, n, float(costs[t]), probs[t, : arity[t]], float(h[t])))
        return out

    # -- operations --------------------------------------------------------

    def get(self, state: State) -> OrNode | None:
        return self.table.get(canonical_key(state))

    def __len__(self):
        return len(self.table)

    def expand(self, a: AndNode) -> list[OrNode]:
        """Generate (or reuse) the children of ``a``; returns the newly created OR nodes.

        Raises :class:`MemoryLimitError` without touching the graph if the
        expansion would push ``bytes_used`` past ``byte_limit``.
        """
        if a.expanded:
            raise ValueError("AND node already expanded")
        est = self.est
        parent = a.parent
        n = a.attribute
        vals = est.X[parent.match, n]
        plan = []
        need = 0
        for v, p in enumerate(a.probs):
            if p == 0:
                plan.append(None)
                continue
            state = parent.state.extend(n, v)
            existing = self.table.get(canonical_key(state))
            if existing is None:
                child_match = parent.match[vals == v]
                need += self._node_bytes(state, child_match)
                plan.append((state, child_match))
            else:
                plan.append(existing)
            need += EDGE_BYTES
        if self.bytes_used + need > self.byte_limit:
            raise MemoryLimitError(
                f"expansion needs {need} bytes; {self.bytes_used}/{self.byte_limit} used"
            )
        self.bytes_used += need
        created, children = [], []
        for item in plan:
            if item is None:
                children.append(None)
                continue
            if isinstance(item, OrNode):
                child = item
            else:
                child = self._make_or(*item)
                created.append(child)
            child.parents.append(a)
            children.append(child)
        a.children = children
        a.expanded = True
        a.refresh()
        self.expansions += 1
        return created

    def backup(self, changed) -> bool:
        """Propagate value changes from ``changed`` OR nodes up to the root.

        Nodes are processed deepest first, so each ancestor is recomputed once
        after all of its changed descendants.  Returns True if any realistic
        value or action changed.
        """
        heap, queued = [], set()
        for node in changed:
            if id(node) not in queued:
                queued.add(id(node))
                heapq.heappush(heap, (-node.depth, canonical_key(node.state), node))
        real_any = False
        while heap:
            _, _, node = heapq.heappop(heap)
            queued.discard(id(node))
            opt_c, real_c = node.recompute()
            real_any |= real_c
            if opt_c or real_c:
                for a in node.parents:
                    a.dirty = True
                    up = a.parent
                    if id(up) not in queued:
                        queued.add(id(up))
                        heapq.heappush(heap, (-up.depth, canonical_key(up.state), up))
        return real_any

    def prune(self, node: OrNode, attribute: int) -> bool:
        """Remove a test from ``node``'s choices and back up; returns the backup's real-changed flag."""
        node.pruned.add(attribute)
        return self.backup([node])

    # -- policies ----------------------------------------------------------

    def realistic_policy(self, node: OrNode | None = None) -> Policy:
        """Tree unrolling of the realistic policy below ``node`` (the root by default).

        Branches with no child (outcomes unseen in training) become leaves that
        repeat the parent's best diagnosis.
        """
        data = self.est.data
        classes = data.classes

        def rec(nd: OrNode):
            act = nd.real_action
            if isinstance(act, Diagnose):
                return DiagnoseNode(classes[act.diagnosis], nd.diag_cost)
            a = nd.real_and
            meta = data.attributes[a.attribute]
            children, probs = {}, {}
            for v, label in enumerate(meta.values):
                child = a.children[v]
                children[label] = (DiagnoseNode(classes[nd.diag]) if child is None else rec(child))
                probs[label] = float(a.probs[v])
            return TestNode(meta.name, children, float(a.cost), probs, float(nd.v_real))

        return Policy(rec(node or self.root))

    def optimistic_frontier(self) -> list[tuple[AndNode, float]]:
        """Unexpanded AND nodes of the optimistic policy with their reach probabilities.

        Reach probabilities sum over every path of the optimistic policy, so
        the graph is swept level by level (children are always one level deeper).
        """
        tips = []
        self._sweep(tips.append)
        return tips

    def best_tip(self) -> AndNode | None:
        """Frontier AND node with the largest reach probability (ties: smallest state)."""
        best = [None, -1.0]

        def offer(item):
            a, r = item
            if r > best[1] or (r == best[1] and a.parent.state.pairs < best[0].parent.state.pairs):
                best[0], best[1] = a, r

        self._sweep(offer)
        return best[0]

    def _sweep(self, emit) -> None:
        self._sweeps += 1
        stamp = self._sweeps
        root = self.root
        root.stamp, root.reach = stamp, 1.0
        level = [root]
        while level:
            nxt = []
            for nd in level:
                a = nd.opt_and
                if a is None:
                    continue
                r = nd.reach
                if not a.expanded:
                    emit((a, r))
                    continue
                for p, child in zip(a.plist, a.children):
                    if child is None:
                        continue
                    if child.stamp == stamp:
                        child.reach += r * p
                    else:
                        child.stamp, child.reach = stamp, r * p
                        nxt.append(child)
            level = nxt

    def realistic_costs(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-example total cost of the realistic policy on arbitrary examples."""
        costs = np.zeros(len(y))
        self._route(self.root, np.arange(len(y)), X, y, costs)
        return costs

    def _route(self, nd, idx, X, y, costs, diag=None):
        mc = self.cm.mc
        if nd is None:
            costs[idx] += mc[diag, y[idx]]
            return
        act = nd.real_action
        if isinstance(act, Diagnose):
            costs[idx] += mc[act.diagnosis, y[idx]]
            return
        a = nd.real_and
        costs[idx] += a.cost
        vals = X[idx, a.attribute]
        for v, child in enumerate(a.children):
            sub = idx[vals == v]
            if len(sub):
                self._route(child, sub, X, y, costs, nd.diag)

    # -- reporting ---------------------------------------------------------

    def stats(self) -> dict:
        return {
            "or_nodes": len(self.table),
            "and_nodes": self.n_and,
            "expansions": self.expansions,
            "bytes_used": self.bytes_used,
            "byte_limit": self.byte_limit,
        }

    def to_dot(self) -> str:
        """Debug dump of the whole graph; optimistic choices drawn bold."""
        ids = {id(nd): f"s{i}" for i, nd in enumerate(self.table.values())}
        lines = ["digraph andor {", "  node [fontname=Helvetica];"]
        for nd in self.table.values():
            sid = ids[id(nd)]
            lines.append(f'  {sid} [shape=ellipse, label="{list(nd.state.pairs)}\\n'
                         f'opt={nd.v_opt:.4g} real={nd.v_real:.4g}"];')
            for a in nd.ands:
                if not a.expanded:
                    continue
                aid = f"{sid}_x{a.attribute}"
                bold = ", style=bold" if nd.opt_action == Test(a.attribute) else ""
                lines.append(f'  {aid} [shape=box, label="x{a.attribute}\\nq={a.q_opt:.4g}"{bold}];')
                lines.append(f"  {sid} -> {aid};")
                for v, child in enumerate(a.children):
                    if child is not None:
                        lines.append(f'  {aid} -> {ids[id(child)]} [label="{v} ({a.probs[v]:.3g})"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _best(cm: CostModel, p: np.ndarray) -> tuple[int, float]:
    costs = cm.mc @ p
    k = int(np.argmin(costs))
    return k, float(costs[k])


def values_from_scratch(graph: AndOrGraph) -> dict[tuple, tuple[float, float]]:
    """Recompute (v_opt, v_real) of every node by plain recursion, ignoring stored values.

    Reference implementation for checking incremental backups.
    """
    memo = {}

    def rec(nd):
        key = canonical_key(nd.state)
        if key in memo:
            return memo[key]
        vo = vr = nd.diag_cost
        for a in nd.ands:
            if a.attribute in nd.pruned:
                continue
            if a.expanded:
                qo = qr = a.cost
                for p, child in zip(a.probs, a.children):
                    if child is not None:
                        co, cr = rec(child)
                        qo += p * co
                        qr += p * cr
                vr = min(vr, qr)
            else:
                qo = a.heuristic
            vo = min(vo, qo)
        memo[key] = (vo, vr)
        return memo[key]

    for nd in graph.table.values():
        rec(nd)
    return memo

