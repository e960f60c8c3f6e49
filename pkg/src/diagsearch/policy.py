"""Diagnostic policies: decision trees whose internal nodes test and whose leaves diagnose.

Nodes refer to attributes, values and classes by name, so a saved policy stays
valid across reloads of the same prepared dataset.  The ``value``, ``cost`` and
``probs`` fields are learning-time annotations; execution ignores them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

import numpy as np

from .dataset import CostModel, Dataset
from .errors import DecodeError, EmptyDatasetError, ExecutionError
from .mdp import Estimator

POLICY_FORMAT = "diagsearch-policy"
POLICY_VERSION = 1


@dataclass
class DiagnoseNode:
    diagnosis: str
    value: float | None = None


@dataclass
class TestNode:
    attribute: str
    children: dict[str, "Node"]
    cost: float | None = None
    probs: dict[str, float] | None = None
    value: float | None = None


Node = Union[DiagnoseNode, TestNode]


@dataclass
class Policy:
    root: Node = field(default_factory=lambda: DiagnoseNode(""))

    def nodes(self) -> Iterator[Node]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, TestNode):
                stack.extend(reversed(list(node.children.values())))

    @property
    def n_tests(self) -> int:
        """Number of internal (test) nodes."""
        return sum(isinstance(n, TestNode) for n in self.nodes())

    @property
    def n_leaves(self) -> int:
        return sum(isinstance(n, DiagnoseNode) for n in self.nodes())

    @property
    def depth(self) -> int:
        def d(node):
            if isinstance(node, DiagnoseNode):
                return 0
            return 1 + max(d(c) for c in node.children.values())
        return d(self.root)

    @property
    def is_trivial(self) -> bool:
        """True for a zero-test policy."""
        return isinstance(self.root, DiagnoseNode)

    def validate(self, data: Dataset) -> None:
        """Check structure against dataset metadata; raises :class:`ExecutionError`."""
        def check(node, seen):
            if isinstance(node, DiagnoseNode):
                if node.diagnosis not in data.classes:
                    raise ExecutionError(f"unknown class {node.diagnosis!r}")
                return
            if node.attribute in seen:
                raise ExecutionError(f"attribute {node.attribute!r} repeated on a path")
            meta = data.attributes[data.attribute_index(node.attribute)]
            if list(node.children) != list(meta.values):
                raise ExecutionError(f"node {node.attribute!r} does not branch on every value")
            for child in node.children.values():
                check(child, seen | {node.attribute})
        check(self.root, frozenset())


def leaf_policy(diagnosis: str, value: float | None = None) -> Policy:
    return Policy(DiagnoseNode(diagnosis, value))


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def execute(policy: Policy, example: Mapping[str, str], truth: str, cm: CostModel) -> tuple[str, float]:
    """Run one example through the policy: (predicted class, test costs + misdiagnosis cost)."""
    node = policy.root
    cost = 0.0
    while isinstance(node, TestNode):
        try:
            value = example[node.attribute]
        except KeyError:
            raise ExecutionError(f"example has no value for {node.attribute!r}") from None
        try:
            nxt = node.children[value]
        except KeyError:
            raise ExecutionError(f"no branch for {node.attribute}={value!r}") from None
        cost += cm.test_cost[node.attribute]
        node = nxt
    k = cm.classes.index(node.diagnosis)
    y = cm.classes.index(truth)
    return node.diagnosis, cost + float(cm.mc[k, y])


def example_costs(policy: Policy, data: Dataset, indices, cm: CostModel) -> np.ndarray:
    """Total cost of every example in ``indices`` when processed by ``policy``."""
    out = np.empty(len(indices))
    for j, i in enumerate(indices):
        out[j] = execute(policy, data.record(i), data.label(i), cm)[1]
    return out


def v_test(policy: Policy, data: Dataset, indices, cm: CostModel) -> float:
    """Average total cost over a test set."""
    if len(indices) == 0:
        raise EmptyDatasetError("empty test set")
    return float(example_costs(policy, data, indices, cm).mean())


# ---------------------------------------------------------------------------
# Valuation on training estimates
# ---------------------------------------------------------------------------


def annotate(policy: Policy, est: Estimator, cm: CostModel) -> Policy:
    """Copy of ``policy`` with branch probabilities and state values filled in.

    Values are computed bottom-up: a leaf is worth its expected misdiagnosis
    cost, a test node its cost plus the probability-weighted child values.
    Branches of probability zero (maximum-likelihood mode) get no value.
    """
    data = est.data
    tc = cm.test_costs(data.names)

    def rec(node, match):
        if isinstance(node, DiagnoseNode):
            k = data.class_index(node.diagnosis)
            p = est.smooth(est.class_counts(match))
            return DiagnoseNode(node.diagnosis, float(cm.mc[k] @ p))
        n = data.attribute_index(node.attribute)
        probs = est.smooth(est.outcome_counts(match, n))
        meta = data.attributes[n]
        children, value = {}, tc[n]
        for v, label in enumerate(meta.values):
            child = node.children[label]
            if probs[v] > 0:
                child = rec(child, est.refine(match, n, v))
                value += probs[v] * child.value
            else:
                child = _strip(child)
            children[label] = child
        return TestNode(node.attribute, children, float(tc[n]),
                        {lab: float(p) for lab, p in zip(meta.values, probs)}, float(value))

    return Policy(rec(policy.root, np.arange(len(est))))


def _strip(node: Node) -> Node:
    if isinstance(node, DiagnoseNode):
        return DiagnoseNode(node.diagnosis)
    return TestNode(node.attribute, {k: _strip(c) for k, c in node.children.items()})


def expected_value(policy: Policy, est: Estimator, cm: CostModel) -> float:
    """Expected total cost of the policy from the start state under ``est``."""
    return annotate(policy, est, cm).root.value


def annotated_value(node: Node) -> float:
    """Recompute a root value purely from stored annotations (leaf values, costs, probs)."""
    if isinstance(node, DiagnoseNode):
        return node.value
    return node.cost + sum(
        p * annotated_value(node.children[v]) for v, p in node.probs.items() if p > 0
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _node_to_dict(node: Node) -> dict:
    if isinstance(node, DiagnoseNode):
        return {"diagnose": node.diagnosis, "value": node.value}
    return {
        "test": node.attribute,
        "cost": node.cost,
        "value": node.value,
        "branches": [
            {
                "value": v,
                "prob": None if node.probs is None else node.probs.get(v),
                "node": _node_to_dict(c),
            }
            for v, c in node.children.items()
        ],
    }


def _node_from_dict(d) -> Node:
    if not isinstance(d, dict):
        raise DecodeError("policy node must be an object")
    if "diagnose" in d:
        return DiagnoseNode(str(d["diagnose"]), d.get("value"))
    if "test" in d:
        children, probs = {}, {}
        for b in d["branches"]:
            children[b["value"]] = _node_from_dict(b["node"])
            probs[b["value"]] = b.get("prob")
        if all(p is None for p in probs.values()):
            probs = None
        return TestNode(str(d["test"]), children, d.get("cost"), probs, d.get("value"))
    raise DecodeError(f"unrecognised policy node keys {sorted(d)}")


def serialize(policy: Policy) -> bytes:
    doc = {"format": POLICY_FORMAT, "version": POLICY_VERSION, "root": _node_to_dict(policy.root)}
    return json.dumps(doc, indent=1).encode()


def deserialize(payload: bytes | str) -> Policy:
    try:
        doc = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DecodeError(f"malformed policy: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != POLICY_FORMAT:
        raise DecodeError("not a policy document")
    if doc.get("version") != POLICY_VERSION:
        raise DecodeError(f"unsupported policy version {doc.get('version')!r}")
    try:
        return Policy(_node_from_dict(doc["root"]))
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"malformed policy: {exc}") from exc


def save_policy(policy: Policy, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(policy))


def load_policy(path) -> Policy:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------


def _q(text: str) -> str:
    esc = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return '"' + esc + '"'


def to_dot(policy: Policy, name: str = "policy") -> str:
    """Graphviz rendering: tests as boxes labelled "name (cost)", diagnoses as filled squares."""
    lines = [f"digraph {_q(name)} {{", "  node [fontname=Helvetica];"]
    counter = [0]

    def emit(node) -> str:
        nid = f"n{counter[0]}"
        counter[0] += 1
        if isinstance(node, DiagnoseNode):
            label = node.diagnosis if node.value is None else f"{node.diagnosis}\n{node.value:.4g}"
            lines.append(f"  {nid} [shape=square, style=filled, fillcolor=lightgrey, label={_q(label)}];")
            return nid
        label = node.attribute if node.cost is None else f"{node.attribute} ({node.cost:g})"
        if node.value is not None:
            label += f"\nV={node.value:.4g}"
        lines.append(f"  {nid} [shape=box, label={_q(label)}];")
        for v, child in node.children.items():
            cid = emit(child)
            p = None if node.probs is None else node.probs.get(v)
            elabel = v if p is None else f"{v} ({p:.3g})"
            lines.append(f"  {nid} -> {cid} [label={_q(elabel)}];")
        return nid

    emit(policy.root)
    lines.append("}")
    return "\n".join(lines) + "\n"
