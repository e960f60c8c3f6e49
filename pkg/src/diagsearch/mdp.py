"""States, actions and probability estimates for the diagnosis MDP.

A state is the set of attribute/value pairs measured so far.  Probabilities are
never fitted up front: every estimate is a count over the training examples that
agree with the state, optionally with add-one (Laplace) smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .dataset import CostModel, Dataset
from .errors import EmptyDatasetError, UndefinedProbabilityError


@dataclass(frozen=True)
class State:
    """Measured attributes, kept sorted by attribute index so equal sets compare equal."""

    pairs: tuple[tuple[int, int], ...] = ()

    @classmethod
    def of(cls, assignment: Mapping[int, int] | Iterable[tuple[int, int]] = ()) -> "State":
        items = assignment.items() if isinstance(assignment, Mapping) else assignment
        d = {}
        for n, v in items:
            if n in d:
                raise ValueError(f"attribute {n} assigned twice")
            d[int(n)] = int(v)
        return cls(tuple(sorted(d.items())))

    def extend(self, n: int, v: int) -> "State":
        if n in self:
            raise ValueError(f"attribute {n} already measured")
        return State(tuple(sorted(self.pairs + ((int(n), int(v)),))))

    def __contains__(self, n) -> bool:
        return any(a == n for a, _ in self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def measured(self) -> frozenset[int]:
        return frozenset(a for a, _ in self.pairs)

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


EMPTY = State()


class Test(NamedTuple):
    attribute: int


class Diagnose(NamedTuple):
    diagnosis: int


Action = Test | Diagnose


def entropy(p) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum()) + 0.0


class Estimator:
    """Count-based probability estimates over a training set.

    ``indices`` selects the training examples of ``data`` (all of them by
    default).  Match sets are returned as dataset-level indices; the learners
    use the ``*_local`` variants, which index into ``self.X`` directly.
    """

    def __init__(self, data: Dataset, indices=None, laplace: bool = False):
        if indices is None:
            indices = np.arange(len(data))
        self.data = data
        self.indices = np.asarray(indices, dtype=np.int64)
        if self.indices.size == 0:
            raise EmptyDatasetError("training set is empty")
        self.X = data.X[self.indices]
        self.y = data.y[self.indices]
        self.laplace = laplace
        self.n_classes = data.n_classes
        self.arities = data.arities
        self.n_attributes = data.n_attributes

    def __len__(self):
        return len(self.y)

    # -- matching ----------------------------------------------------------

    def match_local(self, s: State) -> np.ndarray:
        mask = np.ones(len(self.y), dtype=bool)
        for n, v in s:
            mask &= self.X[:, n] == v
        return np.flatnonzero(mask)

    def refine(self, match: np.ndarray, n: int, v: int) -> np.ndarray:
        """Match set of ``s + {x_n = v}`` from the match set of ``s``."""
        return match[self.X[match, n] == v]

    def matching(self, s: State) -> np.ndarray:
        """Dataset indices of the training examples agreeing with every pair of ``s``."""
        return self.indices[self.match_local(s)]

    # -- probabilities from counts ------------------------------------------

    def smooth(self, counts) -> np.ndarray:
        """Turn a count vector into a distribution (ML or add-one)."""
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if self.laplace:
            return (counts + 1.0) / (total + len(counts))
        if total == 0:
            raise UndefinedProbabilityError("no matching training examples")
        return counts / total

    def class_counts(self, match: np.ndarray) -> np.ndarray:
        return np.bincount(self.y[match], minlength=self.n_classes)

    def outcome_counts(self, match: np.ndarray, n: int) -> np.ndarray:
        return np.bincount(self.X[match, n], minlength=self.arities[n])

    # -- public estimates --------------------------------------------------

    def class_distribution(self, s: State) -> np.ndarray:
        return self.smooth(self.class_counts(self.match_local(s)))

    def outcome_distribution(self, s: State, n: int) -> np.ndarray:
        if n in s:
            raise ValueError(f"attribute {n} already measured in {s}")
        return self.smooth(self.outcome_counts(self.match_local(s), n))

    def p_outcome(self, s: State, n: int, v: int) -> float:
        return float(self.outcome_distribution(s, n)[v])

    def p_class(self, s: State, y: int) -> float:
        return float(self.class_distribution(s)[y])

    def diagnosis_cost(self, cm: CostModel, s: State, k: int) -> float:
        """Expected misdiagnosis cost of predicting class ``k`` in state ``s``."""
        return float(cm.mc[k] @ self.class_distribution(s))

    def best_diagnosis(self, cm: CostModel, s: State) -> tuple[int, float]:
        return best_diagnosis_from(cm, self.class_distribution(s))


def best_diagnosis_from(cm: CostModel, p: np.ndarray) -> tuple[int, float]:
    """Cheapest diagnosis under class distribution ``p``; ties go to the lowest class index."""
    costs = cm.mc @ p
    k = int(np.argmin(costs))
    return k, float(costs[k])
