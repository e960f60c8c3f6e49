"""Loading, preprocessing, discretization and replica generation for tabular data.

The pipeline mirrors the usual medical-benchmark recipe:

    raw = load_csv(path, Schema(class_column="class"))
    raw = preprocess(raw, {"1": "sick", "2": "sick", "0": "healthy"})
    data = discretize(raw, levels=3)
    replicas = make_replicas(data, n=20, seed=0)

Discretization is fitted on the whole dataset before the replicas are drawn, so
the cut points have seen every example, test splits included.  That leak is
deliberate: it reproduces the reference experimental protocol.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DecodeError, EmptyDatasetError, ParseError

DATASET_FORMAT = "diagsearch-dataset"
REPLICA_FORMAT = "diagsearch-replicas"
COSTS_FORMAT = "diagsearch-costs"
FORMAT_VERSION = 1

DISCRETE = "discrete"
CONTINUOUS = "continuous"


# ---------------------------------------------------------------------------
# Raw data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schema:
    """Column roles for :func:`load_csv`.

    Numeric columns are treated as continuous unless listed in ``discrete``.
    """

    class_column: str
    missing_tokens: tuple[str, ...] = ("?", "")
    discrete: tuple[str, ...] = ()
    ignore: tuple[str, ...] = ()


@dataclass
class RawDataset:
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    rows: list[tuple]  # float | str | None (missing) per attribute
    labels: list[str]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ConfigError(f"duplicate attribute names in {self.names}")
        if len(self.kinds) != len(self.names):
            raise ConfigError("kinds and names differ in length")
        if len(self.rows) != len(self.labels):
            raise ConfigError("rows and labels differ in length")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.names):
                raise ConfigError(f"record {i} has arity {len(row)}, expected {len(self.names)}")

    def __len__(self):
        return len(self.rows)

    def has_missing(self, i: int) -> bool:
        return any(v is None for v in self.rows[i])


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, schema: Schema) -> RawDataset:
    """Read a CSV file with a header row into a :class:`RawDataset`."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if schema.class_column not in header:
            raise ConfigError(f"class column {schema.class_column!r} not in header {header}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}"
                )
            records.append([c.strip() for c in row])
    if not records:
        raise ParseError(f"{path}: no data rows")

    cls = header.index(schema.class_column)
    keep = [j for j, h in enumerate(header) if j != cls and h not in schema.ignore]
    missing = set(schema.missing_tokens)

    kinds = []
    for j in keep:
        present = [r[j] for r in records if r[j] not in missing]
        numeric = bool(present) and all(_is_number(t) for t in present)
        kinds.append(CONTINUOUS if numeric and header[j] not in schema.discrete else DISCRETE)

    rows = []
    for r in records:
        row = []
        for j, kind in zip(keep, kinds):
            tok = r[j]
            if tok in missing:
                row.append(None)
            elif kind == CONTINUOUS:
                row.append(float(tok))
            else:
                row.append(tok)
        rows.append(tuple(row))
    labels = [r[cls] for r in records]
    return RawDataset(tuple(header[j] for j in keep), tuple(kinds), rows, labels)


def load_pima() -> RawDataset:
    """The Pima Indians Diabetes data (768 examples, 8 numeric tests) shipped with the package."""
    ref = resources.files("diagsearch") / "data" / "pima.csv"
    with resources.as_file(ref) as p:
        return load_csv(p, Schema(class_column="class"))


def preprocess(raw: RawDataset, class_merge: Mapping[str, str] | None = None) -> RawDataset:
    """Drop records with any missing value and relabel classes through ``class_merge``.

    Labels absent from ``class_merge`` keep their name.
    """
    class_merge = dict(class_merge or {})
    image = {class_merge.get(lab, lab) for lab in set(raw.labels)}
    if len(image) < 2:
        raise ConfigError(f"class merge leaves {len(image)} class(es); need at least 2")

    rows, labels = [], []
    for row, lab in zip(raw.rows, raw.labels):
        if any(v is None for v in row):
            continue
        rows.append(row)
        labels.append(class_merge.get(lab, lab))
    if not rows:
        raise EmptyDatasetError("every record has a missing value")
    return RawDataset(raw.names, raw.kinds, rows, labels)


# ---------------------------------------------------------------------------
# Discretized data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttributeMeta:
    name: str
    values: tuple[str, ...]
    original_kind: str = DISCRETE
    thresholds: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.values:
            raise ConfigError(f"attribute {self.name!r} has no values")
        if self.thresholds is not None:
            t = self.thresholds
            if any(b <= a for a, b in zip(t, t[1:])):
                raise ConfigError(f"thresholds of {self.name!r} not strictly increasing")
            if len(self.values) != len(t) + 1:
                raise ConfigError(f"{self.name!r}: {len(self.values)} values for {len(t)} thresholds")

    @property
    def arity(self) -> int:
        return len(self.values)

    def encode(self, raw_value) -> int:
        """Map a raw value onto its value index."""
        if self.thresholds is not None:
            return bisect.bisect_left(self.thresholds, float(raw_value))
        try:
            return self.values.index(str(raw_value))
        except ValueError:
            raise ConfigError(f"unknown value {raw_value!r} for attribute {self.name!r}") from None


@dataclass
class Dataset:
    """Fully discrete examples: ``X[i, n]`` is the value index of attribute ``n``."""

    attributes: tuple[AttributeMeta, ...]
    classes: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.attributes = tuple(self.attributes)
        self.classes = tuple(self.classes)
        self.X = np.asarray(self.X, dtype=np.int64).reshape(-1, len(self.attributes))
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.classes) < 2:
            raise ConfigError("need at least two classes")
        if len(self.X) != len(self.y):
            raise ConfigError("X and y differ in length")
        for n, a in enumerate(self.attributes):
            col = self.X[:, n]
            if col.size and (col.min() < 0 or col.max() >= a.arity):
                raise ConfigError(f"value index out of range for attribute {a.name!r}")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.classes)):
            raise ConfigError("class index out of range")

    def __len__(self):
        return len(self.y)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def arities(self) -> np.ndarray:
        return np.array([a.arity for a in self.attributes], dtype=np.int64)

    def attribute_index(self, name: str) -> int:
        for n, a in enumerate(self.attributes):
            if a.name == name:
                return n
        raise KeyError(name)

    def class_index(self, label: str) -> int:
        return self.classes.index(label)

    def record(self, i: int) -> dict[str, str]:
        """Example ``i`` as a mapping attribute name -> value label."""
        return {a.name: a.values[v] for a, v in zip(self.attributes, self.X[i])}

    def label(self, i: int) -> str:
        return self.classes[self.y[i]]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.attributes, self.classes, self.X[idx], self.y[idx])

    # -- canonical file ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": DATASET_FORMAT,
            "version": FORMAT_VERSION,
            "attributes": [
                {
                    "name": a.name,
                    "values": list(a.values),
                    "kind": a.original_kind,
                    "thresholds": None if a.thresholds is None else list(a.thresholds),
                }
                for a in self.attributes
            ],
            "classes": list(self.classes),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        _check_header(d, DATASET_FORMAT)
        try:
            attrs = tuple(
                AttributeMeta(
                    a["name"],
                    tuple(a["values"]),
                    a["kind"],
                    None if a["thresholds"] is None else tuple(a["thresholds"]),
                )
                for a in d["attributes"]
            )
            return cls(attrs, tuple(d["classes"]), np.array(d["X"]), np.array(d["y"]))
        except (KeyError, TypeError) as exc:
            raise DecodeError(f"malformed dataset file: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_dict(_read_json(path))


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def _check_header(d, fmt: str) -> None:
    if not isinstance(d, dict) or d.get("format") != fmt:
        raise DecodeError(f"not a {fmt} document")
    if d.get("version") != FORMAT_VERSION:
        raise DecodeError(f"unsupported {fmt} version {d.get('version')!r}")


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    """Entropy in bits of each row of a count array (last axis = classes)."""
    tot = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tot > 0, counts / np.where(tot > 0, tot, 1), 0.0)
        logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=-1)


def partition_gain(bin_counts: np.ndarray) -> float:
    """Information gain (bits) of a partition given its ``(bins, K)`` class-count table."""
    bin_counts = np.asarray(bin_counts, dtype=float)
    total = bin_counts.sum(axis=0)
    n = total.sum()
    h = _entropy_rows(total)
    w = bin_counts.sum(axis=1) / n
    return float(h - (w * _entropy_rows(bin_counts)).sum())


def best_thresholds(values, y, levels: int = 3, n_classes: int | None = None) -> tuple[float, ...]:
    """Cut points maximizing information gain with the class, found exhaustively.

    Candidates are midpoints between consecutive distinct values.  All
    ``levels - 1``-subsets of candidates are scored; ties go to the
    lexicographically smallest threshold tuple.
    """
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    K = n_classes if n_classes is not None else int(y.max()) + 1
    distinct, inv = np.unique(values, return_inverse=True)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    if len(distinct) <= levels:
        return tuple(float(t) for t in mids)

    counts = np.zeros((len(distinct), K))
    np.add.at(counts, (inv, y), 1)
    cum = np.vstack([np.zeros(K), np.cumsum(counts, axis=0)])  # cum[i] = counts of values < distinct[i]
    total = cum[-1]
    n = total.sum()
    h_parent = _entropy_rows(total)

    best_gain, best_cut = -np.inf, None
    combos = itertools.combinations(range(1, len(distinct)), levels - 1)
    while True:
        chunk = np.array(list(itertools.islice(combos, 200_000)), dtype=np.int64)
        if chunk.size == 0:
            break
        bounds = np.hstack([np.zeros((len(chunk), 1), np.int64), chunk,
                            np.full((len(chunk), 1), len(distinct), np.int64)])
        bins = cum[bounds[:, 1:]] - cum[bounds[:, :-1]]  # (C, levels, K)
        w = bins.sum(axis=2) / n
        gain = h_parent - (w * _entropy_rows(bins)).sum(axis=1)
        top = gain.max()
        if top > best_gain + 1e-12:
            j = int(np.flatnonzero(gain >= top - 1e-12)[0])
            best_gain, best_cut = top, chunk[j]
    return tuple(float(mids[c - 1]) for c in best_cut)


def _level_labels(thresholds: Sequence[float]) -> tuple[str, ...]:
    if not thresholds:
        return ("all",)
    t = [f"{x:.6g}" for x in thresholds]
    labels = [f"<={t[0]}"]
    labels += [f"({a},{b}]" for a, b in zip(t, t[1:])]
    labels.append(f">{t[-1]}")
    return tuple(labels)


def discretize(raw: RawDataset, levels: int = 3) -> Dataset:
    """Turn a missing-free :class:`RawDataset` into a :class:`Dataset`."""
    if levels < 2:
        raise ConfigError("levels must be >= 2")
    if not raw.rows:
        raise EmptyDatasetError("no records to discretize")
    if any(raw.has_missing(i) for i in range(len(raw))):
        raise ConfigError("discretize() requires a dataset without missing values; run preprocess()")

    classes = tuple(sorted(set(raw.labels)))
    y = np.array([classes.index(lab) for lab in raw.labels], dtype=np.int64)
    columns, attrs = [], []
    for j, (name, kind) in enumerate(zip(raw.names, raw.kinds)):
        col = [r[j] for r in raw.rows]
        if kind == CONTINUOUS:
            th = best_thresholds(col, y, levels, len(classes))
            meta = AttributeMeta(name, _level_labels(th), CONTINUOUS, th)
        else:
            seen = list(dict.fromkeys(str(v) for v in col))
            meta = AttributeMeta(name, tuple(seen), DISCRETE, None)
        attrs.append(meta)
        columns.append([meta.encode(v) for v in col])
    X = np.array(columns, dtype=np.int64).T.reshape(len(raw), len(attrs))
    return Dataset(tuple(attrs), classes, X, y)


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------


@dataclass
class CostModel:
    """Test costs keyed by attribute name and a misdiagnosis matrix ``mc[predicted, true]``."""

    test_cost: dict[str, float]
    mc: np.ndarray
    classes: tuple[str, ...]
    name: str = ""

    def __post_init__(self):
        self.test_cost = {k: float(v) for k, v in self.test_cost.items()}
        self.mc = np.asarray(self.mc, dtype=float)
        self.classes = tuple(self.classes)
        K = len(self.classes)
        if self.mc.shape != (K, K):
            raise ConfigError(f"misdiagnosis matrix must be {K}x{K}, got {self.mc.shape}")
        bad = [k for k, v in self.test_cost.items() if not (v > 0 and math.isfinite(v))]
        if bad:
            raise ConfigError(f"test costs must be positive and finite: {bad}")
        if (self.mc < 0).any() or not np.isfinite(self.mc).all():
            raise ConfigError("misdiagnosis costs must be nonnegative and finite")

    def for_dataset(self, data: Dataset) -> "CostModel":
        """Reorder the matrix to ``data.classes`` and check every attribute is priced."""
        missing = [a for a in data.names if a not in self.test_cost]
        if missing:
            raise ConfigError(f"no test cost for attributes {missing}")
        if set(self.classes) != set(data.classes):
            raise ConfigError(f"cost classes {self.classes} do not match data classes {data.classes}")
        perm = [self.classes.index(c) for c in data.classes]
        return CostModel(dict(self.test_cost), self.mc[np.ix_(perm, perm)], data.classes, self.name)

    def test_costs(self, names: Sequence[str]) -> np.ndarray:
        return np.array([self.test_cost[n] for n in names], dtype=float)

    @property
    def max_mc(self) -> float:
        return float(self.mc.max())


def unit_costs(data: Dataset, mc, name: str = "") -> CostModel:
    """Cost model charging 1 per test."""
    return CostModel({a: 1.0 for a in data.names}, mc, data.classes, name)


def load_cost_models(path) -> dict[str, CostModel]:
    """Read a cost file: shared test costs plus one matrix per misdiagnosis-cost level.

    Layout::

        {"format": "diagsearch-costs", "version": 1,
         "classes": ["healthy", "sick"],
         "test_costs": {"plas": 17.61, ...},
         "levels": [{"name": "low", "mc": [[0, 10], [40, 0]]}, ...]}
    """
    d = _read_json(path)
    try:
        _check_header(d, COSTS_FORMAT)
    except DecodeError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        classes = tuple(d["classes"])
        tc = d["test_costs"]
        levels = d["levels"]
    except KeyError as exc:
        raise ConfigError(f"cost file missing key {exc}") from exc
    out = {}
    for lv in levels:
        cm = CostModel(tc, lv["mc"], classes, lv["name"])
        off = cm.mc[~np.eye(len(classes), dtype=bool)]
        if not (off > 0).any():
            raise ConfigError(f"cost level {lv['name']!r} has no positive misdiagnosis cost")
        if cm.name in out:
            raise ConfigError(f"duplicate cost level {cm.name!r}")
        out[cm.name] = cm
    if not out:
        raise ConfigError("cost file defines no levels")
    return out


def dump_cost_models(models: Iterable[CostModel], path) -> None:
    models = list(models)
    first = models[0]
    doc = {
        "format": COSTS_FORMAT,
        "version": FORMAT_VERSION,
        "classes": list(first.classes),
        "test_costs": first.test_cost,
        "levels": [{"name": m.name, "mc": m.mc.tolist()} for m in models],
    }
    Path(path).write_text(json.dumps(doc, indent=2))


# ---------------------------------------------------------------------------
# Replicas
# ---------------------------------------------------------------------------


@dataclass
class Replica:
    id: int
    train_idx: list[int]
    test_idx: list[int]
    seed: int = 0


def stratified_split(y, frac, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split positions ``0..len(y)-1`` into (train, rest), stratified by class.

    Each class contributes ``floor(frac * count)`` examples; the leftover
    examples needed to reach ``round(frac * len(y))`` go to the classes with the
    largest fractional parts (lowest class index on ties).
    """
    y = np.asarray(y)
    frac = Fraction(frac).limit_denominator(10**6)
    classes = np.unique(y)
    groups = [np.flatnonzero(y == c) for c in classes]
    exact = [frac * len(g) for g in groups]
    take = [math.floor(e) for e in exact]
    target = math.floor(frac * len(y) + Fraction(1, 2))
    order = sorted(range(len(groups)), key=lambda i: (-(exact[i] - take[i]), i))
    for i in order[: max(0, target - sum(take))]:
        take[i] += 1
    train, rest = [], []
    for g, t in zip(groups, take):
        perm = rng.permutation(g)
        train.append(perm[:t])
        rest.append(perm[t:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(rest))


def make_replicas(data: Dataset, n: int = 20, train_frac=Fraction(2, 3), seed: int = 0) -> list[Replica]:
    """``n`` stratified train/test splits, reproducible from ``seed``."""
    f = Fraction(train_frac).limit_denominator(10**6)
    if not 0 < f < 1:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    counts = np.bincount(data.y, minlength=data.n_classes)
    if (counts[counts > 0] < 2).any():
        raise ConfigError("every class needs at least 2 examples")
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]
    out = []
    for i, s in enumerate(seeds):
        train, test = stratified_split(data.y, f, np.random.default_rng(s))
        out.append(Replica(i, train.tolist(), test.tolist(), s))
    return out


def save_replicas(replicas: Sequence[Replica], path, *, seed=None, train_frac=None) -> None:
    doc = {
        "format": REPLICA_FORMAT,
        "version": FORMAT_VERSION,
        "seed": seed,
        "train_frac": None if train_frac is None else str(Fraction(train_frac).limit_denominator(10**6)),
        "replicas": [
            {"id": r.id, "seed": r.seed, "train": list(r.train_idx), "test": list(r.test_idx)}
            for r in replicas
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_replicas(path) -> list[Replica]:
    d = _read_json(path)
    _check_header(d, REPLICA_FORMAT)
    try:
        return [Replica(r["id"], list(r["train"]), list(r["test"]), r["seed"]) for r in d["replicas"]]
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"malformed replica manifest: {exc}") from exc
