"""Command-line front end: ``diagsearch <command> [flags]``.

A typical session::

    diagsearch prepare --data pima --replicas 5 --seed 0 --out work
    diagsearch learn --data work/dataset.json --costs pima --cost-level medium --algo SP-L --out work/sp
    diagsearch eval --data work/dataset.json --costs pima --cost-level medium --policy work/sp/policy.json
    diagsearch tournament --data work/dataset.json --costs pima --out work/tour
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from importlib.resources import files
from pathlib import Path

from .dataset import (Dataset, Schema, discretize, load_cost_models, load_csv, load_pima,
                      load_replicas, make_replicas, preprocess, save_replicas)
from .errors import ConfigError, DiagSearchError
from .evaluation import ALGORITHMS, bdelta_cost, learn, parse_algorithm, run_experiment
from .graph import DEFAULT_BYTE_LIMIT
from .policy import load_policy, save_policy, to_dot, v_test

BUNDLED = {"pima": "pima_costs.json"}


def _algo(name: str) -> str:
    try:
        return parse_algorithm(name).name
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a fraction: {text!r}") from None


def _merge(text: str) -> tuple[str, str]:
    src, sep, dst = text.partition("=")
    if not sep or not src or not dst:
        raise argparse.ArgumentTypeError(f"expected OLD=NEW, got {text!r}")
    return src, dst


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diagsearch", description="Learn and compare cost-sensitive diagnostic policies.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, costs=True, split=True):
        sp.add_argument("--data", required=True, help="prepared dataset JSON")
        if costs:
            sp.add_argument("--costs", required=True, help="cost file, or 'pima' for the bundled one")
        if split:
            sp.add_argument("--split-file", help="replica file (default: replicas.json next to --data)")

    sp = sub.add_parser("prepare", help="load, clean, discretize and split a CSV dataset")
    sp.add_argument("--data", required=True, help="CSV file, or 'pima' for the bundled copy")
    sp.add_argument("--class-column", default="class")
    sp.add_argument("--merge", type=_merge, action="append", default=[], metavar="OLD=NEW")
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--replicas", type=int, default=20)
    sp.add_argument("--train-frac", type=_fraction, default=Fraction(2, 3))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("learn", help="train one algorithm on one replica")
    common(sp)
    sp.add_argument("--cost-level", required=True)
    sp.add_argument("--algo", type=_algo, required=True, help=f"one of {', '.join(ALGORITHMS)}")
    sp.add_argument("--replica", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mem-limit", type=int, default=DEFAULT_BYTE_LIMIT)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("eval", help="average total cost of a policy on a replica's test split")
    common(sp)
    sp.add_argument("--cost-level", required=True)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--replica", type=int, default=0)

    sp = sub.add_parser("compare", help="bootstrap comparison of two policies")
    common(sp)
    sp.add_argument("--cost-level", required=True)
    sp.add_argument("--policy", nargs=2, required=True, metavar=("FIRST", "SECOND"))
    sp.add_argument("--replica", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("tournament", help="every algorithm on every cost level and replica")
    common(sp)
    sp.add_argument("--cost-level", action="append", help="restrict to these levels (repeatable)")
    sp.add_argument("--algo", type=_algo, action="append", help="restrict to these algorithms (repeatable)")
    sp.add_argument("--replicas", type=int, help="use only the first N replicas")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mem-limit", type=int, default=DEFAULT_BYTE_LIMIT)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("export-dot", help="render a policy file as Graphviz DOT")
    sp.add_argument("--policy", required=True)
    sp.add_argument("--out", help="output file (default: stdout)")
    return p


def _cost_models(spec: str, data: Dataset) -> dict:
    path = files("diagsearch") / "data" / BUNDLED[spec] if spec in BUNDLED else spec
    return {k: cm.for_dataset(data) for k, cm in load_cost_models(path).items()}


def _level(models: dict, name: str):
    if name not in models:
        raise ConfigError(f"unknown cost level {name!r}; available: {', '.join(models)}")
    return models[name]


def _split(args, idx: int):
    path = args.split_file or Path(args.data).with_name("replicas.json")
    reps = load_replicas(path)
    by_id = {r.id: r for r in reps}
    if idx not in by_id:
        raise ConfigError(f"no replica {idx} in {path}")
    return by_id[idx], reps


def cmd_prepare(args) -> None:
    if args.data == "pima":
        raw = load_pima()
    else:
        raw = load_csv(args.data, Schema(args.class_column))
    data = discretize(preprocess(raw, dict(args.merge)), args.levels)
    reps = make_replicas(data, args.replicas, args.train_frac, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.save(out / "dataset.json")
    save_replicas(reps, out / "replicas.json", seed=args.seed, train_frac=args.train_frac)
    print(f"{len(data)} examples, {data.n_attributes} tests, classes {list(data.classes)}; "
          f"{len(reps)} replicas -> {out}")


def cmd_learn(args) -> None:
    data = Dataset.load(args.data)
    cm = _level(_cost_models(args.costs, data), args.cost_level)
    rep, _ = _split(args, args.replica)
    policy, trace = learn(args.algo, data, cm, rep.train_idx, args.seed, args.mem_limit)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_policy(policy, out / "policy.json")
    if trace is not None:
        (out / "trace.jsonl").write_text(trace.to_jsonl())
    status = ""
    if trace is not None and trace.memory_exhausted:
        status = " (memory limit reached; anytime policy returned)"
    print(f"{args.algo}: {policy.n_tests} tests, training value {policy.root.value:.6g}{status}")


def cmd_eval(args) -> None:
    data = Dataset.load(args.data)
    cm = _level(_cost_models(args.costs, data), args.cost_level)
    rep, _ = _split(args, args.replica)
    policy = load_policy(args.policy)
    policy.validate(data)
    print(f"V_test = {v_test(policy, data, rep.test_idx, cm):.6g}")


def cmd_compare(args) -> None:
    data = Dataset.load(args.data)
    cm = _level(_cost_models(args.costs, data), args.cost_level)
    rep, _ = _split(args, args.replica)
    p1, p2 = (load_policy(p) for p in args.policy)
    p1.validate(data)
    p2.validate(data)
    out = bdelta_cost(p1, p2, data, rep.test_idx, cm, seed=args.seed)
    print(f"{out.variant} for {args.policy[0]}: 95% interval ({out.ci[0]:.6g}, {out.ci[1]:.6g})")


def cmd_tournament(args) -> None:
    data = Dataset.load(args.data)
    models = _cost_models(args.costs, data)
    if args.cost_level:
        models = {lv: _level(models, lv) for lv in args.cost_level}
    _, reps = _split(args, 0) if args.split_file is None else (None, load_replicas(args.split_file))
    if args.replicas is not None:
        reps = reps[: args.replicas]
    algos = args.algo or list(ALGORITHMS)
    domain = Path(args.data).parent.name or "domain"

    def progress(cell):
        print(f"  level {cell.level} replica {cell.replica} done", file=sys.stderr, flush=True)

    exp = run_experiment(data, models, reps, algos, args.seed, domain=domain,
                         byte_limit=args.mem_limit, jobs=args.jobs, progress=progress)
    exp.write(args.out)
    print(exp.summary(), end="")


def cmd_export_dot(args) -> None:
    dot = to_dot(load_policy(args.policy))
    if args.out:
        Path(args.out).write_text(dot)
    else:
        sys.stdout.write(dot)


COMMANDS = {"prepare": cmd_prepare, "learn": cmd_learn, "eval": cmd_eval, "compare": cmd_compare,
            "tournament": cmd_tournament, "export-dot": cmd_export_dot}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (DiagSearchError, OSError, json.JSONDecodeError) as exc:
        print(f"diagsearch {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
