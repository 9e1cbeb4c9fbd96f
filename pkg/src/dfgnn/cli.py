"""Command-line interface: ``dfgnn {train,sweep-depth,gen-synth,stats,gradcheck}``.

Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import grad_check
from .data import DatasetError, gen_sbm, load_dataset, save_dataset
from .graph import build_operators, from_edges
from .metrics import homophily_rate, write_report
from .model import VARIANTS, ModelConfig, init_model, model_tape, save_checkpoint
from .seeding import make_rng
from .trainer import (SWEEP_DEPTHS, AllRepeatsFailed, TrainConfig, run_experiment, sweep_csv,
                      sweep_depth)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
GRADCHECK_TOL = 1e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    return parse


def _add_train_flags(p):
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--gcn-layers", type=int)


OVERRIDE_KEYS = ("seed", "repeats", "K", "hidden_dim", "learning_rate", "max_epochs", "patience",
                 "dropout", "weight_decay", "gcn_layers", "variant")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dfgnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train over repeated random splits")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--embeddings", action="store_true", help="dump repeat-0 embeddings")
    _add_train_flags(p)

    p = sub.add_parser("sweep-depth", help="accuracy versus depth")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--depths", type=_csv_list(int), default=list(SWEEP_DEPTHS))
    p.add_argument("--variants", type=_csv_list(str), default=["gcn", "full"])
    _add_train_flags(p)

    p = sub.add_parser("gen-synth", help="write a synthetic SBM dataset")
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--homophily", type=float, required=True)
    p.add_argument("--avg-degree", type=float, default=10.0)
    p.add_argument("--feat-dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("stats", help="print dataset statistics")
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of the model gradient")
    p.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args) -> TrainConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    merged = {}
    if args.config is not None:
        try:
            merged.update(json.loads(args.config.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(merged, dict):
            raise UsageError("config file must hold a JSON object")
    for key in OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    try:
        return TrainConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _load(path):
    try:
        return load_dataset(path)
    except (DatasetError, OSError, ValueError) as exc:
        raise UsageError(f"invalid dataset {path}: {exc}") from None


def _prepare_out(path: Path):
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {path}: {exc}") from None


def cmd_train(args) -> int:
    config = resolve_config(args)
    dataset = _load(args.data)
    _prepare_out(args.out)
    try:
        result = run_experiment(dataset, config)
    except AllRepeatsFailed as exc:
        print(f"all repeats diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = result.report(dataset.name)
    emb = None
    if args.embeddings and result.completed:
        emb = result.completed[0].embedding
    write_report(report, args.out / "report.json", emb)
    for r in result.repeats:
        (args.out / f"log_r{r.index}.csv").write_text(r.log_csv())
        if not r.failed:
            save_checkpoint(r.params, args.out / f"model_r{r.index}.dfgm")
    # wall-clock data lives apart from the report so reruns stay byte-identical
    (args.out / "timing.json").write_text(json.dumps(
        {"finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "wall_seconds": result.wall_time}))
    print(f"{config.variant}: {100 * report.mean:.2f} +- {100 * report.std:.2f} "
          f"over {len(report.accuracies)} repeats ({report.failures} failed)")
    return EXIT_OK


def cmd_sweep_depth(args) -> int:
    config = resolve_config(args)
    bad = [d for d in args.depths if d not in SWEEP_DEPTHS]
    if not args.depths or bad:
        raise UsageError(f"depths must be drawn from {SWEEP_DEPTHS}")
    unknown = [v for v in args.variants if v not in VARIANTS]
    if not args.variants or unknown:
        raise UsageError(f"unknown variants {unknown}; expected from {VARIANTS}")
    dataset = _load(args.data)
    _prepare_out(args.out)
    try:
        rows = sweep_depth(dataset, config, args.depths, args.variants)
    except AllRepeatsFailed as exc:
        print(f"all repeats diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = sweep_csv(rows)
    (args.out / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    if args.out.exists() and (not args.out.is_dir() or any(args.out.iterdir())):
        raise UsageError(f"{args.out} exists and is not an empty directory")
    try:
        ds = gen_sbm(args.nodes, args.classes, args.homophily, args.avg_degree, args.feat_dim,
                     args.noise, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_dataset(ds, args.out)
    try:
        print(f"HR {homophily_rate(ds.graph, ds.labels):.4f}")
    except ValueError:
        print("HR undefined (no edges)")
    return EXIT_OK


def cmd_stats(args) -> int:
    ds = _load(args.data)
    try:
        hr = f"{homophily_rate(ds.graph, ds.labels):.4f}"
    except ValueError as exc:
        print(f"cannot compute HR: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("nodes\tedges\tfeatures\tclasses\tHR")
    print(f"{ds.num_nodes}\t{ds.num_edges}\t{ds.num_features}\t{ds.num_classes}\t{hr}")
    return EXIT_OK


def gradcheck_instance(seed: int, n: int = 20, d: int = 5, h: int = 8, C: int = 3, K: int = 3):
    """Random graph, features and labels; prox steps disabled via alpha_3 = alpha_4 = 0."""
    rng = make_rng(seed, "gradcheck")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < 0.2
    ops = build_operators(from_edges(n, np.stack([iu[keep], ju[keep]], axis=1)))
    X = rng.normal(size=(n, d))
    labels = rng.integers(0, C, size=n)
    config = ModelConfig(hidden_dim=h, K=K, fixed_alphas={"a3": 0.0, "a4": 0.0})
    values = init_model(config, d, C, seed)
    # nonzero bias so the check does not start from a symmetric point
    values["b"] = 0.1 * rng.normal(size=values["b"].shape)
    return X, labels, ops, config, values


def run_gradcheck(seed: int) -> float:
    X, labels, ops, config, values = gradcheck_instance(seed)
    mask = np.arange(len(labels))

    def loss(vals, tape):
        out = model_tape(tape, X, ops, vals, config)
        return tape.softmax_cross_entropy_masked(out.logits, labels, mask)

    return grad_check(loss, values)


def cmd_gradcheck(args) -> int:
    err = run_gradcheck(args.seed)
    ok = err <= GRADCHECK_TOL
    print(f"max relative error {err:.3e} ({'pass' if ok else 'FAIL'} at {GRADCHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {"train": cmd_train, "sweep-depth": cmd_sweep_depth, "gen-synth": cmd_gen_synth,
            "stats": cmd_stats, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
