"""Command-line entry point: ``vgcn {convert,train,eval,bench,stats}``.

Every subcommand accepts ``--config FILE`` holding ``key = value`` lines
whose keys are flag names (``superpixels``, ``dp-epsilon`` ...).  Values
from the command line win over the file, which wins over built-in
defaults.  Logs go to stderr as one JSON object per line; results go to
stdout or the requested output files.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical failure.
"""
import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .boundary import format_chains
from .datasets import DatasetFormatError, load_dataset
from .dualgraph import DEFAULT_EPS, DualConfig, image_to_graph
from .graphstore import GraphFormatError, graph_to_record, read_graphs, write_graphs
from .nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nn.model import ModelConfig
from .superpixel import REFERENCE_SPACING, SnicConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def log(event, **fields):
    rec = {"event": event, **fields}
    sys.stderr.write(json.dumps(rec, sort_keys=True, default=str) + "\n")
    sys.stderr.flush()


def emit(**fields):
    sys.stdout.write(json.dumps(fields, sort_keys=True, default=str) + "\n")


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def non_negative_float(s):
    v = float(s)
    if not v >= 0 or math.isinf(v):
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {s}")
    return v


def positive_float(s):
    v = non_negative_float(s)
    if v == 0:
        raise argparse.ArgumentTypeError(f"expected a number > 0, got {s}")
    return v


def fraction(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {s}")
    return v


def ratio_list(s):
    try:
        vals = [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("ratios must be positive")
    return vals


def _model_flags(p):
    p.add_argument("--model", choices=("gcn", "nvgcn", "gat"), default="nvgcn")
    p.add_argument("--heads", type=positive_int, default=2)
    p.add_argument("--self-loop-weight", type=positive_float, default=6.0)


def build_parser():
    root = Parser(prog="vgcn", description="Image-to-graph conversion and graph classification.")
    root.add_argument("--version", action="version", version=f"vgcn {__version__}")
    sub = root.add_subparsers(dest="command", required=True, parser_class=Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="FILE", help="key = value defaults for this command")
        return p

    p = command("convert", "Convert an image dataset into a VGR1 graph file.")
    p.add_argument("--input", required=True, help="dataset directory or single file")
    p.add_argument("--dataset", choices=("mnist", "fashion", "cifar10"), default="mnist")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--out", required=True)
    p.add_argument("--superpixels", type=positive_int, default=64)
    p.add_argument("--compactness", type=positive_float, default=SnicConfig.compactness)
    p.add_argument("--spacing", type=positive_float, default=None)
    p.add_argument("--color-space", choices=("auto", "gray", "rgb", "lab"), default="auto")
    p.add_argument("--paper-config", action="store_true",
                   help=f"use seed spacing {REFERENCE_SPACING:g} for the SNIC distance")
    p.add_argument("--dp-epsilon", type=non_negative_float, default=DEFAULT_EPS)
    p.add_argument("--perp-check", action="store_true")
    p.add_argument("--perp-tol", type=non_negative_float, default=30.0)
    p.add_argument("--neighborhood-radius", type=positive_int, default=1)
    p.add_argument("--limit", type=positive_int, default=None,
                   help="convert only the first N images")
    p.add_argument("--jobs", type=positive_int, default=os.cpu_count() or 1)
    p.add_argument("--dump-chains", metavar="FILE", default=None,
                   help="write the boundary chains of image --dump-index as text")
    p.add_argument("--dump-index", type=int, default=0)

    p = command("train", "Train a graph classifier on a VGR1 file.")
    p.add_argument("--graphs", required=True)
    _model_flags(p)
    p.add_argument("--epochs", type=positive_int, default=300)
    p.add_argument("--patience", type=positive_int, default=10)
    p.add_argument("--lr", type=non_negative_float, default=1e-3)
    p.add_argument("--batch-size", type=positive_int, default=128)
    p.add_argument("--test-fraction", type=fraction, default=0.2)
    p.add_argument("--seed", type=int, default=None, help="defaults to $VGCN_SEED, then 0")
    p.add_argument("--bn-recalibrate", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--limit", type=positive_int, default=None)
    p.add_argument("--out", default=None, help="checkpoint path")
    p.add_argument("--metrics-out", default=None, help="per-epoch metrics (JSON lines)")

    p = command("eval", "Report the accuracy of a checkpoint on a VGR1 file.")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--batch-size", type=positive_int, default=512)
    p.add_argument("--limit", type=positive_int, default=None)

    p = command("bench", "Multiplication counts or per-epoch timings.")
    p.add_argument("--mode", choices=("opcount", "time"), default="opcount")
    p.add_argument("--graphs", default=None)
    p.add_argument("--f-prime-ratios", type=ratio_list, default=[0.33, 0.5, 1.0, 2.0, 3.0])
    p.add_argument("--features", type=positive_int, default=64, help="F for opcount mode")
    p.add_argument("--epochs", type=positive_int, default=2)
    p.add_argument("--repeats", type=positive_int, default=3)
    p.add_argument("--batch-size", type=positive_int, default=128)
    p.add_argument("--limit", type=positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = command("stats", "Summarize a VGR1 file.")
    p.add_argument("--graphs", required=True)
    p.add_argument("--bins", type=positive_int, default=10)
    return root


# config files -----------------------------------------------------------------

def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("_", "-")] = value
    return out


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _convert_value(action, key, value):
    if action.nargs == 0:  # store_true / BooleanOptionalAction
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise UsageError(f"config key {key}: expected a boolean, got {value!r}")
        return low in ("true", "1", "yes")
    try:
        v = action.type(value) if action.type else value
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise UsageError(f"config key {key}: {exc}") from None
    if action.choices is not None and v not in action.choices:
        raise UsageError(f"config key {key}: {v!r} not in {sorted(action.choices)}")
    return v


def apply_config(sub, values):
    """Install config-file values as defaults of ``sub``; returns {dest: value}."""
    by_flag = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_flag[opt[2:]] = action
    installed = {}
    for key, value in values.items():
        action = by_flag.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        installed[action.dest] = _convert_value(action, key, value)
    for action in sub._actions:
        if action.dest in installed:
            action.required = False
    sub.set_defaults(**installed)
    return installed


def _prescan(argv):
    """(command, config path) found in argv without a full parse."""
    command = next((t for t in argv if t in COMMANDS), None)
    config = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
    return command, config


def parse(argv):
    parser = build_parser()
    command, config = _prescan(argv)
    from_file = {}
    if command and config:
        from_file = apply_config(_subparser(parser, command), read_config(config))
    if command:
        known = set(_subparser(parser, command)._option_string_actions)
        for tok in argv[argv.index(command) + 1:]:
            name = tok.split("=", 1)[0]
            if name.startswith("--") and name not in known:
                raise UsageError(f"unrecognized argument {name} for {command}")
    args = parser.parse_args(argv)
    cli_dests = _explicit_dests(parser, args.command, argv)
    report = {}
    for k, v in sorted(vars(args).items()):
        src = "cli" if k in cli_dests else "file" if k in from_file else "default"
        report[k] = {"value": v, "source": src}
    return args, report


def _explicit_dests(parser, command, argv):
    sub = _subparser(parser, command)
    flags = {}
    for action in sub._actions:
        for opt in action.option_strings:
            flags[opt] = action.dest
            if isinstance(action, argparse.BooleanOptionalAction) and opt.startswith("--no-"):
                flags[opt] = action.dest
    out = set()
    for tok in argv:
        name = tok.split("=", 1)[0]
        if name in flags:
            out.add(flags[name])
    return out


# subcommands ------------------------------------------------------------------

def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("VGCN_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"VGCN_SEED must be an integer, got {env!r}") from None


def _convert_one(job):
    img, snic_cfg, dual_cfg, eps = job
    t0 = time.perf_counter()
    g = image_to_graph(img, snic_cfg, dual_cfg, eps)
    return g, time.perf_counter() - t0


def cmd_convert(args):
    try:
        snic_cfg = SnicConfig(k=args.superpixels, compactness=args.compactness,
                              spacing=REFERENCE_SPACING if args.paper_config else args.spacing,
                              color_space=args.color_space)
        dual_cfg = DualConfig(perp_check=args.perp_check, perp_tolerance=args.perp_tol,
                              neighborhood_radius=args.neighborhood_radius)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data = load_dataset(args.input, args.dataset, args.split)
    images = data.images[:args.limit] if args.limit else data.images
    labels = data.labels[:len(images)]
    log("convert.start", images=len(images), jobs=args.jobs)
    if args.dump_chains:
        if not 0 <= args.dump_index < len(images):
            raise UsageError(f"--dump-index {args.dump_index} out of range")
        conv = image_to_graph(images[args.dump_index], snic_cfg, dual_cfg, args.dp_epsilon,
                              return_stages=True)
        with open(args.dump_chains, "w") as f:
            f.write(format_chains(conv.chains))
    jobs = ((img, snic_cfg, dual_cfg, args.dp_epsilon) for img in images)
    t0 = time.perf_counter()
    records = []
    if args.jobs > 1 and len(images) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = pool.map(_convert_one, jobs, chunksize=64)
            records = _collect(results, labels)
    else:
        records = _collect(map(_convert_one, jobs), labels)
    nbytes = write_graphs(records, args.out)
    total = time.perf_counter() - t0
    log("convert.done", records=len(records), bytes=nbytes, seconds=round(total, 3))
    emit(result="convert", records=len(records), bytes=nbytes, out=args.out,
         mean_nodes=float(np.mean([r.num_nodes for r in records])) if records else 0.0)
    return EXIT_OK


def _collect(results, labels):
    records = []
    for i, (g, seconds) in enumerate(results):
        records.append(graph_to_record(g, int(labels[i])))
        emit(image=i, nodes=g.num_nodes, edges=g.num_edges, seconds=round(seconds, 6))
    return records


def _load_graphs(path, limit=None):
    recs = read_graphs(path)
    if not recs:
        raise GraphFormatError(f"{path} holds no graphs")
    return recs[:limit] if limit else recs


def cmd_train(args):
    from .train import TrainConfig, fit, split_dataset

    seed = _resolve_seed(args.seed)
    try:
        cfg = TrainConfig(epochs=args.epochs, patience=min(args.patience, args.epochs),
                          lr=args.lr, batch_size=args.batch_size,
                          test_fraction=args.test_fraction, seed=seed,
                          bn_recalibrate=args.bn_recalibrate)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    recs = _load_graphs(args.graphs, args.limit)
    mcfg = ModelConfig(variant=args.model, in_features=recs[0].feature_width, heads=args.heads,
                       self_loop_weight=args.self_loop_weight)
    train, test = split_dataset(recs, cfg.test_fraction, seed)
    log("train.start", train=len(train), test=len(test), model=mcfg.to_dict(), seed=seed)
    metrics = open(args.metrics_out, "w") if args.metrics_out else None

    def on_epoch(m):
        log("train.epoch", **json.loads(m.to_json()))
        if metrics:
            metrics.write(m.to_json(include_time=False) + "\n")
            metrics.flush()

    try:
        res = fit(mcfg, train, test, cfg, on_epoch=on_epoch)
    finally:
        if metrics:
            metrics.close()
    if args.out:
        meta = {"best_epoch": res.best_epoch, "best_accuracy": res.best_accuracy,
                "train": {"epochs": cfg.epochs, "patience": cfg.patience, "lr": cfg.lr,
                          "batch_size": cfg.batch_size, "test_fraction": cfg.test_fraction,
                          "seed": seed, "bn_recalibrate": cfg.bn_recalibrate}}
        save_checkpoint(args.out, res.best_state, res.optimizer, meta)
    emit(result="train", best_accuracy=res.best_accuracy, best_epoch=res.best_epoch,
         epochs_run=len(res.history), checkpoint=args.out)
    return EXIT_OK


def cmd_eval(args):
    from .train import evaluate

    state, _, meta = load_checkpoint(args.ckpt)
    recs = _load_graphs(args.graphs, args.limit)
    if recs[0].feature_width != state.config.in_features:
        raise GraphFormatError(f"graphs have {recs[0].feature_width} features, "
                               f"checkpoint expects {state.config.in_features}")
    acc = evaluate(state, recs, args.batch_size)
    emit(result="eval", accuracy=acc, graphs=len(recs), model=state.config.variant)
    return EXIT_OK


def cmd_bench(args):
    from .bench import epoch_time_bench, format_table, opcount_rows, reduction_percentage

    if args.mode == "opcount":
        if args.graphs:
            recs = _load_graphs(args.graphs, args.limit or 100)
        else:
            recs = [(64, np.empty((0, 2), dtype=np.int64))]  # self-loops only
        rows = opcount_rows(recs, args.features, args.f_prime_ratios)
        for r in rows:
            emit(result="opcount", **r)
        print(format_table(rows, ["ratio", "F", "F_prime", "analytic_pct", "count_model_pct",
                                  "measured_pct", "difference"]), file=sys.stderr)
        emit(result="opcount_limits", f_prime_zero=reduction_percentage(1, 0),
             f_prime_inf=reduction_percentage(1, math.inf))
        return EXIT_OK
    if not args.graphs:
        raise UsageError("bench --mode time needs --graphs")
    recs = _load_graphs(args.graphs, args.limit)
    seed = _resolve_seed(args.seed)
    rows = []
    for rep in range(args.repeats):
        times = epoch_time_bench(recs, epochs=args.epochs, seed=seed + rep,
                                 batch_size=args.batch_size)
        for name, ts in times.items():
            emit(result="epoch_time", variant=name, repeat=rep, seconds=ts)
            rows.append({"variant": name, "repeat": rep, "mean_s": float(np.mean(ts))})
    print(format_table(rows, ["variant", "repeat", "mean_s"]), file=sys.stderr)
    return EXIT_OK


def cmd_stats(args):
    from .stats import corpus_summary

    recs = read_graphs(args.graphs)
    summary = corpus_summary(recs, args.bins)
    emit(result="stats", **summary)
    return EXIT_OK


COMMANDS = {"convert": cmd_convert, "train": cmd_train, "eval": cmd_eval,
            "bench": cmd_bench, "stats": cmd_stats}


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, report = parse(argv)
        log("run.header", command=args.command, config=report)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except (DatasetFormatError, GraphFormatError, CheckpointError, OSError) as exc:
        return _fail("data", exc, EXIT_DATA)
    except ArithmeticError as exc:  # includes NumericalError from training
        return _fail("numerical", exc, EXIT_NUMERIC)
    except ValueError as exc:
        return _fail("data", exc, EXIT_DATA)


def _fail(kind, exc, code):
    log("error", kind=kind, message=str(exc))
    print(f"error: {exc}", file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
