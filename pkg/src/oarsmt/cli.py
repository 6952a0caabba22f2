"""Command line: generate, solve, train, bench, iterations, sections, plot.

Each subcommand accepts ``--config FILE`` (a JSON object) whose keys are
overridden by explicit flags.  Exit codes: 0 success, 1 usage error,
2 data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import bench, dataset, parallel, plots, raster, rcnn, tc, trainer
from .core import is_valid_tree, load_instance
from .errors import OarsmtError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def _merge(config: dict, args: argparse.Namespace, keys) -> dict:
    out = dict(config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _tc_config(args) -> tc.TCConfig:
    base = _load_config(getattr(args, "tc_config", None))
    keys = [f.name for f in fields(tc.TCConfig)]
    return tc.TCConfig(**_merge(base, args, keys))


def _add_tc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tc-config", help="JSON file with TC settings")
    p.add_argument("--whiteness-threshold", dest="whiteness_threshold", type=float)
    p.add_argument("--first-batch", dest="first_batch", type=int)
    p.add_argument("--batch-step", dest="batch_step", type=int)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)


# -- subcommands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    keys = ("rows", "cols", "terminal_counts", "count", "wall_removals", "seed")
    cfg = dataset.DatasetConfig.from_dict(_merge(_load_config(args.config), args, keys))
    manifest = dataset.write_dataset(args.out, cfg)
    print(f"wrote {cfg.count} instances to {args.out} (manifest {manifest.name})")
    return EXIT_OK


def cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    weights = rcnn.load_weights(args.weights) if args.weights else None
    if args.solver == "net" and weights is None:
        raise UsageError("solver 'net' needs --weights")
    tree, elapsed, iters = bench.run_solver(args.solver, instance, weights, _tc_config(args))
    report = is_valid_tree(instance, tree)
    print(f"solver      {args.solver}")
    print(f"length      {len(tree)}")
    print(f"valid       {report.valid}")
    print(f"elapsed     {elapsed:.6f} s")
    if args.solver == "net":
        print(f"iterations  {iters}")
    if args.image:
        raster.write_pnm(args.image, raster.render_edges(instance.rows, instance.cols, tree.edges))
    return EXIT_OK


def cmd_train(args) -> int:
    keys = [f.name for f in fields(trainer.TrainConfig)]
    cfg = trainer.TrainConfig(**_merge(_load_config(args.config), args, keys))
    outcome = trainer.train(cfg)
    print(f"best epoch {outcome.best_epoch}, peak accuracy {outcome.best_accuracy:.3f}, "
          f"{outcome.steps} steps; weights {outcome.best_path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    samples = dataset.load_dataset(args.dataset)
    weights = rcnn.load_weights(args.weights) if args.weights else None
    records = bench.bench_samples(samples, args.solvers, weights, _tc_config(args))
    bench.write_records(args.out, records)
    summary = bench.summarize(records)
    text = bench.format_table(summary, "accuracy") + "\n\n" + bench.format_table(summary, "runtime")
    print(text)
    if args.table_out:
        Path(args.table_out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_iterations(args) -> int:
    samples = dataset.load_dataset(args.dataset)
    weights = rcnn.load_weights(args.weights)
    rows = bench.iteration_stats(samples, weights, _tc_config(args))
    bench.write_rows(args.out, bench.ITERATION_COLUMNS, rows)
    for row in rows:
        print(f"N={row['n_terminals']}: mean {row['mean']:.2f} iterations over {row['count']} instances")
    return EXIT_OK


def cmd_sections(args) -> int:
    cfg = rcnn.NetworkConfig(width=args.width)
    weights = rcnn.init_weights(cfg, args.seed)
    x = np.random.Generator(np.random.PCG64(args.seed)).random((3, args.size, args.size)).astype(np.float32)
    rows = []
    for n in range(1, args.max_sections + 1):
        seconds, _, timings = parallel.time_single_pass(x, weights, n)
        t = timings[0]
        rows.append({"n_sections": n, "seconds": seconds, "split": t.split, "compute": t.compute, "merge": t.merge})
        print(f"{n} sections: {seconds:.3f} s")
    bench.write_rows(args.out, plots.SECTION_COLUMNS, rows)
    return EXIT_OK


def cmd_plot(args) -> int:
    log_y = None if args.scale == "auto" else args.scale == "log"
    out = plots.plot_csv(args.csv, args.kind, args.out, log_y)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oarsmt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a dataset of instances and optimal targets")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--terminals", dest="terminal_counts", type=int, nargs="+")
    p.add_argument("--count", type=int)
    p.add_argument("--wall-removals", dest="wall_removals", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("instance")
    p.add_argument("--solver", required=True, choices=bench.SOLVER_NAMES)
    p.add_argument("--weights")
    p.add_argument("--image", help="write the solution as a PGM")
    _add_tc_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train the network")
    p.add_argument("--config")
    p.add_argument("--train", dest="train_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rb-activation", dest="rb_activation", choices=("none", "relu"))
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="run solvers over a dataset")
    p.add_argument("dataset")
    p.add_argument("--solvers", nargs="+", default=["dreyfus", "kou", "mehlhorn"], choices=bench.SOLVER_NAMES)
    p.add_argument("--weights")
    p.add_argument("--out", required=True, help="CSV of per-instance records")
    p.add_argument("--table-out")
    _add_tc_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("iterations", help="iterations used by the network per terminal count")
    p.add_argument("dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    _add_tc_flags(p)
    p.set_defaults(func=cmd_iterations)

    p = sub.add_parser("sections", help="time one nine-layer pass against the number of strips")
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--max-sections", dest="max_sections", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sections)

    p = sub.add_parser("plot", help="render a CSV as an SVG chart")
    p.add_argument("csv")
    p.add_argument("--kind", required=True, choices=sorted(plots.REQUIRED))
    p.add_argument("--out", required=True)
    p.add_argument("--scale", choices=("auto", "log", "linear"), default="auto")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"oarsmt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as exc:
        print(f"oarsmt: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OarsmtError, ValueError, OSError) as exc:
        print(f"oarsmt: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
