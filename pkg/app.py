"""
Command line entry point: generate targets, train single networks, run sweeps,
aggregate results and inspect geometries.

    python app.py inspect --family mps --n 12 --chi 64
    python app.py -v sweep --config experiment.json --out results
"""
import argparse
import logging
import sys
from dataclasses import replace

from config.app_config import APP_DESCRIPTION, APP_TITLE, HARNESS_CONFIG, LOSS_KINDS
from modules.errors import ConfigError, InvalidSpec, TNGeoError
from modules.geometry import Family, GeometrySpec, bond_dims, build, diameter, schmidt_bound, sizes
from modules.utils import configure_logging, table_to_csv

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so bad flags map to exit code 1."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_geometry_args(parser, chi_required=True):
    parser.add_argument("--family", required=True, choices=[f.value for f in Family])
    parser.add_argument("--n", type=int, required=True, help="number of sites")
    parser.add_argument("--chi", type=int, required=chi_required, help="bond dimension")
    parser.add_argument("--p", type=int, default=2, help="physical dimension")
    parser.add_argument("--k", type=int, default=1, help="beam length (star)")
    parser.add_argument("--rows", type=int, help="grid rows (peps)")
    parser.add_argument("--cols", type=int, help="grid columns (peps)")


def _spec(family, n, chi, p=2, k=1, rows=None, cols=None):
    try:
        return GeometrySpec(family, n, chi, p=p, k=k, rows=rows, cols=cols)
    except InvalidSpec as e:
        raise ConfigError(str(e)) from None


def build_parser():
    parser = ArgumentParser(prog="app.py", description=f"{APP_TITLE}. {APP_DESCRIPTION.strip()}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("generate", help="write a target state file")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--p", type=int, default=2)
    gen.add_argument("--target", choices=["random", "hidden"], default="random")
    gen.add_argument("--family", choices=[f.value for f in Family], help="hidden network geometry")
    gen.add_argument("--chi", type=int, help="hidden network bond dimension")
    gen.add_argument("--k", type=int, default=1)
    gen.add_argument("--rows", type=int)
    gen.add_argument("--cols", type=int)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    train = commands.add_parser("train", help="train a single network")
    _add_geometry_args(train, chi_required=False)
    train.add_argument("--target", choices=["random", "hidden", "file"], default="random")
    train.add_argument("--target-family", choices=[f.value for f in Family])
    train.add_argument("--target-chi", type=int)
    train.add_argument("--target-file")
    train.add_argument("--target-seed", type=int, default=0)
    train.add_argument("--seed", type=int, default=0, help="network initialisation seed")
    train.add_argument("--compact", action="store_true")
    train.add_argument("--loss", choices=LOSS_KINDS, default="log")
    train.add_argument("--max-iters", type=int)
    train.add_argument("--history", help="write the per-iteration history to this CSV")

    sweep = commands.add_parser("sweep", help="run an experiment file")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True, help="output prefix for .csv and .jsonl")
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--progress", action="store_true")

    rep = commands.add_parser("report", help="aggregate a sweep CSV")
    rep.add_argument("--input", required=True)
    rep.add_argument("--threshold", type=float, default=HARNESS_CONFIG["success_threshold"])
    rep.add_argument("--out", help="summary CSV")
    rep.add_argument("--jsonl", help="JSONL mirror of the sweep (for --curves)")
    rep.add_argument("--curves", help="best / median training curves CSV")

    insp = commands.add_parser("inspect", help="print geometry metrics")
    _add_geometry_args(insp)
    return parser


def run_generate(args):
    from modules.surrogate import generate_full_random, generate_hidden_tn, save_target

    if args.target == "hidden":
        if args.family is None or args.chi is None:
            raise ConfigError("a hidden target needs --family and --chi")
        spec = _spec(args.family, args.n, args.chi, args.p, args.k, args.rows, args.cols)
        target = generate_hidden_tn(spec, args.seed)
    else:
        target = generate_full_random(args.n, args.p, args.seed)
    save_target(target, args.out)
    print(f"wrote {target.scenario} target n={target.n} p={target.p} "
          f"chi_target={target.chi_target} to {args.out}")


def _train_target(args):
    from modules.surrogate import generate_full_random, generate_hidden_tn, load_target

    if args.target == "file":
        if not args.target_file:
            raise ConfigError("--target file needs --target-file")
        return load_target(args.target_file)
    if args.target == "hidden":
        if args.target_family is None or args.target_chi is None:
            raise ConfigError("a hidden target needs --target-family and --target-chi")
        spec = _spec(args.target_family, args.n, args.target_chi, args.p)
        return generate_hidden_tn(spec, args.target_seed)
    return generate_full_random(args.n, args.p, args.target_seed)


def run_train(args):
    from modules.optimizer import OptimConfig, run_trial, write_history_csv

    chi = args.chi if args.chi is not None else schmidt_bound(args.n, args.p)
    spec = _spec(args.family, args.n, chi, args.p, args.k, args.rows, args.cols)
    if args.compact and not spec.is_tree:
        raise ConfigError(f"{spec.label} has loops and cannot be compactified")
    cfg = OptimConfig() if args.max_iters is None else OptimConfig(max_iters=args.max_iters)
    target = _train_target(args)

    result = run_trial(target, spec, args.compact, args.seed, cfg, args.loss)
    print(f"geometry: {result.geometry}{' (compact)' if result.compact else ''}")
    print(f"n: {result.n}  chi: {result.chi}  seed: {result.seed}")
    print(f"final infidelity: {result.final_infidelity:.17g}")
    print(f"iterations: {result.iterations} ({result.converged.value})")
    print(f"largest tensor: {result.largest_tensor}  total elements: {result.total_elems}  "
          f"diameter: {result.diameter}")
    print(f"wall time: {result.wall_ms:.1f} ms")
    if result.message:
        print(f"note: {result.message}")
    if args.history:
        write_history_csv(result, args.history)
        logger.info("wrote history to %s", args.history)


def run_sweep(args):
    from modules.harness import load_config, sweep
    from modules.report import format_summary, report

    cfg = load_config(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = replace(cfg, workers=args.workers)
    table = sweep(cfg, progress=args.progress)
    table.write(args.out)
    print(format_summary(report(table, cfg.success_threshold)))
    print(f"wrote {len(table.rows)} rows to {args.out}.csv and {args.out}.jsonl")


def run_report(args):
    from modules.report import format_summary, load_sweep_csv, load_sweep_jsonl, report, training_curves

    if args.curves and not args.jsonl:
        raise ConfigError("--curves needs the --jsonl mirror of the sweep")
    summary = report(load_sweep_csv(args.input), args.threshold)
    print(format_summary(summary))
    if args.out:
        table_to_csv(summary, args.out)
        logger.info("wrote summary to %s", args.out)
    if args.curves:
        rows, histories = load_sweep_jsonl(args.jsonl)
        table_to_csv(training_curves(rows, histories), args.curves)
        logger.info("wrote training curves to %s", args.curves)


def run_inspect(args):
    from modules.compactify import compactify
    from modules.engine import plan

    spec = _spec(args.family, args.n, args.chi, args.p, args.k, args.rows, args.cols)
    net = build(spec, seed=0)
    largest, total = sizes(net)
    contraction = plan(net)
    print(f"geometry: {spec.label}  n: {spec.n}  chi: {spec.chi}  p: {spec.p}")
    print(f"nodes: {len(net.nodes)}  bonds: {len(net.bonds)}")
    print(f"bond dims: {' '.join(str(d) for d in bond_dims(net)) or '-'}")
    print(f"diameter: {diameter(net)}")
    print(f"largest tensor: {largest}")
    print(f"total elements: {total}")
    print(f"contraction peak: {contraction.peak_elems}  flops: {contraction.flops}")
    if spec.is_tree:
        compact = compactify(net, spec.chi)
        c_largest, c_total = sizes(compact)
        print(f"compacted: nodes {len(compact.nodes)}  largest tensor {c_largest}  "
              f"total elements {c_total}  diameter {diameter(compact)}")


COMMANDS = {
    "generate": run_generate,
    "train": run_train,
    "sweep": run_sweep,
    "report": run_report,
    "inspect": run_inspect,
}


def cli(argv=None) -> int:
    """
    Run one command.

    Returns:
        int: 0 on success, 1 on a configuration error, 2 on a runtime error
    """
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    configure_logging(args.verbose)
    try:
        COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (TNGeoError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
