"""Command line: cascade fit|sample|simulate-missing|evaluate|transport-report."""
from __future__ import annotations

import os

# Thread count for the numeric libraries must be fixed before numpy loads.
_threads = os.environ.get("CASCADEFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

from .errors import CascadeError  # noqa: E402

EXIT_OK, EXIT_INTERNAL, EXIT_USER = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--preset", default="desk", help="named defaults: desk or full")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field, e.g. training.steps=500 (repeatable)")
    common.add_argument("--seed", type=int, help="seed for this command")
    common.add_argument("--out", help="output directory (or CSV path for sample)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cascade", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit encoders and both generators")
    f.add_argument("--data", help="training CSV")
    f.add_argument("--schema", help="schema JSON")

    s = sub.add_parser("sample", parents=[common], help="draw synthetic rows from a bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("-n", "--n", type=int, help="number of rows")
    s.add_argument("--steps", type=int, help="ODE steps per model")

    m = sub.add_parser("simulate-missing", parents=[common], help="mask numerical cells not at random")
    m.add_argument("--data")
    m.add_argument("--schema")
    m.add_argument("--p", type=float, help="target stage-1 missing rate")

    e = sub.add_parser("evaluate", parents=[common], help="score synthetic rows against real ones")
    e.add_argument("--train", required=True)
    e.add_argument("--test")
    e.add_argument("--synth", required=True)
    e.add_argument("--schema", required=True)

    t = sub.add_parser("transport-report", parents=[common], help="coupling transport costs of a bundle")
    t.add_argument("--bundle", required=True)
    t.add_argument("--data", help="data CSV (defaults to the one the bundle was fitted on)")
    t.add_argument("--schema")
    t.add_argument("--n-mc", type=int, help="Monte-Carlo draws per feature")
    return p


def _config(args):
    from .config import load_config

    extra = []
    if getattr(args, "data", None):
        extra.append(f"paths.data={args.data}")
    if getattr(args, "schema", None):
        extra.append(f"paths.schema={args.schema}")
    if args.out and args.command != "sample":
        extra.append(f"paths.out={args.out}")
    cfg = load_config(args.config, args.preset, list(args.overrides) + extra)
    if args.seed is not None:
        cfg.training.seed = cfg.sampling.seed = cfg.mnar.seed = args.seed
    if args.command == "sample":
        if args.n is not None:
            cfg.sampling.n = args.n
        if args.steps is not None:
            cfg.sampling.steps = args.steps
    if args.command == "simulate-missing" and args.p is not None:
        cfg.mnar.p = args.p
    if args.command == "transport-report" and args.n_mc is not None:
        cfg.metrics.n_mc = args.n_mc
    return cfg


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import pipeline

    cfg = _config(args)
    if args.command == "fit":
        Path(cfg.paths.out).mkdir(parents=True, exist_ok=True)
        cfg.save(Path(cfg.paths.out) / "config.json")
        pipeline.cmd_fit(cfg)
        print(f"bundle written to {cfg.paths.out}")
    elif args.command == "sample":
        out = args.out or "synthetic.csv"
        pipeline.cmd_sample(args.bundle, cfg.sampling.n, cfg.sampling.steps, cfg.sampling.seed, out)
        print(f"{cfg.sampling.n} rows written to {out}")
    elif args.command == "simulate-missing":
        out = pipeline.cmd_simulate_missing(cfg)
        cfg.save(out / "config.json")
        print(f"masked data written to {out}")
    elif args.command == "evaluate":
        out = pipeline.cmd_evaluate(args.train, args.test, args.synth, args.schema, cfg,
                                    seed=args.seed if args.seed is not None else 0)
        cfg.save(out / "config.json")
        print(f"report written to {out / 'report.json'}")
    elif args.command == "transport-report":
        path = pipeline.cmd_transport_report(args.bundle, cfg, cfg.metrics.n_mc,
                                             args.seed if args.seed is not None else 0)
        cfg.save(path.parent / "config.json")
        print(f"transport report written to {path}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except CascadeError as e:
        print(f"cascade: error: {e}", file=sys.stderr)
        return EXIT_USER
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"cascade: error: {e}", file=sys.stderr)
        return EXIT_USER
    except SystemExit as e:  # argparse usage errors
        return EXIT_USER if e.code not in (0, None) else EXIT_OK
    except Exception as e:  # noqa: BLE001
        logging.getLogger(__name__).exception("internal error")
        print(f"cascade: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
