"""``ambsec`` command line.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .numerics import SingularMatrixError
from .rate import write_rate_csv
from .security import write_bound_csv

log = logging.getLogger("ambsec")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _load_config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    for item in getattr(args, "model", None) or []:
        name, _, path = item.partition("=")
        if not path:
            raise ex.ConfigError(f"--model expects NAME=PATH, got {item!r}")
        cfg.models[name] = path
    cfg.validate()
    return cfg


def _out(args, cfg: ex.ExperimentConfig, default: str) -> Path:
    return Path(args.out or cfg.output or default)


def cmd_gen_dataset(args, cfg):
    count = args.count if args.count is not None else cfg.dataset.count
    mode = args.mode or cfg.dataset.mode
    out = ex.gen_dataset(cfg, count, mode, _out(args, cfg, f"dataset_{mode}.bin"), workers=args.workers)
    log.info("wrote %d records to %s", count, out)


def cmd_ber_sweep(args, cfg):
    rows = ex.run_ber_sweep(cfg, workers=args.workers)
    out = _out(args, cfg, "ber.csv")
    ex.write_ber_csv(rows, out, cfg.header())
    log.info("wrote %d BER rows to %s", len(rows), out)


def cmd_rate_sweep(args, cfg):
    rows = ex.run_rate_sweep(cfg)
    write_rate_csv(rows, _out(args, cfg, "rate.csv"), cfg.header())


def cmd_train(args, cfg):
    out = _out(args, cfg, "model.ambnn")
    history = Path(args.history) if args.history else out.with_suffix(".history.csv")
    _, hist = ex.run_train(cfg, args.dataset, out, history)
    log.info("trained %d epochs, final accuracy %.4f", len(hist), hist[-1].accuracy if hist else float("nan"))


def cmd_meta_train(args, cfg):
    tasks = {}
    for item in args.task:
        task_id, _, path = item.partition("=")
        if not path:
            raise ex.ConfigError(f"--task expects ID=PATH, got {item!r}")
        tasks[task_id] = path
    out = _out(args, cfg, "meta.ambnn")
    history = Path(args.history) if args.history else out.with_suffix(".episodes.csv")
    tuned_out = Path(args.fine_tuned_out) if args.fine_tuned_out else out.with_suffix(".tuned.ambnn")
    ex.run_meta_train(cfg, tasks, out, history,
                      fine_tune_dataset=args.fine_tune_dataset,
                      fine_tuned_out=tuned_out if args.fine_tune_dataset else None)


def cmd_guess_entropy(args, cfg):
    write_bound_csv(ex.run_guess_entropy(cfg), _out(args, cfg, "guess.csv"), cfg.header())


def cmd_e2e_demo(args, cfg):
    report = ex.run_e2e_demo(cfg, alpha_dt_db=args.alpha_dt_db)
    ex.write_json(report, _out(args, cfg, "e2e.json"))
    log.info("message bit errors: %d", report["message_bit_errors"])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--trials", type=int, help="override the trial count")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ambsec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", parents=[common], help="write a labelled feature dataset")
    p.add_argument("--count", type=int)
    p.add_argument("--mode", choices=sorted(ex.DATASET_MODES))
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("ber-sweep", parents=[common], help="Monte-Carlo BER per detector and grid point")
    p.add_argument("--model", action="append", metavar="NAME=PATH", help="e.g. dl-pcsi=model.ambnn")
    p.set_defaults(func=cmd_ber_sweep)

    p = sub.add_parser("rate-sweep", parents=[common], help="maximum achievable backscatter rate")
    p.set_defaults(func=cmd_rate_sweep)

    p = sub.add_parser("train", parents=[common], help="train the neural detector")
    p.add_argument("--dataset", required=True)
    p.add_argument("--history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("meta-train", parents=[common], help="Reptile meta-training over task datasets")
    p.add_argument("--task", action="append", required=True, metavar="ID=PATH")
    p.add_argument("--fine-tune-dataset")
    p.add_argument("--fine-tuned-out")
    p.add_argument("--history")
    p.set_defaults(func=cmd_meta_train)

    p = sub.add_parser("guess-entropy", parents=[common], help="guessing-entropy bound vs splitting ratio")
    p.set_defaults(func=cmd_guess_entropy)

    p = sub.add_parser("e2e-demo", parents=[common], help="split, transmit, detect and merge one message")
    p.add_argument("--model", action="append", metavar="NAME=PATH")
    p.add_argument("--alpha-dt-db", type=float)
    p.set_defaults(func=cmd_e2e_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        args.func(args, cfg)
    except ex.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SingularMatrixError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
