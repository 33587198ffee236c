"""Command-line entry point.

Subcommands: generate, train, eval, sweep; each takes --config, --seed, --out.
Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, load_config
from .harness import cmd_eval, cmd_generate, cmd_sweep, cmd_train
from .mobility import TraceFormatError
from .nn import CheckpointFormatError
from .predictors import EkfDivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamalign",
        description="mmWave beam-alignment simulator: datasets, training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file (dotted-key text)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="synthesize train/eval channel traces")
    common(p)

    p = sub.add_parser("train", help="train the configured predictor variant")
    common(p)
    p.add_argument("--traces", required=True, help="directory with train_*.btrc")
    p.add_argument("--resume", help="checkpoint to continue training from")

    p = sub.add_parser("eval", help="evaluate predictors on eval traces")
    common(p)
    p.add_argument("--traces", required=True, help="directory with eval_*.btrc")
    p.add_argument("--checkpoint", help=".bmdl file or directory of checkpoints")

    p = sub.add_parser("sweep", help="evaluate across the velocity list")
    common(p)
    p.add_argument("--checkpoint", help=".bmdl file or directory of checkpoints")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if args.command == "generate":
            cmd_generate(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.traces, args.out, resume=args.resume)
        elif args.command == "eval":
            cmd_eval(cfg, args.checkpoint, args.traces, args.out)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.checkpoint, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceFormatError, CheckpointFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EkfDivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
