import argparse
import asyncio
import json
import logging
import sys

import attr

from . import MarineFlowException, PolicyName, RunMode
from .harness import PRESETS, load_config, run_eval, run_gradcheck, run_rollout, run_train
from .utils import _log_exception

PACKAGE_LOGGER = "marine.flow"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# pylint: disable=invalid-name


def density(x):
    ao, _, so = x.partition("/")
    return (int(ao), int(so))


parser = argparse.ArgumentParser(description="Flow-disturbed vessel navigation lab.")
parser.add_argument("--verbose", action="store_true")

subparsers = parser.add_subparsers(dest="subcommand")


def _add_common(sub):
    sub.add_argument("--config")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--episodes", type=int)
    sub.add_argument("--policy", choices=[p.value for p in PolicyName])
    sub.add_argument("--preset", choices=sorted(PRESETS))
    sub.add_argument("--out")
    sub.add_argument("--checkpoint")
    sub.add_argument("--workers", type=int)
    sub.add_argument("--sweep", nargs="+", type=density, metavar="AO/SO")
    for name in ("flow-input", "alignment", "r-ao", "r-so", "r-cf"):
        sub.add_argument("--disable-{}".format(name), action="store_true")
    return sub


parser_train = _add_common(subparsers.add_parser("train"))
parser_train.add_argument("--updates", type=int)
_add_common(subparsers.add_parser("eval"))
_add_common(subparsers.add_parser("rollout"))
_add_common(subparsers.add_parser("gradcheck"))


def build_config(args):
    config = load_config(args.config)
    if args.preset is not None:
        config = config.with_preset(args.preset)
    overrides = {
        "mode": RunMode(args.subcommand),
        "seed": args.seed,
        "episodes": args.episodes,
        "policy": args.policy,
        "out_dir": args.out,
        "checkpoint": args.checkpoint,
        "workers": args.workers,
        "sweep": args.sweep,
        "updates": getattr(args, "updates", None),
    }
    if args.seed is not None:
        # an explicit base seed replaces any seed list from the config file
        config = attr.evolve(config, run=attr.evolve(config.run, seeds=None))
    for name in ("flow_input", "alignment", "r_ao", "r_so", "r_cf"):
        if getattr(args, "disable_" + name):
            overrides["disable_" + name] = True
    return config.with_run(**overrides)


async def run_train_command(config):
    result = await run_train(config)
    print(
        json.dumps(
            {
                "checkpoint": str(result.checkpoint) if result.checkpoint else None,
                "best_success_rate": result.best_success_rate,
                "env_steps": result.env_steps,
            },
            indent=2,
        )
    )


async def run_eval_command(config):
    summary = await run_eval(config)
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))


async def run_rollout_command(config):
    records = await run_rollout(config)
    for record in records:
        print(record.seed, record.outcome.value, record.steps, "{:.2f}".format(record.path_length))


async def run_gradcheck_command(config):
    print("max relative error: {:.3e}".format(run_gradcheck(config)))


def setup_logging(verbose: bool) -> logging.Logger:
    """Route package records to stderr, progress at INFO and everything with --verbose."""
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not logger.handlers:
        channel = logging.StreamHandler(sys.stderr)
        channel.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(channel)
    return logger


COMMANDS = {
    "train": run_train_command,
    "eval": run_eval_command,
    "rollout": run_rollout_command,
    "gradcheck": run_gradcheck_command,
}


def main():
    args = parser.parse_args()

    setup_logging(args.verbose)

    if args.subcommand not in COMMANDS:
        parser.print_help()
        sys.exit(2)

    try:
        config = build_config(args)
        asyncio.run(COMMANDS[args.subcommand](config))
    except MarineFlowException as exception:
        _log_exception("%s failed: %s", args.subcommand, exception)
        sys.exit(1)


if __name__ == "__main__":
    main()
