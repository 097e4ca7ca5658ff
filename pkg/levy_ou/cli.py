"""Command-line entry point: ``levy-ou <command> [--config FILE] [--key value ...]``.

Every config key can be given as a flag (``--jump-rate 5``, ``--drift
"[0, -1, 1, 0]"``); flag values are parsed as YAML scalars or flow lists and
override the config file. Exit codes: 0 when every evaluated criterion
passes, 1 on a criterion failure, 2 on a usage or config error.
"""

import argparse
import logging
import sys

import yaml

from . import PACKAGE_VERSION
from .errors import ConfigError
from .harness import load_config, run
from .serializers import COMMANDS, ExperimentConfigSerializer

logger = logging.getLogger("levy_ou")

EXIT_PASS = 0
EXIT_CRITERION_FAILED = 1
EXIT_USAGE = 2

# Keys with dedicated flags.
_DEDICATED = {"command", "seed", "output_dir"}


def _yaml_value(text):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}: {e}") from e


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (flat mapping)")
    common.add_argument("--seed", type=int, help="Master seed")
    common.add_argument("--out", dest="output_dir", help="Output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    fields = ExperimentConfigSerializer().fields
    for key, fld in fields.items():
        if key in _DEDICATED:
            continue
        common.add_argument(
            "--" + key.replace("_", "-"), dest=key, type=_yaml_value, help=fld.help_text
        )

    parser = argparse.ArgumentParser(
        prog="levy-ou",
        description="Levy-driven Ornstein-Uhlenbeck experiments: simulation, measure "
        "change and drift identification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {PACKAGE_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for command in COMMANDS:
        sub.add_parser(command, parents=[common], help=f"run the {command} experiment")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_PASS

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    keys = set(ExperimentConfigSerializer().fields)
    overrides = {k: v for k, v in vars(args).items() if k in keys}

    try:
        config = load_config(args.config, overrides)
        manifest = run(config)
    except ConfigError as e:
        logger.error(f"[LevyOU][main] invalid config: {e}")
        return EXIT_USAGE
    except Exception as e:
        # already logged with traceback by run()
        logger.error(f"[LevyOU][main] {args.command} aborted: {e}")
        return EXIT_USAGE

    for name, passed in manifest.criteria.items():
        if passed is not None:
            print(f"{name}: {'PASS' if passed else 'FAIL'}")
    print(f"results: {config['output_dir']} (config {manifest.config_hash[:12]})")
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
