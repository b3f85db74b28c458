"""Command-line front end: ``parabiss run|sweep|oracles|check-smallgain``.

Exit codes: 0 every check passed, 2 a check failed, 3 the simulation blew
up, 1 usage or configuration error. Reports go to stdout as JSON; wall
time goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import comparison as cf
from . import examples as ex
from .comparison import ComparisonClassError
from .experiment import (
    EXAMPLES,
    EXIT_BLOWUP,
    EXIT_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    ExperimentConfig,
    jsonable,
    parse_sweep,
    run,
    run_sweep,
)
from .oracles import run_suite


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 is reserved for failed checks."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="parabiss", description="Stability certificates for coupled parabolic PDEs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one experiment from a TOML config")
    r.add_argument("config")
    r.add_argument("--output-dir", help="override output_dir from the config")

    s = sub.add_parser("sweep", help="repeat an experiment over a parameter range")
    s.add_argument("config")
    s.add_argument("--param", required=True, metavar="NAME=LO:HI:COUNT")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--output-dir", help="override output_dir from the config")

    o = sub.add_parser("oracles", help="run the randomized inequality suite")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--N", type=int, default=256)

    c = sub.add_parser("check-smallgain", help="test the small-gain condition only")
    c.add_argument("config")
    return p


def _load(path, output_dir=None):
    config = ExperimentConfig.from_toml(path)
    if output_dir is not None:
        config = config.replace(output_dir=output_dir)
    return config


def _cmd_run(args):
    report = run(_load(args.config, args.output_dir))
    print(report.to_json())
    return report.exit_code


def _cmd_sweep(args):
    config = _load(args.config, args.output_dir)
    name, values = parse_sweep(args.param)
    results = run_sweep(config, name, values, workers=args.workers)
    summary = [{name: v, "status": r.status, "norm_ratio": r.norm_ratio} for v, r in results]
    print(json.dumps(jsonable(summary), indent=2, sort_keys=True))
    codes = {r.exit_code for _, r in results}
    if EXIT_BLOWUP in codes:
        return EXIT_BLOWUP
    return EXIT_FAILED if EXIT_FAILED in codes else EXIT_OK


def _cmd_oracles(args):
    rows, _ = run_suite(seed=args.seed, N=args.N)
    print(json.dumps(jsonable([r.to_dict() for r in rows]), indent=2, sort_keys=True))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAILED


def _cmd_check_smallgain(args):
    config = _load(args.config)
    if config.experiment not in EXAMPLES:
        raise ConfigError("check-smallgain needs experiment = example1 or example2")
    example = EXAMPLES[config.experiment]
    a, b = config.params["a"], config.params["b"]
    omega = config.params.get("omega", ex.default_omega(a, b))
    c_sg = config.params.get("c_sg", ex.default_c_sg(b, omega))
    out = {"a": a, "b": b, "omega": omega, "c_sg": c_sg,
           "exists_c": ex.small_gain_exists(example, a, b, omega),
           "closed_form": ex.closed_form_criterion(a, b, omega)}
    try:
        sg = cf.check_small_gain(ex.gain_chain(example, a, b, omega, c_sg), cf.log_grid())
        out.update(sg.to_dict())
    except ComparisonClassError as exc:
        out.update(holds=False, reason=str(exc))
    print(json.dumps(jsonable(out), indent=2, sort_keys=True))
    return EXIT_OK if out["holds"] else EXIT_FAILED


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "oracles": _cmd_oracles,
    "check-smallgain": _cmd_check_smallgain,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    start = time.perf_counter()
    try:
        code = _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"parabiss: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"parabiss: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wall time {time.perf_counter() - start:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
