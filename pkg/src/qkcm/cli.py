"""Command line entry point: ``qkcm run | verify | compare``.

Exit codes: 0 success, 1 usage or config error, 2 verification failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .analysis import compare_models
from .config import MODELS, build_config, read_config_file
from .errors import ConfigError, NotConvergedError, NumericalError, OracleCapError, QKCMError

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_args(p):
    p.add_argument("--config", help="key = value file (or a previous manifest.json)")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--constraint", choices=("unconstrained", "east", "fa"), help="quantum_kcm constraint")
    p.add_argument("--n", type=int, dest="n_sites")
    p.add_argument("--kappa-ratio", type=float, dest="kappa_ratio", help="kappa/(1-kappa)")
    p.add_argument("--x", type=float, help="omega_p/omega_c (rydberg models)")
    p.add_argument("--theta", help="rotation angle, e.g. pi/2 (quantum_kcm)")
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--boundary", choices=("open", "periodic"))
    p.add_argument("--initial-state", dest="initial_state", help="all_up, all_down, product_s or a bitstring")
    p.add_argument("--tmax", type=float, dest="t_max")
    p.add_argument("--tmin", type=float, dest="t_min", help="first nonzero time of a log grid")
    p.add_argument("--time-grid", choices=("log", "linear"), dest="time_grid")
    p.add_argument("--points", type=int, dest="n_points")
    p.add_argument("--trajectories", type=int, dest="n_trajectories")
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--jobs", type=int, dest="n_jobs")
    p.add_argument("--oracle", choices=("on", "off"))
    p.add_argument("--omega-c", type=float, dest="omega_c")
    p.add_argument("--gamma", type=float)
    p.add_argument("--v", type=float)
    p.add_argument("--out", dest="output_path")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkcm", description="Dissipative quantum and classical constrained spin chains.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_run_args(sub.add_parser("run", help="simulate one configuration and write CSV series"))

    v = sub.add_parser("verify", help="run the oracle self-checks")
    v.add_argument("--level", choices=("fast", "full"), default="fast")

    c = sub.add_parser("compare", help="compare a classical and a quantum series")
    c.add_argument("classical")
    c.add_argument("quantum")
    c.add_argument("--vss-classical", type=float, help="stationary value (default: last sample)")
    c.add_argument("--vss-quantum", type=float, help="stationary value (default: last sample)")
    c.add_argument("--label", default="")
    return parser


_RUN_KEYS = ("model", "constraint", "n_sites", "kappa_ratio", "x", "theta", "lam", "boundary", "initial_state",
             "t_max", "t_min", "time_grid", "n_points", "n_trajectories", "master_seed", "n_jobs", "oracle",
             "omega_c", "gamma", "v", "output_path")


def _cmd_run(args) -> int:
    from .runner import run

    file_values = read_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _RUN_KEYS}
    cfg = build_config(file_values, overrides)
    out = run(cfg)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(args.level)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def _cmd_compare(args) -> int:
    from .runner import read_series

    try:
        c = read_series(args.classical)
        q = read_series(args.quantum)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(str(exc)) from None
    vc = c.values[-1] if args.vss_classical is None else args.vss_classical
    vq = q.values[-1] if args.vss_quantum is None else args.vss_quantum
    report = compare_models(c, q, vc, vq, args.label)
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"run": _cmd_run, "verify": _cmd_verify, "compare": _cmd_compare}[args.command]
    try:
        return handler(args)
    except (ConfigError, OracleCapError) as exc:
        print(f"qkcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, NotConvergedError) as exc:
        print(f"qkcm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QKCMError as exc:
        print(f"qkcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
