"""Command line: simulate | sweep | verify | compare."""
import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .experiments import cmd_compare, cmd_simulate, cmd_sweep
from .verify import cmd_verify

log = logging.getLogger("porous_obstacle")


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="TOML experiment file")
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, help="override monte_carlo.seed")
    p.add_argument("--paths", type=int, help="override monte_carlo.paths")


def build_parser():
    ap = argparse.ArgumentParser(prog="porous-obstacle", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="run the ensemble for every (eps, n_reg) leg"))
    _common(sub.add_parser("sweep", help="sweep one parameter and fit log-log orders"))
    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("--inject-fault", action="store_true",
                   help="flip the penalty sign in a test double; the suite must then fail")
    c = sub.add_parser("compare", help="pathwise comparison in eps or L1 contraction in xi")
    _common(c)
    c.add_argument("--mode", choices=("eps", "xi"))
    c.add_argument("--eps1", type=float)
    c.add_argument("--eps2", type=float)
    c.add_argument("--xi-perturbation", type=float)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        _, code = cmd_verify(args.inject_fault, sys.stdout)
        return code
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = ExperimentConfig.load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    kw = dict(out_dir=args.out, workers=args.workers, paths=args.paths, seed=args.seed)
    try:
        if args.command == "simulate":
            res = cmd_simulate(cfg, **kw)
            print(f"wrote {res['records']}")
            return 1 if res["failures"] else 0
        if args.command == "sweep":
            res = cmd_sweep(cfg, **kw)
            print(res["text"])
            return 0
        res = cmd_compare(cfg, mode=args.mode, eps1=args.eps1, eps2=args.eps2,
                          perturbation=args.xi_perturbation, **kw)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{res['mode']} comparison over {len(res['items'])} paths: "
          f"min(u1 - u2) = {res['min_diff']:.3e}, min(u2) = {res['min_second']:.3e}, "
          f"sup_t E||u1-u2||_1 / E||u1-u2||_1(0) = {res['ratio']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
