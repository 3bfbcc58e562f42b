"""Command-line entry point ``mmtc-linksim``.

Exit status: 0 on success, 2 on a usage or configuration error, 1 on a
runtime failure.
"""
import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from ._validation import ParameterError
from .analysis import ALGORITHMS, diversity_order, diversity_steps, flop_count, sum_rate
from .harness import FIGURES, parse_config, run_experiment, warn_paper_scale


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser():
    p = _Parser(prog="mmtc-linksim", description="Link-level simulator for grant-free mMTC detection.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment and write CSV series")
    run.add_argument("--preset", choices=FIGURES, help="figure preset (overrides the config file)")
    run.add_argument("--config", help="key-value configuration file")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int, help="worker processes (default: MMTC_THREADS or CPU count)")
    run.add_argument("--paper-scale", action="store_true", help="N=128, M=64 and at least 1e5 trials")

    an = sub.add_parser("analyze", help="evaluate the analytic models")
    an.add_argument("what", choices=("flops", "diversity", "sumrate"))
    an.add_argument("--config", help="key-value configuration file")
    an.add_argument("--vartheta", default="", help="0/1 flags, e.g. 1,0,1,1,0 (diversity)")
    an.add_argument("--groups", type=int, default=0, help="group-list candidates G")
    an.add_argument("--samples", type=int, default=None, help="Monte Carlo samples per (K, c) (sumrate)")
    an.add_argument("--detector", default="imperfect", choices=("perfect", "imperfect", "imperfect-rls"))
    return p


def _run(args):
    cli = {"preset": args.preset, "seed": args.seed, "trials": args.trials, "out": args.out}
    spec = parse_config(args.config, cli=cli, paper_scale=args.paper_scale)
    if args.paper_scale:
        warn_paper_scale()
    series = run_experiment(spec, workers=args.workers)
    for s in series:
        print(f"{spec.figure}_{s.name}.csv: {len(s.x)} points")
    return 0


def _analyze(args):
    spec = parse_config(args.config)
    cfg = spec.system
    if args.what == "flops":
        th = _flags(args.vartheta, cfg.N) if args.vartheta else 0
        out = {a: flop_count(a, cfg.M, cfg.N, cfg.mod_order + 1, th, args.groups) for a in ALGORITHMS}
    elif args.what == "diversity":
        th = _flags(args.vartheta or "0", None)
        K = th.size
        out = {
            "order": diversity_order(cfg.M, K, th, cfg.mod_order, args.groups),
            "steps": [s.__dict__ for s in diversity_steps(cfg.M, K, th, cfg.mod_order)],
        }
    else:
        samples = args.samples or spec.trials
        rep = sum_rate(cfg, args.detector, mc_samples=samples, rng=spec.seed)
        out = {"rate": rep.rate, "K_max": rep.K_max, "mass": rep.mass, "mc_samples": rep.mc_samples}
    print(json.dumps(out, indent=2))
    return 0


def _flags(text, n):
    try:
        v = np.array([int(t) for t in text.replace(",", " ").split()], dtype=np.int64)
    except ValueError as exc:
        raise ParameterError(f"--vartheta: {exc}") from exc
    if n is not None and v.size not in (1, n):
        raise ParameterError(f"--vartheta needs 1 or {n} flags")
    return v if n is None or v.size == n else np.full(n, v[0])


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _run(args)
        return _analyze(args)
    except (_UsageError, ParameterError, FileNotFoundError) as exc:
        print(f"mmtc-linksim: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("mmtc-linksim: interrupted; finished points were written", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"mmtc-linksim: runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
