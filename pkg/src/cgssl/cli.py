"""Command line interface: ``cgssl {fit,simulate,benchmark,preprocess,report}``.

Exit status is 0 on success, 1 for usage or input errors and 2 when a solver
fails numerically.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .ecm import ecm_fit
from .errors import NumericalError
from .model import Dataset
from .path import dcpe, dpe
from .preprocess import logit_transform
from .sim import (BenchmarkConfig, OmegaPattern, PATTERNS, format_report, gen_dataset,
                  gen_omega, gen_psi, run_benchmark)

EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fit_summary(cfg, fit, data, method, grid=None):
    doc = {
        "schema_version": io.SCHEMA_VERSION,
        "method": method,
        "config": cfg.to_dict(),
        "dims": {"n": data.n, "p": data.p, "q": data.q},
        "theta": fit.params.theta,
        "eta": fit.params.eta,
        "ecm_iterations": fit.ecm_iterations,
        "converged": fit.converged,
        "guardrail_triggered": fit.guardrail_triggered,
        "log_posterior_trace": fit.log_posterior_trace,
        "support_psi": sorted(list(s) for s in fit.support_psi),
        "support_omega": sorted(list(s) for s in fit.support_omega),
    }
    if grid is not None:
        doc["grid"] = [[{"lambda0": cfg.lambda0_ladder[s], "xi0": cfg.xi0_ladder[t],
                         "guardrail_triggered": cell.guardrail_triggered,
                         "warm_start_from": None if cell.warm_start_from is None
                         else list(cell.warm_start_from),
                         "n_psi": len(cell.support_psi), "n_omega": len(cell.support_omega)}
                        for t, cell in enumerate(row)] for s, row in enumerate(grid)]
    return doc


def cmd_fit(args) -> int:
    X, x_names = io.read_matrix_csv(args.x, with_header=True)
    Y, y_names = io.read_matrix_csv(args.y, with_header=True)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} rows")
    cfg = io.RunConfig.parse(Path(args.config).read_text()) if args.config else io.RunConfig()
    if args.method:
        cfg = io.RunConfig.from_dict({**cfg.to_dict(), "method": args.method})
    data = Dataset.from_raw(X, Y)
    cfg = cfg.resolve(data.n, data.p, data.q)
    grid = None
    if cfg.method == "dpe":
        grid, fit = dpe(data, cfg.ladders(), cfg.ssl_config(), cfg.ecm_options())
    elif cfg.method == "dcpe":
        fit = dcpe(data, cfg.ladders(), cfg.ssl_config(), cfg.ecm_options())
    else:
        single = replace(cfg.ssl_config(), lambda0=cfg.lambda0_ladder[-1], xi0=cfg.xi0_ladder[-1])
        fit = ecm_fit(data, single, None, cfg.ecm_options())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix_csv(out / "Psi.csv", fit.params.Psi, y_names)
    io.write_matrix_csv(out / "Omega.csv", fit.params.Omega, y_names)
    io.write_json(out / "summary.json", _fit_summary(cfg, fit, data, cfg.method, grid))
    print(f"wrote {out / 'Psi.csv'}, {out / 'Omega.csv'}, {out / 'summary.json'}")
    return 0


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    omega0 = gen_omega(OmegaPattern(args.pattern, args.q))
    psi0 = gen_psi(args.p, args.q, args.density, rng)
    data, raw_X = gen_dataset(psi0, omega0, args.n, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ynames = [f"Y{k + 1}" for k in range(args.q)]
    io.write_matrix_csv(out / "X.csv", raw_X, [f"X{j + 1}" for j in range(args.p)])
    io.write_matrix_csv(out / "Y.csv", data.Y, ynames)
    io.write_matrix_csv(out / "Psi0.csv", psi0, ynames)
    io.write_matrix_csv(out / "Omega0.csv", omega0, ynames)
    print(f"wrote X.csv, Y.csv, Psi0.csv, Omega0.csv to {out}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = BenchmarkConfig(args.n, args.p, args.q, args.pattern, args.replicates,
                          args.method, args.seed, args.density)
    result = run_benchmark(cfg, args.workers)
    io.write_json(args.out, {"schema_version": io.SCHEMA_VERSION, **result})
    sys.stdout.write(format_report(result))
    return 0


def cmd_preprocess(args) -> int:
    counts, names = io.read_matrix_csv(args.counts, with_header=True)
    focal = None
    if args.focal:
        lookup = {name: j for j, name in enumerate(names)}
        missing = [f for f in args.focal if f not in lookup]
        if missing:
            raise ValueError(f"unknown focal columns: {', '.join(missing)}")
        focal = [lookup[f] for f in args.focal]
    Y, idx = logit_transform(counts, focal, args.min_rel_abundance, args.min_samples)
    io.write_matrix_csv(args.out, Y, [names[j] for j in idx])
    print(f"wrote {Y.shape[1]} log-ratio columns to {args.out}")
    return 0


def cmd_report(args) -> int:
    text = format_report(io.read_json(args.results))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cgssl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a chain graph model to X/Y CSV files")
    p.add_argument("--x", required=True, help="predictor CSV (raw scale, header row)")
    p.add_argument("--y", required=True, help="response CSV (header row)")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--method", choices=("dpe", "dcpe", "single"))
    p.add_argument("--out", default="fit_out", help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_design_args(p)
    p.add_argument("--out", default="sim_out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="support-recovery benchmark over replicates")
    _add_design_args(p)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--method", choices=("dpe", "dcpe"), default="dpe")
    p.add_argument("--workers", type=int, help="worker processes (default: CGSSL_THREADS or cores)")
    p.add_argument("--out", default="benchmark.json", help="results file")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("preprocess", help="counts CSV to log-ratio responses")
    p.add_argument("--counts", required=True)
    p.add_argument("--focal", nargs="+", help="focal column names (default: abundance filter)")
    p.add_argument("--min-rel-abundance", type=float, default=0.005)
    p.add_argument("--min-samples", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("report", help="render a benchmark results file as a table")
    p.add_argument("results")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def _add_design_args(p):
    p.add_argument("--pattern", choices=PATTERNS, default="ar1")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--q", type=int, default=10)
    p.add_argument("--density", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"cgssl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, IndexError, OSError) as exc:
        print(f"cgssl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
