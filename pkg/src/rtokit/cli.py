"""Command-line entry points: generate-data, run, diagnose.

Exit codes: 0 on success, 2 for invalid configuration (with field-level
messages), 1 for runtime failures (tagged with the failing phase).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import diagnostics, experiment
from .config import ConfigError, load_config


def _cmd_generate_data(args) -> int:
    cfg = load_config(args.config)
    paths = experiment.generate_data(cfg)
    print(f"wrote {paths['data']}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = experiment.run_experiment(cfg)
    row = result.diagnostics_row
    print(
        f"method={row['method']} AP={row['AP']:.4f} minESS={row['minESS']:.1f} "
        f"offline={row['seconds_offline']:.2f}s online={row['seconds_online']:.2f}s"
    )
    for name, path in sorted(result.artifact_paths.items()):
        print(f"wrote {path}")
    return 0


def _cmd_diagnose(args) -> int:
    samples = experiment.read_samples_csv(args.samples)
    reference = experiment.read_samples_csv(args.reference)
    if args.config:
        cfg = load_config(args.config)
        bundle = experiment.build_bundle(cfg)
        samples = bundle.kappa_samples(samples)
        reference = bundle.kappa_samples(reference)
    report = diagnostics.error_metrics(samples, reference)
    ess_rep = diagnostics.ess_report(samples, seconds=np.nan)
    print(f"REM={report.rem:.6g}")
    print(f"REC={report.rec:.6g}")
    print(f"minESS={ess_rep.minimum:.1f} medESS={ess_rep.median:.1f} maxESS={ess_rep.maximum:.1f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtokit",
        description="Optimization-based MCMC for PDE-constrained Bayesian inversion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate-data", help="simulate observations for a config")
    p_gen.add_argument("config", help="path to a run configuration file")
    p_gen.set_defaults(func=_cmd_generate_data)

    p_run = sub.add_parser("run", help="run the configured sampler and write artifacts")
    p_run.add_argument("config", help="path to a run configuration file")
    p_run.set_defaults(func=_cmd_run)

    p_diag = sub.add_parser("diagnose", help="compare a sample file against a reference")
    p_diag.add_argument("samples", help="samples.csv produced by a run")
    p_diag.add_argument("reference", help="reference samples.csv")
    p_diag.add_argument(
        "--config",
        default="",
        help="optional config; when given, samples are mapped to natural parameters first",
    )
    p_diag.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for message in exc.errors:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except experiment.PhaseError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error [phase=unknown] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
