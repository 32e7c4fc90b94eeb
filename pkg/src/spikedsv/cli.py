"""Command line front end.

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 IO failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .config import load_allelic, load_config
from .criterion import CRITERION_MAX_DIM, criterion_check
from .ensembles import genetics_model, genetics_predictions, pi_moments_spectral
from .errors import ModelError, NumericalError
from .model import sample_noise, validate_model
from .predictor import predict
from .simharness import RunSpec, export, normalized_targets, run_ensemble

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _print_prediction(pred, out=None):
    out = out or sys.stdout
    print(f"{'r':>3} {'sqrt(rho)':>14} {'m':>10} {'center':>14} {'gamma':>12}", file=out)
    for r in range(pred.K):
        print(f"{r + 1:>3} {pred.sqrt_rho[r]:14.6f} {pred.m[r]:10.6f} {pred.center[r]:14.6f} {pred.gamma[r]:12.6g}", file=out)


def _print_summary(summary, out=None):
    out = out or sys.stdout
    pred = summary.prediction
    print(f"replicates={summary.samples.shape[0]} M={summary.M} N={summary.N} seed={summary.seed}", file=out)
    print(f"{'r':>3} {'center':>12} {'emp_mean':>12} {'pred_var':>10} {'emp_var':>10} {'KS':>8}", file=out)
    for r in range(summary.K):
        print(
            f"{r + 1:>3} {pred.center[r]:12.5f} {summary.emp_mean[r]:12.5f} {summary.pred_var[r]:10.5f} "
            f"{summary.emp_var[r]:10.5f} {summary.ks[r]:8.4f}",
            file=out,
        )
    if summary.weyl_checked:
        print(f"perturbation bound checked on {summary.weyl_checked} replicates, violations: {summary.weyl_violations}", file=out)


def cmd_predict(args):
    loaded = load_config(args.config)
    report = validate_model(loaded.model)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    pred = predict(loaded.model)
    _print_prediction(pred)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(pred.to_json(indent=2))
    return EXIT_OK


def cmd_simulate(args):
    loaded = load_config(args.config)
    validate_model(loaded.model)
    collect = {"lambda", "Z", "epsilon"}
    if args.normalized:
        collect.add("normalized_Lambda")
    spec = RunSpec(loaded.model, args.replicates, args.seed, threads=args.threads, collect=frozenset(collect))
    t0 = time.perf_counter()
    summary = run_ensemble(spec)
    elapsed = time.perf_counter() - t0
    _print_summary(summary)
    print(f"elapsed {elapsed:.1f}s")
    if args.out:
        export(summary, args.out)
    return EXIT_OK


def cmd_criterion(args):
    loaded = load_config(args.config)
    model = loaded.model
    if min(model.M, model.N) > CRITERION_MAX_DIM:
        raise ModelError(f"criterion-check is limited to min(M, N) <= {CRITERION_MAX_DIM}")
    C = sample_noise(model, args.seed).values
    rows = criterion_check(C, model.F, model.G, rtol=args.rtol)
    print(f"{'r':>3} {'lambda_r':>14} {'|det| root':>12} {'|det| -5%':>12} {'|det| +5%':>12}  result")
    for row in rows:
        print(
            f"{row.r:>3} {row.lam:14.6f} {abs(row.det_root):12.3e} {abs(row.det_below):12.3e} "
            f"{abs(row.det_above):12.3e}  {'pass' if row.passed else 'FAIL'}"
        )
    return EXIT_OK if all(r.passed for r in rows) else EXIT_NUMERICAL


def cmd_genetics(args):
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    allelic = load_allelic(sizes, markers=args.markers, spectrum=args.spectrum, p_seed=args.p_seed, p_csv=args.p_csv)
    model = genetics_model(allelic)
    validate_model(model)
    spectral = pi_moments_spectral(args.spectrum, K=allelic.K) if args.spectral_moments else None
    gen = genetics_predictions(allelic, spectral)
    finite = predict(model)
    gen.extra["finite_size"] = finite.to_dict()
    print(f"M={allelic.M} N={allelic.N} c={allelic.M / allelic.N:.6g} moments={'empirical' if spectral is None else 'spectral'}")
    _print_prediction(finite)
    print("limit shift m:", np.array2string(gen.m, precision=6))
    print("limit covariance:\n" + np.array2string(gen.cov, precision=6))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "genetics_prediction.json"), "w") as fh:
            fh.write(gen.to_json(indent=2))
    if args.replicates:
        spec = RunSpec(
            model, args.replicates, args.seed, threads=args.threads,
            collect=frozenset({"lambda", "Z", "epsilon", "normalized_Lambda"}),
        )
        summary = run_ensemble(spec, prediction=finite)
        summary.extra_prediction = gen.to_dict()
        _print_summary(summary)
        center, var = normalized_targets(summary)
        print("normalized squares: center", np.array2string(center, precision=4),
              "empirical", np.array2string(summary.Lambda.mean(axis=0), precision=4))
        if args.out:
            export(summary, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spikedsv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="theoretical quantities only")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="seeded Monte Carlo")
    p.add_argument("--config", required=True)
    p.add_argument("--replicates", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--normalized", action="store_true", help="also collect normalized squared singular values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("criterion-check", help="determinant oracle on one noise draw")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.set_defaults(func=cmd_criterion)

    p = sub.add_parser("genetics", help="genotype-array pipeline")
    p.add_argument("--p-csv", help="markers x K CSV of allele probabilities")
    p.add_argument("--sizes", required=True, help="comma-separated subpopulation sizes")
    p.add_argument("--markers", type=int)
    p.add_argument("--spectrum", default="u-squared", choices=["u-squared", "uniform"])
    p.add_argument("--p-seed", type=int, default=0)
    p.add_argument("--spectral-moments", action="store_true", help="use spectrum moments instead of empirical ones")
    p.add_argument("--replicates", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_genetics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
