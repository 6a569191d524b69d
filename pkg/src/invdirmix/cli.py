"""Command-line workflow: generate synthetic data, fit, evaluate.

File contracts
--------------
Datasets are headerless CSV, one observation per row, decimal floating
point with 17 significant digits (bit-exact round trip).  Ground-truth
models and fitted estimates are JSON; fitted estimates carry the posterior
hyperparameters, iteration count, final objective value and wall-clock
runtime alongside the pruned weights and concentrations.

Exit codes: 0 success, 1 numerical failure during fitting, 2 usage or
input error.
"""

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict

import numpy as np

from .evalgen import (
    GroundTruthModel,
    generate as generate_dataset,
    kl_divergence_mc,
    mean_log_density,
    model_by_name,
    recovery_report,
)
from .inference import NumericalDivergenceError, fit
from .model import MixtureEstimate, PositiveDataset, PriorConfig
from .specfun import InvertedDirichletParams

__all__ = ["main"]

_FLOAT_FMT = "%.17g"


class InputError(Exception):
    """Unusable input: bad file, bad cell, unknown model name."""


def read_dataset_csv(path):
    """Load a headerless CSV dataset, diagnosing the offending cell."""
    rows = []
    width = None
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with handle:
        for i, record in enumerate(csv.reader(handle), start=1):
            if not record:
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise InputError(f"{path}: row {i} has {len(record)} columns, expected {width}")
            parsed = []
            for j, cell in enumerate(record, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise InputError(
                        f"{path}: non-numeric value {cell!r} at row {i}, column {j}"
                    ) from None
                if not np.isfinite(value) or value <= 0.0:
                    raise InputError(
                        f"{path}: non-positive value {cell} at row {i}, column {j}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise InputError(f"{path}: empty dataset")
    return PositiveDataset(np.asarray(rows))


def write_dataset_csv(path, dataset):
    np.savetxt(path, dataset.values, fmt=_FLOAT_FMT, delimiter=",")


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for it, value in zip(trace.iterations, trace.values):
            writer.writerow([int(it), _FLOAT_FMT % value])


def save_truth_model(path, model):
    payload = {
        "name": model.name,
        "weights": [float(w) for w in model.weights],
        "alphas": [[float(a) for a in c.alpha] for c in model.components],
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def load_truth_model(path):
    payload = _load_json(path)
    try:
        return GroundTruthModel(
            weights=np.asarray(payload["weights"], float),
            components=tuple(
                InvertedDirichletParams(np.asarray(a, float)) for a in payload["alphas"]
            ),
            name=payload.get("name", ""),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: not a valid model file ({exc})") from exc


def save_estimate(path, estimate, posterior, trace, runtime_seconds, config):
    payload = {
        "weights": [float(w) for w in estimate.weights],
        "alphas": [[float(a) for a in c.alpha] for c in estimate.components],
        "K": estimate.n_components,
        "posterior": {
            "g": [float(v) for v in posterior.g_star],
            "h": [float(v) for v in posterior.h_star],
            "s": [float(v) for v in posterior.s_star],
            "t": [float(v) for v in posterior.t_star],
            "u": posterior.u_star.tolist(),
            "v": posterior.v_star.tolist(),
        },
        "elbo_final": float(trace.values[-1]),
        "iterations": len(trace),
        "runtime_seconds": runtime_seconds,
        "seed": config.seed,
        "config": asdict(config),
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def load_estimate(path):
    payload = _load_json(path)
    try:
        estimate = MixtureEstimate(
            weights=np.asarray(payload["weights"], float),
            components=tuple(
                InvertedDirichletParams(np.asarray(a, float)) for a in payload["alphas"]
            ),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{path}: not a valid estimate file ({exc})") from exc
    return estimate, payload


def _load_json(path):
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _load_model_arg(value):
    """Interpret --model as a builtin name or a truth-model JSON path."""
    if value.endswith(".json"):
        return load_truth_model(value)
    try:
        return model_by_name(value)
    except ValueError as exc:
        raise InputError(f"unknown model {value!r}") from exc


def cmd_generate(args):
    model = _load_model_arg(args.model)
    if args.n < 1:
        raise InputError("--n must be >= 1")
    dataset = generate_dataset(model, args.n, args.seed)
    write_dataset_csv(args.output, dataset)
    truth_path = args.truth_output or _with_suffix(args.output, ".truth.json")
    save_truth_model(truth_path, model)
    print(f"wrote {dataset.n} x {dataset.dim} dataset to {args.output}")
    print(f"wrote ground-truth model to {truth_path}")
    return 0


def cmd_fit(args):
    dataset = read_dataset_csv(args.input)
    config = PriorConfig(
        truncation_M=args.truncation,
        s0=args.s0,
        t0=args.t0,
        u0=args.u0,
        v0=args.v0,
        max_iterations=args.max_iters,
        elbo_rel_tolerance=args.tol,
        prune_threshold=args.prune,
        seed=args.seed,
    )
    start = time.perf_counter()
    estimate, posterior, trace = fit(dataset, config)
    runtime = time.perf_counter() - start
    save_estimate(args.output, estimate, posterior, trace, runtime, config)
    trace_path = args.trace_output or _with_suffix(args.output, ".trace.csv")
    write_trace_csv(trace_path, trace)
    print(
        f"fit {dataset.n} x {dataset.dim} dataset: K={estimate.n_components}, "
        f"{len(trace)} iterations, objective {trace.values[-1]:.6g}, {runtime:.2f}s"
    )
    print(f"wrote estimate to {args.output} and trace to {trace_path}")
    return 0


def cmd_evaluate(args):
    truth = load_truth_model(args.truth)
    estimate, payload = load_estimate(args.estimate)
    if truth.alphas.shape[1] != estimate.alphas.shape[1]:
        raise InputError(
            f"dimension mismatch: truth expects D={truth.dim}, "
            f"estimate expects D={estimate.alphas.shape[1] - 1}"
        )
    kl, kl_se = kl_divergence_mc(truth, estimate, n_samples=args.kl_samples, seed=args.seed)
    report = recovery_report(truth, estimate)
    metrics = {
        "kl_divergence": {
            "estimate": kl,
            "std_error": kl_se,
            "n_samples": args.kl_samples,
            "seed": args.seed,
        },
        "recovery": {
            "k_truth": report.k_truth,
            "k_estimate": report.k_estimate,
            "count_match": report.count_match,
            "pairs": [list(p) for p in report.pairs],
            "weight_errors": report.weight_errors.tolist(),
            "alpha_rel_errors": report.alpha_rel_errors.tolist(),
        },
        "elbo_final": payload.get("elbo_final"),
        "runtime_seconds": payload.get("runtime_seconds"),
    }
    if args.input:
        metrics["predictive_log_density"] = mean_log_density(estimate, read_dataset_csv(args.input))
    if args.output:
        with open(args.output, "w") as handle:
            json.dump(metrics, handle, indent=2)
            handle.write("\n")
        print(f"wrote metrics to {args.output}")
    print(f"KL(truth || estimate) = {kl:.4g} +/- {kl_se:.2g}")
    print(f"components: truth {report.k_truth}, estimate {report.k_estimate}")
    return 0


def _with_suffix(path, suffix):
    stem = path[: -len(".csv")] if path.endswith(".csv") else path
    stem = stem[: -len(".json")] if stem.endswith(".json") else stem
    return stem + suffix


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="invdirmix",
        description="Mixtures of inverted Dirichlet distributions: generate, fit, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample a synthetic dataset from a known mixture")
    gen.add_argument("--model", required=True, help="builtin name (A|B|C|corrected-A) or model JSON path")
    gen.add_argument("--n", type=int, required=True, help="number of observations")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--output", required=True, help="dataset CSV path")
    gen.add_argument("--truth-output", help="truth model JSON path (default: derived from --output)")
    gen.set_defaults(func=cmd_generate)

    fit_p = sub.add_parser("fit", help="fit a mixture to a CSV dataset")
    fit_p.add_argument("--input", required=True, help="dataset CSV path")
    fit_p.add_argument("--output", required=True, help="estimate JSON path")
    fit_p.add_argument("--trace-output", help="objective trace CSV path (default: derived from --output)")
    fit_p.add_argument("--seed", type=int, default=0)
    fit_p.add_argument("--truncation", type=int, default=15)
    fit_p.add_argument("--s0", type=float, default=1.0)
    fit_p.add_argument("--t0", type=float, default=0.005)
    fit_p.add_argument("--u0", type=float, default=1.0)
    fit_p.add_argument("--v0", type=float, default=0.005)
    fit_p.add_argument("--tol", type=float, default=1e-6)
    fit_p.add_argument("--max-iters", type=int, default=500)
    fit_p.add_argument("--prune", type=float, default=1e-5)
    fit_p.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", help="compare an estimate against a ground-truth model")
    ev.add_argument("--truth", required=True, help="truth model JSON path")
    ev.add_argument("--estimate", required=True, help="estimate JSON path")
    ev.add_argument("--input", help="optional dataset CSV for predictive log density")
    ev.add_argument("--output", help="metrics JSON path")
    ev.add_argument("--kl-samples", type=int, default=100_000)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalDivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
