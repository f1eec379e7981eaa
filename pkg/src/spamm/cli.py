"""``spamm`` command line: sample, active-set, fit, eval, regress.

Exit codes: 0 success, 2 bad input or usage, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

TARGETS = ("f1", "f2", "f2_alt", "f3")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class InputError(Exception):
    pass


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("spamm")
    except PackageNotFoundError:
        return "0+unknown"


def _check_writable(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise InputError(f"cannot write to {path}")
    if os.path.isdir(path):
        raise InputError(f"{path} is a directory")


def _manifest(args, command: str, config: dict, inputs, outputs, started: float, **extra):
    from .io import RunManifest

    m = RunManifest(command, config, getattr(args, "seed", None), [str(p) for p in inputs],
                    [str(p) for p in outputs], round(time.time() - started, 6), _version(), extra=extra)
    return m.write(outputs[0])


def _learner_config(args):
    from .em import EmConfig
    from .learner import LearnerConfig

    return LearnerConfig(eps_ks=args.eps_ks, eps_c=args.eps_c, gamma1=args.gamma1, gamma2=args.gamma2,
                         k_max=args.k_max, family=args.family, em=EmConfig(seed=args.seed), B=args.b,
                         seed=args.seed)


def _learner_dict(cfg) -> dict:
    return {"eps_ks": cfg.eps_ks, "eps_c": cfg.eps_c, "gamma1": cfg.gamma1, "gamma2": cfg.gamma2,
            "k_max": cfg.k_max, "family": cfg.family, "B": cfg.B, "seed": cfg.seed}


def cmd_sample(args) -> int:
    from .io import write_samples
    from .synth import make_test_function, rejection_sample

    started = time.time()
    _check_writable(args.out)
    if args.n < 0:
        raise InputError("--n must be non-negative")
    oracle = make_test_function(args.target)
    samples = rejection_sample(oracle, args.n, args.seed)
    write_samples(args.out, samples)
    _manifest(args, "sample", {"target": args.target, "n": args.n}, [], [args.out], started)
    return EXIT_OK


def cmd_active_set(args) -> int:
    from .io import read_samples, write_json
    from .learner import detect_active_set

    started = time.time()
    _check_writable(args.out)
    samples, _ = read_samples(args.input, args.wrap)
    if samples.n < 2:
        raise InputError("need at least two samples")
    report = detect_active_set(samples, args.eps_ks, args.eps_c)
    write_json(args.out, report.to_dict())
    _manifest(args, "active-set", {"eps_ks": args.eps_ks, "eps_c": args.eps_c}, [args.input], [args.out], started)
    return EXIT_OK


def fit_outputs(out) -> tuple[str, str]:
    """Paths of the active-set report and trace written next to a model file."""
    return f"{out}.active.json", f"{out}.trace.jsonl"


def cmd_fit(args) -> int:
    from .io import atomic_write_text, read_samples, write_json
    from .learner import learn_sparse_mm

    started = time.time()
    _check_writable(args.out)
    samples, _ = read_samples(args.input, args.wrap)
    if samples.n < 10:
        raise InputError(f"need at least 10 samples, got {samples.n}")
    cfg = _learner_config(args)
    result = learn_sparse_mm(samples, cfg)
    active_path, trace_path = fit_outputs(args.out)
    atomic_write_text(args.out, result.model.to_json())
    write_json(active_path, result.report.to_dict())
    atomic_write_text(trace_path, "".join(json.dumps(e) + "\n" for e in result.trace))
    _manifest(args, "fit", _learner_dict(cfg), [args.input], [args.out, active_path, trace_path], started)
    return EXIT_OK


def _load_truth(name: str):
    from .model import SparseMixtureModel
    from .synth import make_test_function, mixture_oracle

    if name in TARGETS:
        return make_test_function(name)
    return mixture_oracle(SparseMixtureModel.load(name), name)


def evaluate(model, truth, samples=None, n_mc: int = 100_000, seed: int = 0, powers=(1, 2)) -> dict:
    """Relative L^p errors against ``truth`` and log-likelihoods on ``samples``."""
    import numpy as np

    from .densities import log_likelihood, mixture_pdf
    from .synth import relative_lp_error

    if truth.d != model.d:
        raise InputError(f"model has dimension {model.d}, truth has {truth.d}")
    out = {}
    if samples is not None:
        if samples.d != model.d:
            raise InputError(f"samples have dimension {samples.d}, model has {model.d}")
        out["loglik_model"] = log_likelihood(model, samples)
        with np.errstate(divide="ignore"):
            out["loglik_truth"] = float(samples.weights @ np.log(truth(samples.points)))
    for p in powers:
        out[f"rel_l{p}"] = relative_lp_error(lambda X: mixture_pdf(model, X), truth, p, n_mc, seed, model.d)
    return out


def cmd_eval(args) -> int:
    from .io import read_samples, write_json
    from .model import SparseMixtureModel

    started = time.time()
    model = SparseMixtureModel.load(args.model)
    truth = _load_truth(args.truth)
    samples = read_samples(args.input, args.wrap)[0] if args.input else None
    powers = (1, 2) if args.p == "both" else (int(args.p),)
    metrics = evaluate(model, truth, samples, args.n_mc, args.seed, powers)
    text = json.dumps(metrics, indent=2)
    if args.out:
        _check_writable(args.out)
        write_json(args.out, metrics)
        inputs = [args.model, args.truth] + ([args.input] if args.input else [])
        _manifest(args, "eval", {"n_mc": args.n_mc, "p": args.p}, inputs, [args.out], started)
    print(text)
    return EXIT_OK


def _column_index(header, col: str) -> int:
    if col in header:
        return header.index(col)
    try:
        idx = int(col)
    except ValueError:
        raise InputError(f"unknown target column {col!r}") from None
    if not -len(header) <= idx < len(header):
        raise InputError(f"target column {idx} out of range")
    return idx % len(header)


def cmd_regress(args) -> int:
    import numpy as np

    from .io import atomic_write_text, read_table
    from .regression import (
        MinMaxScaler,
        RegressionConfig,
        drop_incomplete,
        fit_regressor,
        scaled_mse,
    )
    from .samples import wrap

    started = time.time()
    _check_writable(args.out)
    header, train, _ = read_table(args.train, allow_missing=True, skip=args.drop_col)
    if not header:
        raise InputError(f"{args.train} is empty")
    target = _column_index(header, args.target_col)
    train, dropped_train = drop_incomplete(train)
    if args.test:
        test_header, test, _ = read_table(args.test, allow_missing=True, skip=args.drop_col)
        if len(test_header) != len(header):
            raise InputError("train and test files have different columns")
        test, dropped_test = drop_incomplete(test)
    else:
        test, dropped_test = train, 0
    if train.shape[0] < 10:
        raise InputError(f"need at least 10 complete training rows, got {train.shape[0]}")
    if args.no_scale:
        scaler = None
        outside = any(((a < 0) | (a >= 1)).any() for a in (train, test))
        if outside and not args.wrap:
            raise InputError("values outside [0, 1) with --no-scale; pass --wrap to reduce modulo 1")
        Ztr, Zte = wrap(train), wrap(test)
    else:
        scaler = MinMaxScaler.fit(train)
        Ztr, Zte = scaler.transform(train), scaler.transform(test)
    cfg = RegressionConfig(method=args.method, n_components=args.n_components, circular=args.circular,
                           learner=_learner_config(args), seed=args.seed)
    reg = fit_regressor(Ztr, target, cfg, scaler)
    pred = reg.predict_scaled(Zte)
    scaled = pred.circular if args.circular else np.clip(pred.unwrapped, 0.0, 1.0)
    raw = scaler.inverse(scaled, target) if scaler is not None else scaled
    err = scaled_mse(reg, Zte, args.circular)
    lines = [f"{header[target]},prediction,prediction_scaled"]
    lines += [f"{test[i, target]!r},{float(raw[i])!r},{float(scaled[i])!r}" for i in range(test.shape[0])]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    model_path = f"{args.out}.model.json"
    atomic_write_text(model_path, reg.model.to_json())
    metrics = {"mse_scaled": err, "n_train": int(train.shape[0]), "n_test": int(test.shape[0]),
               "dropped_train": dropped_train, "dropped_test": dropped_test}
    config = {"method": args.method, "n_components": args.n_components, "circular": args.circular,
              "target": header[target], **_learner_dict(cfg.learner)}
    _manifest(args, "regress", config, [args.train] + ([args.test] if args.test else []),
              [args.out, model_path], started, metrics=metrics,
              scaler=scaler.to_dict() if scaler is not None else None)
    print(json.dumps(metrics, indent=2))
    return EXIT_OK


def _add_fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", default="wrapped_full", choices=("wrapped_full", "wrapped_diag", "von_mises"))
    p.add_argument("--eps-ks", type=float, default=5.0)
    p.add_argument("--eps-c", type=float, default=0.1)
    p.add_argument("--gamma1", type=float, default=3e-3)
    p.add_argument("--gamma2", type=float, default=1e-3)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--b", type=int, default=1, help="lattice truncation bound")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spamm", description="Sparse mixture models on the torus.")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS threads (default: SPAMM_THREADS or all cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="rejection samples from a benchmark density")
    p.add_argument("--target", required=True, choices=TARGETS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("active-set", help="per-dimension KS statistics and active dimensions")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--eps-ks", type=float, default=5.0)
    p.add_argument("--eps-c", type=float, default=0.1)
    p.add_argument("--wrap", action="store_true", help="reduce values modulo 1 instead of rejecting them")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_active_set)

    p = sub.add_parser("fit", help="learn a sparse mixture from samples")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--wrap", action="store_true")
    p.add_argument("--out", required=True)
    _add_fit_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="compare a model with a reference density")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True, help="f1, f2, f2_alt, f3 or a model JSON file")
    p.add_argument("--n-mc", type=int, default=100_000)
    p.add_argument("--p", default="both", choices=("1", "2", "both"))
    p.add_argument("--in", dest="input", default=None, help="samples for log-likelihoods")
    p.add_argument("--wrap", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("regress", help="predict a column by conditional expectation")
    p.add_argument("--train", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--target-col", required=True, help="column name or index")
    p.add_argument("--method", default="learner", choices=("learner", "em"))
    p.add_argument("--n-components", type=int, default=8, help="components for --method em")
    p.add_argument("--circular", action="store_true", help="circular mean and wrapped errors for the target")
    p.add_argument("--no-scale", action="store_true", help="data already on the torus; skip min-max scaling")
    p.add_argument("--drop-col", action="append", default=[], help="column to ignore (repeatable)")
    p.add_argument("--wrap", action="store_true")
    p.add_argument("--out", required=True)
    _add_fit_args(p)
    p.set_defaults(func=cmd_regress)
    return parser


def _set_threads(n) -> None:
    if n is None:
        n = os.environ.get("SPAMM_THREADS")
    if n is None:
        return
    for var in THREAD_VARS:
        os.environ[var] = str(int(n))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    import logging

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .errors import NumericError

    try:
        return args.func(args)
    except NumericError as exc:
        print(f"spamm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"spamm: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
