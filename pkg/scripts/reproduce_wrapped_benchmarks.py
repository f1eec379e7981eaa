"""Fit f1, f2 and f2_alt from rejection samples and print recovered parameters and errors.

    python scripts/reproduce_wrapped_benchmarks.py --seeds 0 1 2 --n 10000
"""

import argparse
import time

import numpy as np

from spamm.densities import log_likelihood, mixture_pdf
from spamm.learner import LearnerConfig, learn_sparse_mm
from spamm.synth import make_test_function, rejection_sample, relative_lp_error


def run(target: str, seed: int, n: int, n_mc: int, family: str) -> dict:
    truth = make_test_function(target)
    samples = rejection_sample(truth, n, seed)
    eps = 4.7 if n < 10_000 else 5.0
    gamma1 = 5e-3 if family == "von_mises" else 3e-3
    cfg = LearnerConfig(eps_ks=eps, eps_c=0.1, gamma1=gamma1, gamma2=1e-3, family=family, seed=seed)
    t0 = time.perf_counter()
    res = learn_sparse_mm(samples, cfg)
    elapsed = time.perf_counter() - t0
    pdf = lambda X: mixture_pdf(res.model, X)  # noqa: E731
    return {
        "model": res.model,
        "active": res.report.active,
        "seconds": elapsed,
        "loglik_truth": float(np.log(truth(samples.points)).sum()),
        "loglik_model": log_likelihood(res.model, samples),
        "l1": relative_lp_error(pdf, truth, 1, n_mc, 1000 + seed, truth.d),
        "l2": relative_lp_error(pdf, truth, 2, n_mc, 1000 + seed, truth.d),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--targets", nargs="+", default=["f1", "f2", "f2_alt"])
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--n-mc", type=int, default=100_000)
    ap.add_argument("--family", default="wrapped_full", choices=("wrapped_full", "wrapped_diag", "von_mises"))
    args = ap.parse_args()
    for target in args.targets:
        stats = []
        for seed in args.seeds:
            r = run(target, seed, args.n, args.n_mc, args.family)
            stats.append([r["loglik_truth"], r["loglik_model"], r["l1"], r["l2"], r["seconds"]])
            print(f"{target} seed {seed}: active {r['active']}  {r['seconds']:.1f}s")
            for c in r["model"].components:
                diag = np.round(c.cov.diagonal(), 6).tolist() if c.cov is not None else None
                print(f"    u={c.u} alpha={c.alpha:.4f} mean={np.round(c.mean, 4).tolist()} var={diag}")
        s = np.array(stats)
        mean, sd = s.mean(axis=0), s.std(axis=0, ddof=1) if len(s) > 1 else np.zeros(5)
        names = ("loglik truth", "loglik model", "rel L1", "rel L2", "seconds")
        print(target + ": " + "; ".join(f"{k} {m:.4f} +- {d:.4f}" for k, m, d in zip(names, mean, sd)))


if __name__ == "__main__":
    main()
