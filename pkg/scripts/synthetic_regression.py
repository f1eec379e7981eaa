"""Conditional-expectation regression on y = (x + shift + noise) mod 1.

    python scripts/synthetic_regression.py --noise 0.01
"""

import argparse

from spamm.regression import RegressionConfig, fit_regressor, scaled_mse, torus_linear_data


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--n-train", type=int, default=3000)
    ap.add_argument("--n-test", type=int, default=2000)
    ap.add_argument("--components", type=int, default=8)
    args = ap.parse_args()
    train = torus_linear_data(args.n_train, args.noise, seed=1)
    test = torus_linear_data(args.n_test, args.noise, seed=2)
    for method in ("em", "learner"):
        reg = fit_regressor(train, 1, RegressionConfig(method=method, n_components=args.components, circular=True))
        err = scaled_mse(reg, test, circular=True)
        print(f"{method:8s} components={reg.model.n_components:2d} circular MSE={err:.3e} "
              f"ratio to noise variance={err / args.noise**2:.2f}")


if __name__ == "__main__":
    main()
