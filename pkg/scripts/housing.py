"""Scaled MSE of conditional-expectation regression on the California Housing CSV.

Expects the common public CSV (target ``median_house_value``; the text column
``ocean_proximity`` is dropped) or the scikit-learn export (target ``MedHouseVal``).

    python scripts/housing.py data/housing.csv --seeds 0 1 2
"""

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

TARGETS = ("median_house_value", "MedHouseVal")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", type=Path)
    ap.add_argument("--seeds", nargs="+", type=int, default=[0])
    ap.add_argument("--train-fraction", type=float, default=0.8)
    # unrecognised options are passed on to 'spamm regress'
    args, fit_args = ap.parse_known_args()
    lines = args.csv.read_text().splitlines()
    header = lines[0].split(",")
    target = next(t for t in TARGETS if t in header)
    extra = ["--drop-col", "ocean_proximity"] if "ocean_proximity" in header else []
    body = lines[1:]
    errors = []
    with tempfile.TemporaryDirectory() as tmp:
        for seed in args.seeds:
            perm = np.random.default_rng(seed).permutation(len(body))
            cut = int(args.train_fraction * len(body))
            train, test = Path(tmp, "train.csv"), Path(tmp, "test.csv")
            train.write_text("\n".join([lines[0]] + [body[i] for i in perm[:cut]]) + "\n")
            test.write_text("\n".join([lines[0]] + [body[i] for i in perm[cut:]]) + "\n")
            cmd = [sys.executable, "-m", "spamm.cli", "regress", "--train", str(train), "--test", str(test),
                   "--target-col", target, "--seed", str(seed), "--out", str(Path(tmp, "pred.csv")),
                   *extra, *fit_args]
            out = subprocess.run(cmd, check=True, capture_output=True, text=True).stdout
            metrics = json.loads(out)
            errors.append(metrics["mse_scaled"])
            print(f"seed {seed}: scaled MSE {metrics['mse_scaled']:.4f} "
                  f"(dropped {metrics['dropped_train']}+{metrics['dropped_test']} incomplete rows)")
    print(f"mean scaled MSE {np.mean(errors):.4f}")


if __name__ == "__main__":
    main()
