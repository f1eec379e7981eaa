"""Per-dimension KS statistics and correlations of rejection samples (plot-ready JSON).

    python scripts/ks_profile.py f1 --n 10000 > f1_ks.json
"""

import argparse
import json

from spamm.learner import detect_active_set
from spamm.synth import make_test_function, rejection_sample


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("target", choices=("f1", "f2", "f2_alt", "f3"))
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eps-ks", type=float, default=5.0)
    ap.add_argument("--eps-c", type=float, default=0.1)
    args = ap.parse_args()
    samples = rejection_sample(make_test_function(args.target), args.n, args.seed)
    print(json.dumps(detect_active_set(samples, args.eps_ks, args.eps_c).to_dict(), indent=2))


if __name__ == "__main__":
    main()
