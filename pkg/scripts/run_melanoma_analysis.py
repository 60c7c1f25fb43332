"""Posterior summary for E1690 borrowing E1684 at a fixed a0 (stratified, K = (4, 3))."""
import argparse

import numpy as np

from ppsurv import SamplerConfig, load_melanoma, phm_fixed_a0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--a0", type=float, default=0.5)
    ap.add_argument("--n-mc", type=int, default=10000)
    ap.add_argument("--n-burnin", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    hist, cur = load_melanoma()
    post = phm_fixed_a0(cur, [hist], [args.a0], n_intervals=(4, 3),
                        cfg=SamplerConfig(n_mc=args.n_mc, n_burnin=args.n_burnin, seed=args.seed))
    print(f"{'parameter':<12}{'mean':>8}{'sd':>8}{'2.5%':>8}{'97.5%':>8}")
    for name, s in post.summary()["parameters"].items():
        print(f"{name:<12}{s['mean']:8.3f}{s['sd']:8.3f}{s['lower']:8.3f}{s['upper']:8.3f}")
    print("beta quantiles:", np.round(np.quantile(post.beta[:, 0], [0, 0.25, 0.5, 0.75, 1]), 4).tolist())


if __name__ == "__main__":
    main()
