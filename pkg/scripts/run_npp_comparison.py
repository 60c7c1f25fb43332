"""Fixed a0 = 0.5 versus a Beta(1e3, 1e3) normalized power prior at nu = 350 (DN/DA priors)."""
import argparse
import os

from ppsurv import (A0Spec, HypothesisSpec, SamplerConfig, TrialDesignConfig, approximate_prior_beta,
                    build_default_sampling_priors, default_partition, estimate_operating_characteristic,
                    fit_single_mvn, load_melanoma)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--B", type=int, default=1000)
    ap.add_argument("--n-mc", type=int, default=5000)
    ap.add_argument("--L", type=int, default=10000)
    ap.add_argument("--shape", type=float, default=1e3, help="Beta(shape, shape) prior on a0")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    hist, _ = load_melanoma()
    part = default_partition([hist], (4, 3))
    dn, da = build_default_sampling_priors([hist], partition=part, cfg=SamplerConfig(n_mc=10000, seed=args.seed))
    draws = approximate_prior_beta([hist], A0Spec(beta_shape1=(args.shape,), beta_shape2=(args.shape,)),
                                   partition=part, L=args.L, cfg=SamplerConfig(n_mc=args.L, seed=args.seed + 1))
    mix = fit_single_mvn(draws)
    print(f"approximate prior on beta: mean {mix.means[0, 0]:.4f}, var {mix.covs[0, 0, 0]:.4f}")
    design = TrialDesignConfig(n_subjects=1050, n_events=350, enroll_param=4.0)
    cfg = SamplerConfig(n_mc=args.n_mc, n_burnin=200)
    common = dict(n_intervals=(4, 3), B=args.B, cfg=cfg, seed=args.seed, workers=args.workers,
                  generation_partition=part)
    for label, kw in (("power prior a0=0.5", {"a0": [0.5]}),
                      (f"normalized power prior Beta({args.shape:g},{args.shape:g})", {"prior_beta_mvn": mix})):
        t1 = estimate_operating_characteristic([hist], design, dn, HypothesisSpec(), **common, **kw)
        pw = estimate_operating_characteristic([hist], design, da, HypothesisSpec(), **common, **kw)
        print(f"{label:<45} type I {t1.estimate:.4f} (se {t1.mcse:.4f})  power {pw.estimate:.4f} (se {pw.mcse:.4f})")


if __name__ == "__main__":
    main()
