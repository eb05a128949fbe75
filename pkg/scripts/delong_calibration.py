#!/usr/bin/env python3
"""Null calibration of the paired DeLong test vs the permutation oracle.

Simulates paired score vectors with equally informative arms, reports the
rejection rate at several levels and the KS distance of the p-value
distribution from uniform, then cross-checks accept/reject decisions
against the sign-flip permutation oracle on mixed-strength instances.

Usage: python scripts/delong_calibration.py [--sims 500] [--instances 50]
"""

import argparse
import sys

import numpy as np
from scipy.stats import kstest

from icpkit.roctest import delong_paired_test
from icpkit.synth import permutation_oracle
from icpkit._seeds import derive_rng, derive_seed


def null_scores(rng, n):
    y = (rng.uniform(size=n) < 0.5).astype(int)
    y[:2] = [0, 1]
    signal = y * 1.0 + rng.normal(size=n)
    return signal + 0.7 * rng.normal(size=n), signal + 0.7 * rng.normal(size=n), y


def mixed_scores(rng, n):
    y = (rng.uniform(size=n) < 0.5).astype(int)
    y[:2] = [0, 1]
    signal = y * 1.0 + rng.normal(size=n)
    a = rng.uniform(0, 1.2) * signal + rng.normal(size=n)
    b = rng.uniform(0, 1.2) * signal + rng.normal(size=n)
    return a, b, y


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sims", type=int, default=500)
    parser.add_argument("--instances", type=int, default=50)
    parser.add_argument("--n", type=int, default=300)
    parser.add_argument("--rounds", type=int, default=20000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    pvalues = np.array([
        delong_paired_test(*null_scores(derive_rng(args.seed, 1, i), args.n)).p_value
        for i in range(args.sims)
    ])
    ks = kstest(pvalues, "uniform")
    print(f"null simulations : {args.sims} (n = {args.n})")
    for alpha in (0.01, 0.05, 0.1):
        print(f"  rejection rate at alpha={alpha:<5}: {(pvalues < alpha).mean():.3f}")
    print(f"  KS vs uniform: statistic={ks.statistic:.4f} p={ks.pvalue:.4f}")

    agree = np.zeros(3)
    for i in range(args.instances):
        a, b, y = mixed_scores(derive_rng(args.seed, 2, i), args.n)
        p_d = delong_paired_test(a, b, y).p_value
        p_p = permutation_oracle(a, b, y, rounds=args.rounds, seed=derive_seed(args.seed, 3, i))
        agree += [(p_d < alpha) == (p_p < alpha) for alpha in (0.01, 0.05, 0.1)]
    print(f"oracle agreement : {args.instances} instances, {args.rounds} rounds")
    for alpha, rate in zip((0.01, 0.05, 0.1), agree / args.instances):
        print(f"  alpha={alpha:<5}: {rate:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
