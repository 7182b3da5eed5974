"""Sample a block band ensemble and compare its spectrum to the semicircle law.

Prints a coarse density table plus the sup-distance between the empirical
and limiting CDFs. Defaults finish in under a minute on one core; the
full-scale check lives in tests/test_acceptance.py.
"""

import argparse
import sys

import numpy as np

from blockband.cli import RunConfig, generate_spectra
from blockband.stats import estimate_dos, ks_statistic, semicircle_cdf, semicircle_density


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--alpha", type=float, default=0.2)
    ap.add_argument("--w-block", type=int, default=100)
    ap.add_argument("--samples", type=int, default=25)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = RunConfig(
        kind="dos",
        d=args.d,
        m=args.m,
        alpha=args.alpha,
        W=args.w_block,
        samples=args.samples,
        seed=args.seed,
        workers=args.workers,
    )
    n_dim = args.w_block * args.m**args.d
    print(f"sampling {args.samples} matrices, N = {n_dim}")
    spectra = generate_spectra(cfg)

    edges = np.linspace(-2.2, 2.2, 23)
    est = estimate_dos(spectra, edges)
    centers = (edges[:-1] + edges[1:]) / 2.0
    print(f"{'center':>8} {'density':>10} {'semicircle':>11}")
    for c, rho, ref in zip(centers, est.density, semicircle_density(centers)):
        bar = "#" * int(round(60 * rho))
        print(f"{c:8.2f} {rho:10.4f} {ref:11.4f}  {bar}")

    allv = np.concatenate([s.values for s in spectra])
    ks = ks_statistic(allv, semicircle_cdf)
    print(f"\nsup |F_emp - F_semicircle| = {ks:.5f} over {allv.size} eigenvalues")
    return 0


if __name__ == "__main__":
    sys.exit(main())
