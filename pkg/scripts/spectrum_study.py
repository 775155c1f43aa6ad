"""Limit spectrum, truncation stability and the Bloch-spectrum Hausdorff trend.

Usage: python scripts/spectrum_study.py [--n 32] [--lam-max 300]
"""
import argparse
import json

from hicontrast import assemble_forms, default_model, homogenize
from hicontrast.spectra import (
    beta_function,
    dirichlet_eigs,
    hausdorff_distance,
    hausdorff_trend,
    limit_spectrum,
    truncation_order,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--lam-max", type=float, default=300.0)
    ap.add_argument("--eps", type=float, nargs="*", default=[0.25, 0.125, 0.0625])
    args = ap.parse_args()
    forms = assemble_forms(default_model(args.n))
    _, hom = homogenize(forms)
    data = dirichlet_eigs(forms)
    beta = beta_function(data)
    lim = limit_spectrum(beta, args.lam_max)
    J = truncation_order(data, args.lam_max, 1e-4)
    doubled = min(2 * J, data.count)
    drift = hausdorff_distance(
        limit_spectrum(beta_function(data, J), args.lam_max).union,
        limit_spectrum(beta_function(data, doubled), args.lam_max).union,
    )
    trend = hausdorff_trend(forms, hom, beta, args.eps, args.lam_max)
    out = {
        "limit_set": lim.union.to_list(),
        "truncation": {"J": J, "J_doubled": doubled, "hausdorff": drift},
        "hausdorff": trend,
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
