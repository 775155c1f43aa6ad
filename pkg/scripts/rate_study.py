"""Resolvent-rate study: full method, naive matching and inner closeness over an eps sweep.

Usage: python scripts/rate_study.py [--model default|laminate] [--n 32] [--threads 4]
"""
import argparse
import json

from hicontrast import assemble_forms, default_model, homogenize, laminate_model
from hicontrast.estimator import fit_rate, inner_closeness, naive_matching_sweep, sweep

EPS = [0.5, 0.25, 0.125, 0.0625]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", choices=["default", "laminate"], default="default")
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--alpha", type=float, nargs="*", default=[0.25, 0.5, 0.75])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    model = default_model(args.n) if args.model == "default" else laminate_model(args.n)
    forms = assemble_forms(model)
    _, hom = homogenize(forms)
    full = [(e, sweep(forms, hom, e, threads=args.threads).sup) for e in EPS]
    out = {"full": full, "full_slope": fit_rate(full).slope}
    if not model.geometry.is_classical:
        for a in args.alpha:
            pairs = [(e, naive_matching_sweep(forms, hom, e, a, threads=args.threads).sup) for e in EPS]
            out[f"naive_{a}"] = {"sup": pairs, "slope": fit_rate(pairs).slope}
        inner = [(e, inner_closeness(forms, hom, e)) for e in EPS]
        out["inner"] = {"sup": inner, "slope": fit_rate(inner).slope}
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
