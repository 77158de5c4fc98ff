"""Purity residue of SME paths from a pure state: Euler-Maruyama vs Milstein.

Reports the mean of ``|1 - tr rho^2|`` after ``t_final`` and the most negative
eigenvalue seen, for each dt, together with the fitted log-log slope.

    python3 scripts/sme_purity.py --paths 2000 1000 200
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from qubitseq.algebra import SX, from_bloch
from qubitseq.continuum import ContinuumModel, purity_residue, run_sme_ensemble
from qubitseq.difference import loglog_slope


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dts", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    ap.add_argument("--paths", type=int, nargs="+", default=[2000, 1000, 200])
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--hx", type=float, default=0.5)
    ap.add_argument("--t-final", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=8)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--json")
    args = ap.parse_args()
    if len(args.paths) != len(args.dts):
        ap.error("--paths needs one entry per dt")

    cm = ContinuumModel(args.hx * SX, args.gamma)
    rho0 = from_bloch([1, 0, 0])
    out = {}
    for scheme in ("euler", "milstein"):
        res, mins = [], []
        for dt, n in zip(args.dts, args.paths):
            ens = run_sme_ensemble(rho0, cm, args.t_final, dt, n, args.seed, scheme=scheme, threads=args.threads, abort_below=None)
            res.append(float(purity_residue(ens).mean()))
            mins.append(float(np.min(ens.min_eigenvalues)))
        slope = loglog_slope(args.dts, res)
        out[scheme] = {"dt": args.dts, "residue": res, "min_eigenvalue": mins, "slope": slope}
        print(f"{scheme:9s} slope {slope:5.2f}")
        for dt, r, e in zip(args.dts, res, mins):
            print(f"  dt={dt:.0e}  residue {r:.3e}  (10 dt = {10 * dt:.0e})  min eigenvalue {e:+.2e}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(out, f, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
