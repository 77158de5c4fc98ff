"""Rank the higher-order difference law against first order, term by term.

For random models in the moderate regime (dp in [0.05, 0.15], N dp <= 0.5) the
one-step error of each update law is measured against the exact branch sum.
Ablations drop one term group at a time; ``cross_sign=-1`` flips the sign of the
decoherence/Hamiltonian cross terms. A second table isolates the ``dp^2``
correction of the decoherence coefficient on pure-decoherence models.

    python3 scripts/appendix_c_ranking.py --models 20 --seed 105
"""

from __future__ import annotations

import argparse
import json
import math

import numpy as np

from qubitseq.algebra import from_bloch, from_pauli, trace_distance
from qubitseq.difference import APPENDIX_C, step_appendix_c, step_first_order, step_terms
from qubitseq.exact import enumerate_branches, run_nonselective
from qubitseq.model import ModelParams, derive


def random_traceless(rng, norm):
    v = rng.standard_normal(3)
    return from_pauli(0.0, *(norm * v / np.linalg.norm(v)))


def moderate_model(rng):
    dp = rng.uniform(0.05, 0.15)
    N = max(2, math.floor(0.5 / dp))
    p0 = rng.uniform(0.3, 0.7)
    gamma = rng.uniform(0.5, 2.0)
    tau = dp**2 / (4 * p0 * (1 - p0) * gamma)
    dt = N * tau
    hs = [random_traceless(rng, rng.uniform(0.02, 0.1) / dt) for _ in range(3)]
    return ModelParams.from_p0(p0, dp, tau, H=hs[0], Hplus=hs[1], Hminus=hs[2]), N


def random_state(rng):
    v = rng.standard_normal(3)
    return from_bloch(v / np.linalg.norm(v) * rng.uniform(0, 1))


def ranking(n_models, seed):
    rng = np.random.default_rng(seed)
    variants = {
        "first_order": None,
        "appendix_c": APPENDIX_C,
        "appendix_c[cross_sign=-1]": APPENDIX_C,
    }
    for name in APPENDIX_C[2:]:
        variants[f"appendix_c - {name}"] = tuple(t for t in APPENDIX_C if t != name)
    errors = {k: [] for k in variants}
    for _ in range(n_models):
        params, N = moderate_model(rng)
        m = derive(params)
        rho = random_state(rng)
        dt = N * params.tau
        exact = enumerate_branches(rho, m, N).total()
        for k, names in variants.items():
            if names is None:
                out = step_first_order(rho, m, dt)
            else:
                out = step_terms(rho, m, dt, names, -1.0 if "cross_sign" in k else 1.0)
            errors[k].append(float(trace_distance(out, exact)))
    fo = np.array(errors["first_order"])
    rows = {}
    for k, e in errors.items():
        e = np.array(e)
        rows[k] = {"mean_error": float(e.mean()), "ratio_vs_first_order": float(fo.mean() / e.mean()), "wins": int(np.sum(e < fo))}
    return rows


def decoherence_correction_table():
    """Pure decoherence: is the dp^2-corrected coefficient closer to the exact channel?"""
    rows = []
    rho = from_bloch([0.8, 0.0, 0.3])
    for p0 in (0.3, 0.4, 0.5, 0.6):
        for dp, N in ((0.1, 5), (0.1, 50), (0.05, 10)):
            tau = 0.01
            m = derive(ModelParams.from_p0(p0, dp, tau))
            dt = N * tau
            exact = run_nonselective(rho, m, N)[-1]
            fo = float(trace_distance(step_first_order(rho, m, dt), exact))
            ac = float(trace_distance(step_appendix_c(rho, m, dt, N), exact))
            plain = tuple(t for t in APPENDIX_C if t != "decoherence_correction")
            nc = float(trace_distance(step_terms(rho, m, dt, plain), exact))
            rows.append({"p0": p0, "dp": dp, "N": N, "first_order": fo, "appendix_c": ac, "no_correction": nc, "ratio": ac / fo})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=20)
    ap.add_argument("--seed", type=int, default=105)
    ap.add_argument("--json", help="write both tables to this file")
    args = ap.parse_args()

    rows = ranking(args.models, args.seed)
    print(f"{'variant':48s} {'mean error':>11s} {'FO/variant':>10s} {'wins':>5s}")
    for k, r in rows.items():
        print(f"{k:48s} {r['mean_error']:11.3e} {r['ratio_vs_first_order']:10.2f} {r['wins']:3d}/{args.models}")
    dec = decoherence_correction_table()
    print("\npure decoherence, appendix-C / first-order error")
    for r in dec:
        print(f"p0={r['p0']:.2f} dp={r['dp']:.2f} N={r['N']:3d}  FO {r['first_order']:.3e}  AC {r['appendix_c']:.3e}  ratio {r['ratio']:.2f}  AC w/o dp^2 correction {r['no_correction']:.3e}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump({"ranking": rows, "decoherence": dec}, f, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
