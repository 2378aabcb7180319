"""Correlation decay on the flat torus: trace, fitted rates and spectrum matching."""
import argparse
import json

import numpy as np

from morse_ruelle import correlation as corr
from morse_ruelle.acceptance import torus_psi
from morse_ruelle.critical import find_critical_points
from morse_ruelle.manifold import builtin, torus_grid
from morse_ruelle.spectrum import enumerate_resonances


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=256)
    ap.add_argument("--tmax", type=float, default=25.0)
    ap.add_argument("--samples", type=int, default=251)
    ap.add_argument("--rates", type=int, default=3)
    ap.add_argument("--c2", type=float, default=2**0.5)
    args = ap.parse_args()

    model = builtin("torus", {"c1": 1.0, "c2": args.c2})
    recs = find_critical_points(model)
    psi1, psi2 = torus_psi()
    grid = torus_grid(args.nodes, args.nodes)
    trace = corr.trace_k0(model, psi1, psi2, np.linspace(0, args.tmax, args.samples), grid)
    fit = corr.fit_decay(trace, n_rates=args.rates)
    lead = corr.leading_term(model, recs, psi1, psi2, grid)
    table = enumerate_resonances(recs, 0, 3.0)
    print(json.dumps({"rates": fit.rates, "polynomial_degree": fit.polynomial_degree, "window": fit.window,
                      "chi2_dof": fit.chi2_dof, "limit": trace.limit, "leading_term": lead,
                      "comparison": corr.compare_to_spectrum(fit, table)}, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
