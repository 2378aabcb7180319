"""Morse complex from connection counting, Betti numbers and the Lefschetz sum."""
import argparse

from morse_ruelle import morse_complex as mc
from morse_ruelle.critical import find_critical_points
from morse_ruelle.flowsim import count_connections
from morse_ruelle.manifold import builtin

MODELS = {
    "torus": ("torus", {"c1": 1.0, "c2": 2**0.5}),
    "quadratic_sphere": ("sphere", {"a": 0.0, "b": 1.0, "c": 3**0.5}),
    "height_sphere": ("sphere", {}),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("models", nargs="*", default=list(MODELS))
    ap.add_argument("--n-shoot", type=int, default=360)
    args = ap.parse_args()

    for name in args.models:
        kind, params = MODELS[name]
        model = builtin(kind, params)
        recs = find_critical_points(model)
        cons = [count_connections(model, recs, a, b, n_shoot=args.n_shoot)
                for a in recs for b in recs if b.index == a.index + 1]
        data = mc.build(recs, cons)
        lef = mc.lefschetz(recs, [0.1, 1.0, 10.0])
        print(f"{name}: c={data.c} betti={data.betti} euler={data.euler} lefschetz={lef.lefschetz_rhs}")
        for c in cons:
            print(f"  {c.source}->{c.target}: signed={c.signed_count} orbits={c.orbit_count} signs={c.signs}")


if __name__ == "__main__":
    main()
