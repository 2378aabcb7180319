"""Print the acceptance table and optionally store it as JSON."""
import argparse
import json

from morse_ruelle.acceptance import run_all


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--criteria", type=int, nargs="*")
    ap.add_argument("--json")
    args = ap.parse_args()
    results = run_all(args.criteria)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump([r.to_json() for r in results], fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
