"""Compare parameter counts and depths of every preset with the published figures.

    python3 scripts/param_audit.py [--csv out.csv]
"""

import argparse
import csv
import sys

from dbpn.network import PRESET_NAMES, TABLE1_DEPTH, build, count_params, describe, preset, published_params_k


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--csv", help="write the audit table here")
    args = ap.parse_args()
    rows = []
    for name in PRESET_NAMES:
        for s in (2, 4, 8):
            net = build(preset(name, s))
            total = count_params(net)
            ref = published_params_k(name, s)
            dev = None if ref is None else 100 * (total / (1000 * ref) - 1)
            rows.append((name, s, total, ref, dev, describe(net).depth, TABLE1_DEPTH.get(name)))
    print(f"{'preset':<16} {'s':>2} {'ours':>12} {'published':>10} {'dev %':>7} {'depth':>5} {'pub':>4}")
    for name, s, total, ref, dev, depth, pub_depth in rows:
        print(
            f"{name:<16} {s:>2} {total:>12,} {'' if ref is None else f'{ref:,}k':>10} "
            f"{'' if dev is None else f'{dev:+.2f}':>7} {depth:>5} {pub_depth or '':>4}"
        )
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["preset", "scale", "params", "published_k", "deviation_pct", "depth", "published_depth"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
