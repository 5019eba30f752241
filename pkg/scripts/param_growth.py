#!/usr/bin/env python3
"""Print how DCN, CIN and recurrent cross layers grow with depth and width (CSV on stdout)."""

import argparse

from dcrnn.cross import growth_csv, growth_table, param_growth


def ints(text):
    return tuple(int(x) for x in text.split(","))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", type=ints, default=(1, 2, 3, 4))
    ap.add_argument("--widths", type=ints, default=(8, 16, 32, 64))
    ap.add_argument("--fields", type=int, default=4)
    ap.add_argument("--embed-dim", type=int, default=8)
    ap.add_argument("--table", action="store_true", help="aligned table instead of CSV")
    args = ap.parse_args()
    rows = param_growth(args.depths, args.widths, args.fields, args.embed_dim)
    print(growth_table(rows) if args.table else growth_csv(rows), end="")


if __name__ == "__main__":
    main()
