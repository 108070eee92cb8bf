#!/usr/bin/env python3
"""Convert the prostate cancer trial table (Hmisc `prostate`, CSV export) into
the person-time format read by `crisk`.

Keeps the placebo and 5.0 mg estrogen arms. Death from prostate cancer is the
event of interest, any other death is the competing event, and being alive
before the administrative end is loss to follow-up. A subject followed for
`dtime` months gets records k = 0..min(dtime, K); the record at k = dtime
carries the terminal indicator.

Usage: prepare_prostate.py prostate.csv -o data/prostate.csv [--k-max 59]
"""

import argparse
import csv
import sys

PF_CODES = {
    "normal activity": 0,
    "in bed < 50% daytime": 1,
    "in bed > 50% daytime": 2,
    "confined to bed": 3,
}
ARMS = {"placebo": 0, "5.0 mg estrogen": 1}
EVENT = "dead - prostatic ca"
COLUMNS = ["subject_id", "k", "a", "pf", "age", "hg", "hx", "c_next", "d_next", "y_next"]


def clean(value):
    return value.strip().strip('"')


def number(row, key):
    v = clean(row.get(key, ""))
    if v in ("", "NA"):
        return None
    return float(v)


def expand(row, k_max):
    """Person-time rows for one subject, or None when a needed field is missing."""
    rx = clean(row["rx"])
    if rx not in ARMS:
        return []
    pf = PF_CODES.get(clean(row["pf"]))
    age, hg, hx, dtime = (number(row, key) for key in ("age", "hg", "hx", "dtime"))
    status = clean(row["status"])
    if None in (pf, age, hg, hx, dtime) or not status:
        return None
    t = int(dtime)
    last = min(t, k_max)
    c = d = y = 0
    if t <= k_max:
        if status == EVENT:
            y = 1
        elif status.startswith("dead"):
            d = 1
        else:
            c = 1
    sid = clean(row["patno"])
    out = []
    for k in range(last + 1):
        end = k == last
        out.append([sid, k, ARMS[rx], pf, f"{age:g}", f"{hg:g}", int(hx),
                    c if end else 0, d if end else 0, y if end else 0])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="prostate table exported as CSV")
    ap.add_argument("-o", "--out", required=True)
    ap.add_argument("--k-max", type=int, default=59)
    args = ap.parse_args(argv)

    dropped = 0
    kept = 0
    with open(args.source, newline="") as src, open(args.out, "w", newline="") as dst:
        writer = csv.writer(dst, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in csv.DictReader(src):
            rows = expand(row, args.k_max)
            if rows is None:
                dropped += 1
                continue
            if rows:
                kept += 1
                writer.writerows(rows)
    print(f"{kept} subjects written, {dropped} dropped for missing values", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
