#!/usr/bin/env python3
"""Convert the UCI Adult census files into the LIBSVM layout used by the benchmarks.

Usage: prepare_adult.py <dir containing adult.data and adult.test> <output.libsvm>

Records with missing values are dropped. The six continuous columns are
min-max scaled to [0, 1]; the eight categorical columns are one-hot encoded
with categories in sorted order. Labels: +1 for ">50K", -1 otherwise.
"""
import os
import sys

CONTINUOUS = [0, 2, 4, 10, 11, 12]
CATEGORICAL = [1, 3, 5, 6, 7, 8, 9, 13]


def read_records(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != 15 or "?" in fields:
                continue
            fields[14] = fields[14].rstrip(".")
            out.append(fields)
    return out


def main():
    src, dst = sys.argv[1], sys.argv[2]
    records = read_records(os.path.join(src, "adult.data"))
    records += read_records(os.path.join(src, "adult.test"))

    lo = {c: min(float(r[c]) for r in records) for c in CONTINUOUS}
    hi = {c: max(float(r[c]) for r in records) for c in CONTINUOUS}
    categories = {c: sorted({r[c] for r in records}) for c in CATEGORICAL}

    offset = {}
    next_index = len(CONTINUOUS) + 1
    for c in CATEGORICAL:
        offset[c] = next_index
        next_index += len(categories[c])
    p = next_index - 1

    with open(dst, "w") as fh:
        for r in records:
            label = "+1" if r[14] == ">50K" else "-1"
            parts = [label]
            for i, c in enumerate(CONTINUOUS):
                v = (float(r[c]) - lo[c]) / (hi[c] - lo[c])
                if v != 0.0:
                    parts.append("%d:%.6g" % (i + 1, v))
            for c in CATEGORICAL:
                parts.append("%d:1" % (offset[c] + categories[c].index(r[c])))
            fh.write(" ".join(parts) + "\n")
    print("records=%d features=%d" % (len(records), p), file=sys.stderr)


if __name__ == "__main__":
    main()
