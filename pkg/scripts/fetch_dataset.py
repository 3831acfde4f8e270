#!/usr/bin/env python3
"""Placeholder for obtaining the breast-cancer expression matrix.

The matrix is not redistributed here.  Obtain the 3,170-gene hereditary
breast cancer table (BRCA1 vs BRCA2 tumours, log2 expression) from its
public source, convert it to the layout in docs/dataset_schema.md, and
validate it with::

    python3 scripts/fetch_dataset.py --check path/to/matrix.tsv [--labels labels.csv]

Then run the conditional acceptance check with
``FDRCURVE_BRCA_MATRIX=path/to/matrix.tsv pytest tests/test_acceptance.py -k criterion_9``.
"""

import argparse
import sys


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--check", metavar="MATRIX", help="validate a local matrix file against the schema")
    ap.add_argument("--labels", help="sample,label file when the matrix has no inline group row")
    args = ap.parse_args()
    if not args.check:
        print("No download is performed; see the module docstring for how to supply the matrix.", file=sys.stderr)
        return 1

    from fdrcurve.ingest import DataError, group_summary, load_matrix

    try:
        mat = load_matrix(args.check, labels_path=args.labels)
        summary = group_summary(mat)
    except DataError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 3
    n_a = mat.group_labels.count("A")
    print(f"genes={summary.m} dropped_rows={mat.dropped_rows} group_A={n_a} group_B={len(mat.group_labels) - n_a}")
    print(f"median sigma_hat={sorted(summary.sigma_hat)[summary.m // 2]:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
