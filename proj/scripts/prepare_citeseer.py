#!/usr/bin/env python3
"""Convert the LINQS Citeseer release into the dataset layout scrl reads.

Input: a directory containing citeseer.content and citeseer.cites
(https://linqs.org/datasets/, "CiteSeer for document classification").
Output: edges.txt, features.txt, labels.txt, meta.json in --out.

Usage:
  python3 scripts/prepare_citeseer.py --in /path/to/citeseer --out data/citeseer
Then generate splits with the CLI, e.g.:
  scrl make-splits --data data/citeseer --lpc 20 --val-size 500 --test-size 1000
"""

import argparse
import json
import sys
from pathlib import Path


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--in", dest="src", required=True, help="directory with citeseer.content/.cites")
    ap.add_argument("--out", dest="out", required=True, help="output dataset directory")
    args = ap.parse_args()

    src = Path(args.src)
    out = Path(args.out)
    content = src / "citeseer.content"
    cites = src / "citeseer.cites"
    for f in (content, cites):
        if not f.exists():
            print(f"missing {f}", file=sys.stderr)
            return 1

    ids = {}
    features = []
    label_names = []
    labels = []
    with content.open() as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            paper_id, words, label = parts[0], parts[1:-1], parts[-1]
            ids[paper_id] = len(ids)
            features.append(words)
            if label not in label_names:
                label_names.append(label)
            labels.append(label)
    label_names.sort()
    label_index = {name: i for i, name in enumerate(label_names)}

    edges = set()
    skipped = 0
    with cites.open() as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = parts
            if a not in ids or b not in ids:
                skipped += 1  # citations to papers outside the content file
                continue
            u, v = ids[a], ids[b]
            if u != v:
                edges.add((min(u, v), max(u, v)))

    out.mkdir(parents=True, exist_ok=True)
    with (out / "features.txt").open("w") as fh:
        for row in features:
            fh.write(" ".join(row) + "\n")
    with (out / "labels.txt").open("w") as fh:
        for label in labels:
            fh.write(f"{label_index[label]}\n")
    with (out / "edges.txt").open("w") as fh:
        for u, v in sorted(edges):
            fh.write(f"{u} {v}\n")
    meta = {
        "name": "citeseer",
        "num_nodes": len(ids),
        "num_features": len(features[0]),
        "num_classes": len(label_names),
        "classes": label_names,
    }
    with (out / "meta.json").open("w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")

    print(f"wrote {out}: {len(ids)} nodes, {len(edges)} edges, "
          f"{len(label_names)} classes ({skipped} dangling citations skipped)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
