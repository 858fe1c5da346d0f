#!/usr/bin/env python3
"""Convert a TU graph-classification dataset directory to panda JSONL.

Reads <DS>_A.txt, <DS>_graph_indicator.txt, <DS>_graph_labels.txt and, when
present, <DS>_node_labels.txt (one-hot encoded) or <DS>_node_attributes.txt.
Graphs without node features get a constant 1.0 feature.

Output, one graph per line:
  {"num_nodes": n, "edges": [[u, v], ...], "node_feat": [[...], ...], "label": y}
Node ids are 0-based within each graph; labels are remapped to 0..C-1.
"""

import argparse
import json
import os
import sys


def read_ints(path):
    with open(path) as f:
        return [[int(x) for x in line.replace(",", " ").split()] for line in f if line.strip()]


def read_floats(path):
    with open(path) as f:
        return [[float(x) for x in line.replace(",", " ").split()] for line in f if line.strip()]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("directory")
    ap.add_argument("--name", help="dataset prefix (default: directory name)")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    name = args.name or os.path.basename(os.path.normpath(args.directory))
    path = lambda suffix: os.path.join(args.directory, f"{name}_{suffix}.txt")

    indicator = [row[0] - 1 for row in read_ints(path("graph_indicator"))]
    raw_labels = [row[0] for row in read_ints(path("graph_labels"))]
    label_ids = {y: i for i, y in enumerate(sorted(set(raw_labels)))}
    num_graphs = len(raw_labels)

    features = None
    if os.path.exists(path("node_attributes")):
        features = read_floats(path("node_attributes"))
    elif os.path.exists(path("node_labels")):
        tags = [row[0] for row in read_ints(path("node_labels"))]
        tag_ids = {t: i for i, t in enumerate(sorted(set(tags)))}
        features = [[1.0 if tag_ids[t] == j else 0.0 for j in range(len(tag_ids))] for t in tags]
    else:
        features = [[1.0] for _ in indicator]

    first = [None] * num_graphs
    count = [0] * num_graphs
    for node, g in enumerate(indicator):
        if first[g] is None:
            first[g] = node
        count[g] += 1

    edges = [[] for _ in range(num_graphs)]
    for u, v in read_ints(path("A")):
        g = indicator[u - 1]
        if indicator[v - 1] != g:
            sys.exit(f"edge ({u},{v}) crosses graphs")
        a, b = u - 1 - first[g], v - 1 - first[g]
        if a < b:
            edges[g].append([a, b])

    with open(args.out, "w") as out:
        for g in range(num_graphs):
            rows = features[first[g]:first[g] + count[g]] if count[g] else []
            out.write(json.dumps({"num_nodes": count[g], "edges": edges[g], "node_feat": rows,
                                  "label": label_ids[raw_labels[g]]}, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
