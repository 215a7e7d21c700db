"""Conversion to the canonical text-bundle format, plus the CLI.

The bundle layout (consumed by the training lab through its loader) is
UTF-8 text with LF line endings and no header rows:

    manifest.json     counts, edge tallies, SHA-256 checksums
    edges.tsv         one undirected edge per line, "i<TAB>j" with i < j
    features.csv      N rows x C columns, repr-style decimal text
    labels.txt        one integer per line
    split_*.txt       one node index per line (train/val/test)

Features are row-normalized to unit sum (the standard citation-network
preprocessing). Node/feature/class counts are asserted against the
expected statistics for known datasets; edge counts are reported, not
asserted, because upstream edge tallies are ambiguous about direction.
Output is written to a temporary sibling directory and renamed into
place, so a failed conversion leaves no partial bundle behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .planetoid import SourceError, edge_tallies, load_planetoid, row_normalize

# name -> (nodes, features, classes)
KNOWN_STATS = {
    "cora": (2708, 1433, 7),
    "citeseer": (3327, 3703, 6),
    "pubmed": (19717, 500, 3),
}


class StatsMismatch(RuntimeError):
    """Converted counts disagree with the expected dataset statistics."""


@dataclass
class SourceSpec:
    name: str
    src: Path
    expected: tuple[int, int, int] | None  # (nodes, features, classes)

    @classmethod
    def for_dataset(cls, name: str, src: str | Path,
                    expected: tuple[int, int, int] | None = None) -> "SourceSpec":
        return cls(name=name, src=Path(src), expected=expected or KNOWN_STATS.get(name))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_features_csv(path: Path, dense_rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in dense_rows:
            f.write(",".join(repr(float(v)) for v in row))
            f.write("\n")


def convert(spec: SourceSpec, out_dir: str | Path) -> dict:
    """Convert one archive; returns the manifest dict."""
    data = load_planetoid(spec.src, spec.name)
    n = data.num_nodes
    c = data.features.shape[1]
    k = data.onehot_labels.shape[1]
    if spec.expected is not None and (n, c, k) != tuple(spec.expected):
        raise StatsMismatch(
            f"{spec.name}: observed (nodes, features, classes) = {(n, c, k)}, "
            f"expected {tuple(spec.expected)}"
        )

    directed, undirected, pairs = edge_tallies(data.graph)
    features = row_normalize(data.features)
    # isolated nodes with all-zero label rows argmax to class 0; they sit
    # outside the train/val splits so training never reads those labels
    labels = data.onehot_labels.argmax(axis=1)

    out = Path(out_dir)
    tmp = out.parent / (out.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        (tmp / "edges.tsv").write_text(
            "".join(f"{i}\t{j}\n" for i, j in pairs), encoding="utf-8"
        )
        _write_features_csv(tmp / "features.csv", features.toarray())
        (tmp / "labels.txt").write_text(
            "".join(f"{v}\n" for v in labels), encoding="utf-8"
        )
        for part, idx in (
            ("split_train", data.train_idx),
            ("split_val", data.val_idx),
            ("split_test", data.test_idx),
        ):
            (tmp / f"{part}.txt").write_text(
                "".join(f"{v}\n" for v in idx), encoding="utf-8"
            )
        file_names = {
            "edges": "edges.tsv",
            "features": "features.csv",
            "labels": "labels.txt",
            "split_train": "split_train.txt",
            "split_val": "split_val.txt",
            "split_test": "split_test.txt",
        }
        manifest = {
            "name": spec.name,
            "num_nodes": n,
            "num_features": c,
            "num_classes": k,
            "source_directed": False,
            "directed_edge_count": directed,
            "undirected_edge_count": undirected,
            "files": {
                key: {"name": fname, "sha256": _sha256(tmp / fname)}
                for key, fname in file_names.items()
            },
        }
        (tmp / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise

    if out.exists():
        shutil.rmtree(out)
    os.replace(tmp, out)
    return manifest


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="convert",
        description="Convert a Planetoid citation archive to a portable text bundle.",
    )
    parser.add_argument("--name", required=True, help="dataset name (cora/citeseer/pubmed/...)")
    parser.add_argument("--src", required=True, help="directory holding the ind.NAME.* files")
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--expect-nodes", type=int, default=None)
    parser.add_argument("--expect-features", type=int, default=None)
    parser.add_argument("--expect-classes", type=int, default=None)
    args = parser.parse_args(argv)

    expected = None
    if args.expect_nodes is not None:
        if args.expect_features is None or args.expect_classes is None:
            parser.error("--expect-nodes/--expect-features/--expect-classes go together")
        expected = (args.expect_nodes, args.expect_features, args.expect_classes)

    spec = SourceSpec.for_dataset(args.name, args.src, expected)
    try:
        manifest = convert(spec, args.out)
    except (SourceError, StatsMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.out}: nodes={manifest['num_nodes']} "
        f"features={manifest['num_features']} classes={manifest['num_classes']} "
        f"edges_directed={manifest['directed_edge_count']} "
        f"edges_undirected={manifest['undirected_edge_count']}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
