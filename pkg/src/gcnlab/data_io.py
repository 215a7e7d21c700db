"""Canonical dataset bundles and synthetic test graphs.

A bundle directory holds UTF-8, LF-terminated text files with no header
rows, plus a JSON manifest with SHA-256 checksums:

    manifest.json      name, counts, edge tallies, file names + checksums
    edges.tsv          two zero-based integer columns, one edge per line;
                       interpreted as undirected, symmetrized, de-duplicated
    features.csv       N rows x C columns, full-precision decimal text
    labels.txt         one integer per line
    split_train.txt    one node index per line (same for val/test)

Features are transposed to the in-memory C x N column convention on
load. Feature values round-trip exactly through repr-style shortest
decimal text.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .graph_core import GraphBundle, build_graph

FILE_NAMES = {
    "edges": "edges.tsv",
    "features": "features.csv",
    "labels": "labels.txt",
    "split_train": "split_train.txt",
    "split_val": "split_val.txt",
    "split_test": "split_test.txt",
}

SYNTHETIC_KINDS = ("ring", "path", "star", "erdos_renyi", "stochastic_block")


class DataError(ValueError):
    """Bundle is missing, malformed, or inconsistent with its manifest."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_bundle(path: str | Path) -> GraphBundle:
    """Load and fully validate a canonical bundle directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"missing manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    for key, entry in manifest["files"].items():
        fp = root / entry["name"]
        if not fp.is_file():
            raise DataError(f"missing bundle file {entry['name']}")
        digest = _sha256(fp)
        if digest != entry["sha256"]:
            raise DataError(
                f"checksum mismatch for {entry['name']}: {digest} != {entry['sha256']}"
            )

    n = int(manifest["num_nodes"])
    c = int(manifest["num_features"])
    k = int(manifest["num_classes"])

    edges_path = root / manifest["files"]["edges"]["name"]
    text = edges_path.read_text(encoding="utf-8")
    if text.strip():
        edges = pd.read_csv(
            io.StringIO(text), sep="\t", header=None, dtype=np.int64
        ).to_numpy()
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    if edges.ndim != 2 or (edges.size and edges.shape[1] != 2):
        raise DataError("edges.tsv must have exactly two columns")

    features_nc = pd.read_csv(
        root / manifest["files"]["features"]["name"],
        header=None,
        dtype=np.float64,
        float_precision="round_trip",
    ).to_numpy()
    if features_nc.shape != (n, c):
        raise DataError(
            f"features shape {features_nc.shape} does not match manifest ({n}, {c})"
        )
    labels = np.loadtxt(
        root / manifest["files"]["labels"]["name"], dtype=np.int64, ndmin=1
    )
    if labels.shape != (n,):
        raise DataError(f"labels count {labels.size} does not match manifest N={n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError("label value outside [0, num_classes)")

    splits = {}
    for part in ("train", "val", "test"):
        sp = root / manifest["files"][f"split_{part}"]["name"]
        idx = np.loadtxt(sp, dtype=np.int64, ndmin=1) if sp.stat().st_size else np.empty(0, np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise DataError(f"split_{part} contains an out-of-range index")
        splits[part] = idx

    try:
        return build_graph(
            num_nodes=n,
            edges=edges,
            features=features_nc.T,
            labels=labels,
            train_idx=splits["train"],
            val_idx=splits["val"],
            test_idx=splits["test"],
            num_classes=k,
            name=str(manifest.get("name", root.name)),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def save_bundle(graph: GraphBundle, path: str | Path, name: str | None = None) -> dict:
    """Write a GraphBundle as a canonical bundle; returns the manifest dict.

    Each undirected edge is written once as "i<TAB>j" with i < j, sorted,
    so repeated saves are byte-identical.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    rows = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), graph.degrees)
    mask = rows < graph.indices
    pairs = np.stack([rows[mask], graph.indices[mask]], axis=1)

    (root / FILE_NAMES["edges"]).write_text(
        "".join(f"{i}\t{j}\n" for i, j in pairs), encoding="utf-8"
    )
    feat = graph.features.T  # N rows x C cols on disk
    with open(root / FILE_NAMES["features"], "w", encoding="utf-8", newline="\n") as f:
        for row in feat:
            f.write(",".join(repr(float(v)) for v in row))
            f.write("\n")
    (root / FILE_NAMES["labels"]).write_text(
        "".join(f"{v}\n" for v in graph.labels), encoding="utf-8"
    )
    for part, idx in (
        ("split_train", graph.train_idx),
        ("split_val", graph.val_idx),
        ("split_test", graph.test_idx),
    ):
        (root / FILE_NAMES[part]).write_text(
            "".join(f"{v}\n" for v in idx), encoding="utf-8"
        )

    manifest = {
        "name": name or graph.name,
        "num_nodes": graph.num_nodes,
        "num_features": graph.num_features,
        "num_classes": graph.num_classes,
        "source_directed": False,
        "directed_edge_count": int(graph.indices.size),
        "undirected_edge_count": int(graph.num_undirected_edges),
        "files": {
            key: {"name": fname, "sha256": _sha256(root / fname)}
            for key, fname in FILE_NAMES.items()
        },
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def generate_synthetic(kind: str, params: dict | None = None, seed: int = 0) -> GraphBundle:
    """Deterministic synthetic GraphBundle with random features, planted
    labels (community id for stochastic_block), and a 60/20/20 split."""
    params = dict(params or {})
    if kind not in SYNTHETIC_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}")
    rng = np.random.default_rng(seed)
    num_features = int(params.pop("num_features", 8))
    num_classes = int(params.pop("num_classes", 2))

    if kind == "stochastic_block":
        sizes = [int(s) for s in params.pop("block_sizes", [8, 8])]
        p_in = float(params.pop("p_in", 0.6))
        p_out = float(params.pop("p_out", 0.05))
        if min(sizes) < 1 or not (0 <= p_out <= 1 and 0 <= p_in <= 1):
            raise DataError("degenerate stochastic_block parameters")
        n = sum(sizes)
        labels = np.repeat(np.arange(len(sizes)), sizes)
        num_classes = len(sizes)
        edges = []
        for i in range(n):
            for j in range(i + 1, n):
                p = p_in if labels[i] == labels[j] else p_out
                if rng.random() < p:
                    edges.append((i, j))
        edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        # class-informative features so toy training problems are learnable
        features = rng.normal(size=(num_features, n))
        for i in range(n):
            features[labels[i] % num_features, i] += 3.0
    else:
        n = int(params.pop("n", 8))
        if n < 1:
            raise DataError("n must be >= 1")
        if kind == "ring":
            if n < 3:
                raise DataError("ring needs n >= 3")
            edges = np.array([(i, (i + 1) % n) for i in range(n)], dtype=np.int64)
        elif kind == "path":
            edges = np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64).reshape(-1, 2)
        elif kind == "star":
            if n < 2:
                raise DataError("star needs n >= 2")
            edges = np.array([(0, i) for i in range(1, n)], dtype=np.int64)
        else:  # erdos_renyi
            p = float(params.pop("p", 0.3))
            if not 0.0 <= p <= 1.0:
                raise DataError("edge probability must lie in [0, 1]")
            ii, jj = np.triu_indices(n, k=1)
            keep = rng.random(ii.size) < p
            edges = np.stack([ii[keep], jj[keep]], axis=1).astype(np.int64)
        labels = rng.integers(0, num_classes, size=n)
        features = rng.normal(size=(num_features, n))

    if params:
        raise DataError(f"unknown parameters for {kind}: {sorted(params)}")

    perm = rng.permutation(n)
    n_train = max(1, int(0.6 * n))
    n_val = max(1, int(0.2 * n)) if n >= 3 else 0
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train : n_train + n_val])
    test_idx = np.sort(perm[n_train + n_val :])
    return build_graph(
        num_nodes=n,
        edges=edges,
        features=features,
        labels=labels,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
        num_classes=num_classes,
        name=f"{kind}_{n}",
    )
