import json
import os
import pickle
import shutil
import subprocess
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from planetoid_converter import SourceError, SourceSpec, StatsMismatch, convert
from planetoid_converter.planetoid import edge_tallies, load_planetoid


def write_archive(src: Path, name: str, with_gap: bool = False) -> dict:
    """A miniature archive in the upstream serialization.

    Layout: 3 labeled train nodes, 4 unlabeled, 3 test nodes (ids 7..9),
    with the test rows stored in shuffled order. The gapped variant keeps
    ids 8 and 10 and skips 9 (an isolated featureless node, as in the
    Citeseer archive).
    """
    src.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    C, K = 5, 3
    x = sp.csr_matrix(rng.integers(0, 2, size=(3, C)).astype(np.float64))
    y = np.eye(K, dtype=np.int64)[[0, 1, 2]]
    allx = sp.vstack([x, sp.csr_matrix(rng.integers(0, 2, size=(4, C)).astype(np.float64))])
    ally = np.eye(K, dtype=np.int64)[[0, 1, 2, 0, 1, 2, 0]]
    if with_gap:
        test_ids = [7, 8, 10]  # id 9 missing: isolated node
        n = 11
    else:
        test_ids = [7, 8, 9]
        n = 10
    tx = sp.csr_matrix(rng.integers(0, 2, size=(len(test_ids), C)).astype(np.float64) + 1.0)
    ty = np.eye(K, dtype=np.int64)[(np.arange(len(test_ids))) % K]

    graph = defaultdict(list)
    ring = [(i, (i + 1) % n) for i in range(n) if not (with_gap and 9 in (i, (i + 1) % n))]
    for i, j in ring:
        graph[i].append(j)
        graph[j].append(i)
    graph[0].append(2)
    graph[2].append(0)
    graph[0].append(2)  # duplicate entry
    graph[2].append(0)
    graph[1].append(1)  # self-loop
    for i in range(n):
        graph[i]  # materialize every node key

    # tx rows are stored in sorted-id order; test.index lists shuffled ids
    shuffled = list(reversed(test_ids))
    pieces = {"x": x, "y": y, "tx": tx, "ty": ty, "allx": allx, "ally": ally,
              "graph": graph}
    for piece, obj in pieces.items():
        with open(src / f"ind.{name}.{piece}", "wb") as f:
            pickle.dump(obj, f, protocol=2)
    (src / f"ind.{name}.test.index").write_text(
        "".join(f"{i}\n" for i in shuffled), encoding="utf-8"
    )
    return {"n": n, "C": C, "K": K, "test_ids": sorted(test_ids)}


def test_convert_counts_splits_and_normalization(tmp_path):
    info = write_archive(tmp_path / "src", "toy")
    spec = SourceSpec.for_dataset("toy", tmp_path / "src")
    manifest = convert(spec, tmp_path / "out")
    assert manifest["num_nodes"] == info["n"]
    assert manifest["num_features"] == info["C"]
    assert manifest["num_classes"] == info["K"]

    out = tmp_path / "out"
    labels = [int(v) for v in (out / "labels.txt").read_text().split()]
    assert len(labels) == info["n"]
    assert (out / "split_train.txt").read_text().split() == ["0", "1", "2"]
    assert [int(v) for v in (out / "split_test.txt").read_text().split()] == info["test_ids"]
    rows = [
        [float(v) for v in line.split(",")]
        for line in (out / "features.csv").read_text().splitlines()
    ]
    assert len(rows) == info["n"]
    for row in rows:
        total = sum(row)
        assert total == pytest.approx(1.0, rel=1e-12) or total == 0.0


def test_convert_resolves_shuffled_test_order(tmp_path):
    write_archive(tmp_path / "src", "toy")
    data = load_planetoid(tmp_path / "src", "toy")
    with open(tmp_path / "src" / "ind.toy.tx", "rb") as f:
        tx = pickle.load(f, encoding="latin1").toarray()
    # tx rows follow test.index file order (reversed here): row k lands at
    # node test.index[k], so row 0 belongs to the highest id
    assert np.array_equal(data.features[9].toarray().ravel(), tx[0])
    assert np.array_equal(data.features[7].toarray().ravel(), tx[2])


def test_convert_handles_gapped_test_range(tmp_path):
    info = write_archive(tmp_path / "src", "gappy", with_gap=True)
    manifest = convert(SourceSpec.for_dataset("gappy", tmp_path / "src"), tmp_path / "out")
    assert manifest["num_nodes"] == info["n"]
    rows = (tmp_path / "out" / "features.csv").read_text().splitlines()
    assert all(float(v) == 0.0 for v in rows[9].split(","))  # isolated node
    test_split = [int(v) for v in (tmp_path / "out" / "split_test.txt").read_text().split()]
    assert 9 not in test_split
    assert test_split == info["test_ids"]


def test_edge_tallies_count_raw_and_unique(tmp_path):
    write_archive(tmp_path / "src", "toy")
    data = load_planetoid(tmp_path / "src", "toy")
    directed, undirected, pairs = edge_tallies(data.graph)
    assert directed == sum(len(v) for v in data.graph.values())
    assert len(pairs) == undirected
    assert all(i < j for i, j in pairs)
    assert (0, 2) in pairs and pairs.count((0, 2)) == 1  # dup collapsed
    assert (1, 1) not in pairs  # self-loop dropped
    # ring(10) + chord = 11 unique undirected edges
    assert undirected == 11


def test_conversion_is_byte_idempotent(tmp_path):
    write_archive(tmp_path / "src", "toy")
    spec = SourceSpec.for_dataset("toy", tmp_path / "src")
    convert(spec, tmp_path / "out")
    first = {
        p.name: p.read_bytes() for p in sorted((tmp_path / "out").iterdir())
    }
    convert(spec, tmp_path / "out")
    second = {
        p.name: p.read_bytes() for p in sorted((tmp_path / "out").iterdir())
    }
    assert first == second


def test_stats_mismatch_is_hard_failure(tmp_path):
    write_archive(tmp_path / "src", "toy")
    spec = SourceSpec.for_dataset("toy", tmp_path / "src", expected=(999, 5, 3))
    with pytest.raises(StatsMismatch, match=r"observed.*expected"):
        convert(spec, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_corrupted_source_leaves_no_partial_bundle(tmp_path):
    write_archive(tmp_path / "src", "toy")
    (tmp_path / "src" / "ind.toy.allx").write_bytes(b"\x80garbage")
    with pytest.raises(SourceError):
        convert(SourceSpec.for_dataset("toy", tmp_path / "src"), tmp_path / "out")
    assert not (tmp_path / "out").exists()
    assert not (tmp_path / "out.tmp").exists()


def test_missing_piece_reported(tmp_path):
    write_archive(tmp_path / "src", "toy")
    (tmp_path / "src" / "ind.toy.graph").unlink()
    with pytest.raises(SourceError, match="graph"):
        convert(SourceSpec.for_dataset("toy", tmp_path / "src"), tmp_path / "out")


def test_inconsistent_test_offset_reported(tmp_path):
    write_archive(tmp_path / "src", "toy")
    (tmp_path / "src" / "ind.toy.test.index").write_text("9\n10\n11\n", encoding="utf-8")
    with pytest.raises(SourceError, match="inconsistent"):
        convert(SourceSpec.for_dataset("toy", tmp_path / "src"), tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_bundle_passes_primary_loader_validation(tmp_path):
    """The bundle is consumed through the lab's documented CLI surface."""
    if shutil.which("gcnlab") is None:
        pytest.skip("gcnlab CLI not installed in this environment")
    write_archive(tmp_path / "src", "toy")
    manifest = convert(SourceSpec.for_dataset("toy", tmp_path / "src"), tmp_path / "out")
    proc = subprocess.run(
        ["gcnlab", "inspect", "--dataset", str(tmp_path / "out"), "--hidden", "4"],
        capture_output=True, text=True, check=True,
    )
    fields = dict(
        line.split("=", 1) for line in proc.stdout.splitlines() if "=" in line
    )
    assert int(fields["num_nodes"]) == manifest["num_nodes"]
    assert int(fields["undirected_edges"]) == manifest["undirected_edge_count"]
    # symmetrized degree sum is twice the undirected tally
    assert int(fields["directed_edges"]) == 2 * manifest["undirected_edge_count"]


def test_end_to_end_training_on_converted_bundle(tmp_path):
    if shutil.which("gcnlab") is None:
        pytest.skip("gcnlab CLI not installed in this environment")
    write_archive(tmp_path / "src", "toy")
    convert(SourceSpec.for_dataset("toy", tmp_path / "src"), tmp_path / "out")
    proc = subprocess.run(
        ["gcnlab", "train", "--dataset", str(tmp_path / "out"), "--layers", "2",
         "--hidden", "4", "--epochs", "5", "--dropout", "0", "--seed", "1",
         "--out", str(tmp_path / "run")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "test_acc=" in proc.stdout
    assert (tmp_path / "run" / "metrics.jsonl").is_file()


@pytest.mark.parametrize("name", ["cora", "citeseer", "pubmed"])
def test_acceptance_converter_fidelity_real_archives(name, tmp_path):
    """[SECONDARY] acceptance: real archives convert to the published
    node/feature/class counts, pass loader validation, byte-idempotently."""
    src = os.environ.get("PLANETOID_SRC")
    if not src or not (Path(src) / f"ind.{name}.x").is_file():
        pytest.skip(f"set PLANETOID_SRC to a directory holding ind.{name}.* archives")
    spec = SourceSpec.for_dataset(name, src)
    out = tmp_path / name
    manifest = convert(spec, out)
    expected = {"cora": (2708, 1433, 7), "citeseer": (3327, 3703, 6),
                "pubmed": (19717, 500, 3)}[name]
    assert (manifest["num_nodes"], manifest["num_features"], manifest["num_classes"]) == expected
    first = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    convert(spec, out)
    second = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    assert first == second
    if shutil.which("gcnlab"):
        subprocess.run(
            ["gcnlab", "inspect", "--dataset", str(out)],
            capture_output=True, text=True, check=True,
        )
    print(f"[ACCEPTANCE] converter fidelity {name}: PASS")
