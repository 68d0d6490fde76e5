import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gprsparse import io
from gprsparse.data import BScan, Dictionary, LabeledDataset, SparseCodeMatrix

finite = st.floats(-1e300, 1e300, allow_nan=False)


def small_dataset(rng, M=7, L=5):
    return LabeledDataset(rng.standard_normal((M, L)), rng.integers(0, 3, L), ("a", "b", "cé"))


def test_container_layout_by_hand(tmp_path):
    ds = LabeledDataset(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]), [1, 0], ("x", "yz"))
    raw = io.dataset_bytes(ds)
    expected = (b"SGPR" + struct.pack("<HIIH", 1, 3, 2, 2)
                + struct.pack("<H", 1) + b"x" + struct.pack("<H", 2) + b"yz"
                + struct.pack("<6d", 1.0, 3.0, 5.0, 2.0, 4.0, 6.0)
                + struct.pack("<2H", 1, 0))
    assert raw == expected


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_dataset_roundtrip_is_lossless(Y):
    import tempfile
    from pathlib import Path

    labels = np.arange(Y.shape[1]) % 2
    ds = LabeledDataset(Y, labels, ("clutter", "mine"))
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "x.sgpr"
        io.write_dataset(p, ds)
        back = io.read_dataset(p)
    assert np.array_equal(back.Y, ds.Y) and np.array_equal(back.labels, ds.labels)
    assert back.class_names == ds.class_names


def test_dictionary_and_bscan_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    D = Dictionary(rng.standard_normal((6, 4)), {"algorithm": "ksvd", "seed": 3})
    io.write_dictionary(tmp_path / "d.sgpr", D)
    back = io.read_dictionary(tmp_path / "d.sgpr")
    assert np.array_equal(back.D, D.D) and back.provenance == D.provenance

    b = BScan(rng.standard_normal((8, 3)), 25e-12, 0.01, meta={"x0": 0.1})
    io.write_bscan(tmp_path / "b.sgpr", b)
    bb = io.read_bscan(tmp_path / "b.sgpr")
    assert np.array_equal(bb.data, b.data) and bb.dt == b.dt and bb.dx == b.dx
    assert np.array_equal(bb.positions, b.positions) and bb.meta == b.meta


def test_kind_mismatch_and_corruption(tmp_path):
    rng = np.random.default_rng(1)
    io.write_dataset(tmp_path / "ds.sgpr", small_dataset(rng))
    with pytest.raises(io.FormatError):
        io.read_dictionary(tmp_path / "ds.sgpr")
    raw = (tmp_path / "ds.sgpr").read_bytes()
    (tmp_path / "bad.sgpr").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(io.FormatError, match="magic"):
        io.read_dataset(tmp_path / "bad.sgpr")
    (tmp_path / "short.sgpr").write_bytes(raw[:-5])
    with pytest.raises(io.FormatError, match="truncated"):
        io.read_dataset(tmp_path / "short.sgpr")
    (tmp_path / "long.sgpr").write_bytes(raw + b"\0")
    with pytest.raises(io.FormatError, match="trailing"):
        io.read_dataset(tmp_path / "long.sgpr")
    with pytest.raises(FileNotFoundError, match="missing.sgpr"):
        io.read_dataset(tmp_path / "missing.sgpr")


def test_labeled_file_reads_as_bscan(tmp_path):
    ds = small_dataset(np.random.default_rng(2))
    io.write_dataset(tmp_path / "ds.sgpr", ds)
    b = io.read_bscan(tmp_path / "ds.sgpr")
    assert np.array_equal(b.data, ds.Y)


def test_dataset_csv_roundtrip(tmp_path):
    ds = small_dataset(np.random.default_rng(3))
    io.write_dataset_csv(tmp_path / "ds.csv", ds)
    back = io.read_dataset_csv(tmp_path / "ds.csv", class_names=ds.class_names)
    assert np.array_equal(back.Y, ds.Y) and np.array_equal(back.labels, ds.labels)
    first = (tmp_path / "ds.csv").read_text().splitlines()[0].split(",")
    assert len(first) == ds.M + 1 and first[-1] == ds.class_names[ds.labels[0]]


def test_codes_roundtrip(tmp_path):
    X = np.zeros((5, 3))
    X[1, 0], X[4, 0], X[0, 2] = 0.1, -2.5, 1 / 3
    codes = SparseCodeMatrix(X, np.zeros(3))
    io.write_codes(tmp_path / "c.csv", codes)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[:3] == ["# K=5 L=3", "column,atom,value", "0,1,0.1"]
    assert np.array_equal(io.read_codes(tmp_path / "c.csv"), X)


def test_matrix_csv_roundtrip(tmp_path):
    A = np.random.default_rng(4).standard_normal((3, 4))
    io.write_matrix_csv(tmp_path / "m.csv", A, header=list("abcd"))
    back, head = io.read_matrix_csv(tmp_path / "m.csv", header=True)
    assert np.array_equal(back, A) and head == list("abcd")
