import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coda.embeddings import (
    group_by_class,
    load_embeddings,
    make_embedding_set,
    save_embeddings,
    sidecar_path,
)
from coda.errors import (
    DuplicateSampleId,
    MalformedHeader,
    MissingLabels,
    NonFiniteValue,
    UnknownClass,
)


def small_set():
    vectors = np.array([[0.5, 1.5], [2.0, -1.0], [3.25, 0.0], [-7.0, 4.5]], dtype=np.float32)
    return make_embedding_set(vectors, ["a", "b", "c", "d"], [1, 2, 1, 2])


def test_binary_round_trip_bit_exact(tmp_path):
    emb = small_set()
    path = tmp_path / "e.bin"
    save_embeddings(emb, path)
    back = load_embeddings(path, "binary")
    assert back.n == 4 and back.dim == 2
    assert back.vectors.tobytes() == emb.vectors.tobytes()
    assert back.sample_ids == emb.sample_ids
    assert np.array_equal(back.labels, emb.labels)


def test_header_row_count_mismatch(tmp_path):
    emb = small_set()
    path = tmp_path / "e.bin"
    save_embeddings(emb, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])  # drop one row's worth of payload
    with pytest.raises(MalformedHeader):
        load_embeddings(path, "binary")


def test_bad_magic(tmp_path):
    path = tmp_path / "e.bin"
    save_embeddings(small_set(), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(MalformedHeader):
        load_embeddings(path, "binary")


def test_csv_round_trip_and_nan(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("1.0,2.0\n3.0,4.0\n")
    sidecar_path(path).write_text(json.dumps({"sample_ids": ["x", "y"], "labels": [1, 1]}))
    emb = load_embeddings(path, "csv")
    assert emb.n == 2 and emb.dim == 2

    path.write_text("1.0,2.0\nnan,4.0\n")
    with pytest.raises(NonFiniteValue):
        load_embeddings(path, "csv")


def test_missing_sidecar(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("1.0,2.0\n")
    with pytest.raises(MissingLabels):
        load_embeddings(path, "csv")


def test_duplicate_ids_rejected():
    with pytest.raises(DuplicateSampleId):
        make_embedding_set(np.zeros((2, 2), dtype=np.float32), ["a", "a"], [1, 1])


def test_group_by_class_filters_rows():
    emb = small_set()
    view = group_by_class(emb, 1)
    assert list(view.rows) == [0, 2]
    assert view.sample_ids == ("a", "c")
    with pytest.raises(UnknownClass):
        group_by_class(emb, 3)


@given(
    labels=st.lists(st.integers(min_value=1, max_value=10), min_size=1, max_size=60),
    dim=st.integers(min_value=1, max_value=5),
)
@settings(max_examples=50, deadline=None)
def test_class_views_partition_rows(labels, dim):
    n = len(labels)
    vectors = np.arange(n * dim, dtype=np.float32).reshape(n, dim)
    emb = make_embedding_set(vectors, [f"s{i}" for i in range(n)], labels)
    seen = []
    for c in emb.classes:
        view = group_by_class(emb, c)
        assert all(emb.labels[r] == c for r in view.rows)
        seen.extend(view.rows.tolist())
    assert sorted(seen) == list(range(n))
