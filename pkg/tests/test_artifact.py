import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cgpcm.artifact import artifact_hash, load_artifact, read_csv, read_series, save_artifact, write_csv


@given(arrays(np.float64, st.tuples(st.integers(0, 4), st.integers(1, 3)), elements=st.floats(allow_nan=False)))
@settings(max_examples=30, deadline=None)
def test_arrays_round_trip_bit_exactly(tmp_path_factory, a):
    d = tmp_path_factory.mktemp("art")
    digest = save_artifact(d, {"k": 1}, {"a": a, "s": np.float64(2.5)})
    meta, out = load_artifact(d)
    assert meta == {"k": 1}
    np.testing.assert_array_equal(out["a"], a)
    assert out["s"].shape == () and out["s"] == 2.5
    assert artifact_hash(d) == digest


def test_truncated_blob_is_rejected(tmp_path):
    save_artifact(tmp_path, {}, {"a": np.arange(4.0)})
    (tmp_path / "a.f64").write_bytes(b"\0" * 8)
    with pytest.raises(ValueError, match="bytes"):
        load_artifact(tmp_path)
    with pytest.raises(ValueError, match="model.json"):
        load_artifact(tmp_path / "nowhere")


def test_hash_changes_with_content(tmp_path):
    h1 = save_artifact(tmp_path / "a", {"x": 1}, {"a": np.zeros(2)})
    h2 = save_artifact(tmp_path / "b", {"x": 2}, {"a": np.zeros(2)})
    h3 = save_artifact(tmp_path / "c", {"x": 1}, {"a": np.ones(2)})
    assert len({h1, h2, h3}) == 3
    assert json.loads((tmp_path / "a" / "model.json").read_text())["arrays"]["a"]["shape"] == [2]


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
@settings(max_examples=30, deadline=None)
def test_csv_round_trip_is_lossless(tmp_path_factory, xs):
    p = tmp_path_factory.mktemp("csv") / "x.csv"
    write_csv(p, {"t": np.arange(len(xs), dtype=float), "y": xs})
    cols = read_csv(p, required=["t", "y"])
    np.testing.assert_array_equal(cols["y"], np.asarray(xs))


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,y\n0,1\n1,abc\n2\n3,nan\n")
    with pytest.raises(ValueError) as err:
        read_csv(p)
    msg = str(err.value)
    assert "row 3" in msg and "row 4" in msg and "row 5" in msg
    p.write_text("t,z\n0,1\n")
    with pytest.raises(ValueError, match="missing column"):
        read_series(p)
    p.write_text("t,y\n0,1\n2,1\n1,1\n")
    with pytest.raises(ValueError, match="increasing"):
        read_series(p)
    with pytest.raises(ValueError):
        write_csv(tmp_path / "r.csv", {"a": [1.0], "b": [1.0, 2.0]})
