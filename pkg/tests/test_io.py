import io as _io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlmfm import io
from mlmfm.errors import DegenerateSeriesError, IngestError
from mlmfm.types import GroupedPanel


def fixture_frame():
    rows = []
    for g in ("a", "b"):
        for t in range(3):
            for r in ("x", "y"):
                for c in ("u", "v"):
                    val = (0 if g == "a" else 100) + 10 * t + (0 if r == "x" else 2) + (0 if c == "u" else 1)
                    rows.append((g, f"2020-0{t + 1}", r, c, float(val)))
    return pd.DataFrame(rows, columns=io.PANEL_COLUMNS)


def test_ingest_fixture():
    df = fixture_frame()
    assert len(df) == 24
    panel, man = io.ingest_frame(df.sample(frac=1.0, random_state=0).sort_values("group", kind="stable"))
    assert man.groups == ["a", "b"]
    assert panel.M == 2 and panel.T == 3 and panel.sizes == (2, 2) and panel.p == 2
    # orderings follow first appearance, so reindex against the manifest
    a = panel[0]
    t = man.times.index("2020-02")
    r = man.rows["a"].index("y")
    c = man.cols.index("v")
    assert a[t, r, c] == 10 + 2 + 1
    assert panel[1][man.times.index("2020-03"), man.rows["b"].index("x"), man.cols.index("u")] == 120


def test_ingest_first_appearance_order():
    panel, man = io.ingest_frame(fixture_frame())
    assert man.times == ["2020-01", "2020-02", "2020-03"]
    assert man.rows == {"a": ["x", "y"], "b": ["x", "y"]} and man.cols == ["u", "v"]
    np.testing.assert_array_equal(panel[0][0], [[0, 1], [2, 3]])


def test_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(IngestError, match="no rows"):
        io.ingest_csv(p)
    p.write_text("group,time,row_id,col_id,value\n")
    with pytest.raises(IngestError, match="no rows"):
        io.ingest_csv(p)


def test_duplicates_rejected():
    df = fixture_frame()
    with pytest.raises(IngestError, match="duplicate"):
        io.ingest_frame(pd.concat([df, df.iloc[[5]]]))


def test_gaps_listed():
    df = fixture_frame().drop(index=[3, 7])
    with pytest.raises(IngestError, match=r"missing grid cells \(first 2\)"):
        io.ingest_frame(df)


def test_missing_columns():
    with pytest.raises(IngestError, match="missing columns"):
        io.ingest_frame(fixture_frame().drop(columns="value"))


def test_missing_value_policies():
    df = fixture_frame()
    df.loc[(df.group == "a") & (df.time == "2020-02") & (df.row_id == "x") & (df.col_id == "u"), "value"] = np.nan
    with pytest.raises(IngestError, match="missing or non-numeric"):
        io.ingest_frame(df)
    filled, _ = io.ingest_frame(df, missing="ffill")
    assert filled[0][1, 0, 0] == filled[0][0, 0, 0]
    dropped, man = io.ingest_frame(df, missing="drop")
    assert dropped.T == 2 and man.times == ["2020-01", "2020-03"]


@settings(max_examples=25, deadline=None)
@given(arrays(float, (3, 2, 2), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_csv_round_trip_bit_for_bit(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("rt") / "panel.csv"
    panel = GroupedPanel.from_arrays([a, -a[:, :1]])
    io.write_panel_csv(panel, path)
    back, _ = io.ingest_csv(path)
    for m in range(2):
        # byte equality also distinguishes -0.0 from 0.0
        assert np.ascontiguousarray(back[m]).tobytes() == np.ascontiguousarray(panel[m]).tobytes()


def test_round_trip_preserves_labels(tmp_path):
    panel, man = io.ingest_frame(fixture_frame())
    io.write_panel_csv(panel, tmp_path / "p.csv", man)
    back, man2 = io.ingest_csv(tmp_path / "p.csv")
    assert man2 == man
    np.testing.assert_array_equal(back[1], panel[1])


def test_difference_examples():
    T = 6
    const = GroupedPanel.from_arrays([np.full((T, 2, 2), 3.0)] * 2)
    d = io.difference(const)
    assert d.T == T - 1 and not d[0].any()
    ramp = np.arange(T, dtype=float)[:, None, None] * np.ones((1, 2, 3))
    np.testing.assert_array_equal(io.difference(GroupedPanel.from_arrays([ramp, ramp]))[0], 1.0)


def test_standardize(rng):
    panel = GroupedPanel.from_arrays([5 + 3 * rng.standard_normal((50, 3, 2)) for _ in range(2)])
    z = io.standardize(panel)
    for m in range(2):
        np.testing.assert_allclose(z[m].mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(z[m].std(axis=0), 1, atol=1e-12)


def test_standardize_zero_variance_names_series(rng):
    a = rng.standard_normal((10, 3, 2))
    a[:, 1, 0] = 4.0
    with pytest.raises(DegenerateSeriesError, match="group g2, row 1, col 0"):
        io.standardize(GroupedPanel.from_arrays([rng.standard_normal((10, 3, 2)), a]))


def test_preprocess_order():
    ramp = np.arange(5, dtype=float)[:, None, None] ** 2 * np.ones((1, 2, 2))
    panel = GroupedPanel.from_arrays([ramp, ramp + 1])
    out = io.preprocess(panel, ["difference", "standardize"])
    assert out.T == 4
    with pytest.raises(ValueError):
        io.preprocess(panel, ["smooth"])


def test_write_csv_dialect(tmp_path):
    io.write_csv(pd.DataFrame({"a": [1.5, 2.0], "b": ["x", "y"]}), tmp_path / "o.csv")
    raw = (tmp_path / "o.csv").read_bytes()
    assert raw == b"a,b\n1.5,x\n2.0,y\n"
