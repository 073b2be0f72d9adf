import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulesat.dataset import (BINARY, CATEGORICAL, CONTINUOUS, GT, LE, ONEHOT, BinaryDataset,
                             BinFeature, DatasetError, FeatureMap, SourceColumn, apply_map,
                             binarize, bundled_path, infer_kind, load_binary_csv, load_csv,
                             make_table, quantile_thresholds, uniform_thresholds)


def test_quantile_example_keeps_one_pair():
    raw = make_table({"x": [1.0, 2.0, 3.0, 4.0]}, [0, 1, 0, 1], kinds={"x": CONTINUOUS})
    data, fmap = binarize(raw, thresholds=2)
    assert quantile_thresholds([1, 2, 3, 4], 2) == [2.0, 4.0]
    assert [(f.transform, f.value) for f in fmap.features] == [(GT, 2.0), (LE, 2.0)]
    assert data.X.tolist() == [[0, 1], [0, 1], [1, 0], [1, 0]]
    assert data.names == ("x > 2.0", "x <= 2.0")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=30), st.integers(1, 12))
def test_quantile_rule_matches_definition(values, q):
    cuts = quantile_thresholds(values, q)
    uniq = sorted(set(values))
    if len(uniq) < q:
        assert cuts == [float(v) for v in uniq]
        return
    expected = set()
    for t in range(1, q + 1):
        p = t / q
        # smallest data value v with fraction(values <= v) >= p, in exact arithmetic
        expected.add(min(v for v in uniq if sum(x <= v for x in values) * q >= t * len(values)))
        assert np.quantile(values, p, method="inverted_cdf") in expected
    assert cuts == sorted(float(v) for v in expected)


def test_uniform_thresholds_are_interior():
    assert uniform_thresholds([0.0, 10.0], 4) == [2.0, 4.0, 6.0, 8.0]
    assert uniform_thresholds([3.0, 3.0], 4) == []


def test_categorical_one_hot():
    raw = make_table({"color": ["red", "green", "blue", "red"]}, [1, 0, 0, 1])
    data, fmap = binarize(raw)
    assert raw.columns[0].kind == CATEGORICAL
    assert [f.value for f in fmap.features] == ["blue", "green", "red"]
    assert data.X.tolist() == [[0, 0, 1], [0, 1, 0], [1, 0, 0], [0, 0, 1]]
    assert data.X.sum(axis=1).tolist() == [1, 1, 1, 1]


def test_binary_column_gets_complement():
    raw = make_table({"b": [0, 1, 1]}, [0, 1, 1])
    data, fmap = binarize(raw)
    assert raw.columns[0].kind == BINARY
    assert data.names == ("b", "not b")
    assert data.X.tolist() == [[0, 1], [1, 0], [1, 0]]


def test_constant_and_duplicate_columns_dropped():
    raw = make_table({"a": [1, 1, 1], "b": [0, 1, 0], "c": [0, 1, 0]}, [0, 1, 0])
    data, _ = binarize(raw)
    assert data.names == ("b", "not b")


def test_binarize_rejects_bad_input():
    with pytest.raises(DatasetError, match="non-numeric"):
        binarize(make_table({"x": ["1", "2", "oops"] + [str(i) for i in range(20)]},
                            [0] * 23, kinds={"x": CONTINUOUS}))
    with pytest.raises(DatasetError, match=">= 1"):
        binarize(make_table({"x": [1, 0]}, [0, 1]), thresholds=0)
    with pytest.raises(DatasetError, match="empty"):
        make_table({"x": []}, [])


def test_missing_value_policy():
    raw = make_table({"x": [0.5, "?", 1.5, 2.5], "c": ["a", "b", "", "a"]}, [0, 1, 0, 1],
                     kinds={"x": CONTINUOUS})
    with pytest.raises(DatasetError, match="rows 1, 2"):
        binarize(raw)
    data, _ = binarize(raw, missing="drop")
    assert data.rows == (0, 3)
    assert data.y.tolist() == [0, 1]


def test_infer_kind():
    assert infer_kind(["0", "1", "1"]) == BINARY
    assert infer_kind(["a", "b", "c"]) == CATEGORICAL
    assert infer_kind(list(range(5))) == CATEGORICAL
    assert infer_kind(list(range(11))) == CONTINUOUS
    assert infer_kind(list(range(11)), max_categories=20) == CATEGORICAL


def test_apply_map_threshold_pair():
    fmap = FeatureMap((SourceColumn("x", CONTINUOUS),), (BinFeature("x", GT, 2.5),
                                                         BinFeature("x", LE, 2.5)))
    assert apply_map(fmap, {"x": 3.0}).tolist() == [1, 0]
    assert apply_map(fmap, ["2.5"]).tolist() == [0, 1]


def test_apply_map_unseen_category_warns():
    raw = make_table({"color": ["red", "green", "blue"]}, [1, 0, 0])
    _, fmap = binarize(raw)
    with pytest.warns(UserWarning, match="unseen category"):
        row = apply_map(fmap, {"color": "purple"})
    assert row.tolist() == [0, 0, 0]


def test_apply_map_errors():
    raw = make_table({"x": [1, 0, 1]}, [1, 0, 1])
    _, fmap = binarize(raw)
    with pytest.raises(DatasetError, match="lacks"):
        apply_map(fmap, {"y": 1})
    with pytest.raises(DatasetError, match="missing"):
        apply_map(fmap, {"x": ""})


def test_feature_map_pairing_enforced():
    with pytest.raises(DatasetError, match="partner"):
        FeatureMap((SourceColumn("x", CONTINUOUS),), (BinFeature("x", GT, 1.0),))
    with pytest.raises(DatasetError, match="duplicate"):
        FeatureMap((SourceColumn("x", CATEGORICAL, ("a",)),),
                   (BinFeature("x", ONEHOT, "a"), BinFeature("x", ONEHOT, "a")))


def _random_table(draw_rows):
    rows, labels = draw_rows
    cols = {"num": [r[0] for r in rows], "cat": [r[1] for r in rows],
            "flag": [r[2] for r in rows]}
    return make_table(cols, labels, kinds={"num": CONTINUOUS, "cat": CATEGORICAL,
                                           "flag": BINARY})


rows_strategy = st.integers(2, 25).flatmap(lambda n: st.tuples(
    st.lists(st.tuples(st.floats(-100, 100, allow_nan=False).map(lambda v: round(v, 2)),
                       st.sampled_from(["a", "b", "c", "d"]),
                       st.integers(0, 1)), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@settings(max_examples=80, deadline=None)
@given(rows_strategy, st.integers(1, 6), st.sampled_from(["quantile", "uniform"]))
def test_binarize_properties(rows, q, strategy):
    raw = _random_table(rows)
    try:
        data, fmap = binarize(raw, q, strategy)
    except DatasetError as exc:
        assert "no informative feature" in str(exc)
        return
    # round trip
    for i in range(raw.n_rows):
        assert apply_map(fmap, raw.row(i)).tolist() == data.X[i].tolist()
    # no constant or duplicate columns
    assert all(0 < s < data.n for s in data.X.sum(axis=0))
    assert len({data.X[:, j].tobytes() for j in range(data.m)}) == data.m
    # pairing: every threshold has both directions and they are complements
    idx = {(f.column, f.transform, f.value): j for j, f in enumerate(fmap.features)}
    for (col, tr, v), j in idx.items():
        if tr == GT:
            assert np.array_equal(data.X[:, j], 1 - data.X[:, idx[(col, LE, v)]])
    # one-hot groups sum to one on seen values
    cat = [j for j, f in enumerate(fmap.features) if f.transform == ONEHOT]
    if cat and len(cat) == len(fmap.columns[1].categories):
        assert (data.X[:, cat].sum(axis=1) == 1).all()
    # determinism
    data2, fmap2 = binarize(raw, q, strategy)
    assert np.array_equal(data.X, data2.X) and fmap == fmap2
    # serialization
    assert FeatureMap.from_dict(json.loads(json.dumps(fmap.to_dict()))) == fmap


def test_load_csv_numeric_feature(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,y\n" + "".join(f"{v / 3:.3f},{v % 2}\n" for v in range(12)))
    raw = load_csv(p, "y")
    assert raw.names == ["x"]
    assert raw.columns[0].kind == CONTINUOUS
    assert raw.labels[:3] == (0, 1, 0)


def test_load_csv_label_mapping(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f,ok\n1,yes\n0,no\n1,yes\n")
    assert load_csv(p, "ok", positive="yes").labels == (1, 0, 1)
    with pytest.raises(DatasetError, match="positive"):
        load_csv(p, "ok")


def test_load_csv_infers_categorical(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("colour;y\nred;1\ngreen;0\nblue;0\n")
    assert load_csv(p, "y", delimiter=";").columns[0].kind == CATEGORICAL


def test_load_csv_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b\n1,0\n")
    with pytest.raises(DatasetError, match="label column 'y'"):
        load_csv(p, "y")
    p.write_text("a,b\n1,0,3\n")
    with pytest.raises(DatasetError, match="line 2"):
        load_csv(p, "b")
    with pytest.raises(DatasetError, match="cannot read"):
        load_csv(tmp_path / "absent.csv", "b")


def test_binary_dataset_validation_and_csv(tmp_path):
    with pytest.raises(DatasetError):
        BinaryDataset([[2]], [0], ("a",))
    with pytest.raises(DatasetError):
        BinaryDataset([[1, 0]], [0, 1], ("a", "b"))
    d = BinaryDataset([[1, 0], [0, 1]], [1, 0], ("a", "b"))
    assert not d.X.flags.writeable
    d.save_csv(tmp_path / "d.csv")
    back = load_binary_csv(tmp_path / "d.csv", "label")
    assert np.array_equal(back.X, d.X) and back.names == d.names


def test_bundled_iris():
    raw = load_csv(bundled_path("iris"), "species", positive="versicolor")
    assert raw.n_rows == 150 and sum(raw.labels) == 50
    data, fmap = binarize(raw)
    assert data.m == len(fmap) and data.m <= 4 * 2 * 10
    with pytest.raises(DatasetError):
        bundled_path("nope")
