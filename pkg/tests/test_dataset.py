import json

import numpy as np
import pytest

from sensilogit.dataset import (NINE_TO_FIVE, CollapseMap, CsvSchema, HedonicScale, Observation,
                                OrdinalDataset, collapse_scale, contingency_table, dummy_encode,
                                load_csv, write_csv)
from sensilogit.errors import DataError


def _ds(obs, T=2, L=2, J=5):
    return OrdinalDataset(tuple(Observation(*o) for o in obs), HedonicScale.numeric(J),
                          tuple(f"F{i}" for i in range(1, T + 1)),
                          tuple(f"A{i}" for i in range(1, L + 1)))


def test_nine_to_five_collapse():
    assert [NINE_TO_FIVE(j) for j in range(1, 10)] == [1, 1, 2, 2, 3, 4, 4, 5, 5]
    np.testing.assert_array_equal(NINE_TO_FIVE.as_array()[1:], [1, 1, 2, 2, 3, 4, 4, 5, 5])


@pytest.mark.parametrize("mapping, msg", [
    ({1: 1, 2: 2, 3: 2}, "not surjective"),
    ({1: 1, 2: 3, 3: 2}, "not monotone"),
    ({1: 1, 2: 2}, "not total"),
])
def test_collapse_map_rejects(mapping, msg):
    with pytest.raises(DataError, match=msg):
        CollapseMap(3, 3, mapping)


def test_collapse_from_json_string():
    cm = CollapseMap.from_json(json.dumps({str(k): v for k, v in NINE_TO_FIVE.mapping.items()}))
    assert cm == NINE_TO_FIVE


def test_collapse_dataset():
    ds = _ds([("a", 1, 1, 9), ("a", 2, 1, 5), ("b", 1, 2, 2)], J=9)
    out = collapse_scale(ds, NINE_TO_FIVE)
    assert out.J == 5
    assert [o.response for o in out.observations] == [5, 3, 1]


def test_collapse_wrong_scale():
    with pytest.raises(DataError, match="9-point"):
        collapse_scale(_ds([("a", 1, 1, 3)]), NINE_TO_FIVE)


def test_response_out_of_range():
    with pytest.raises(DataError, match="response out of range"):
        _ds([("a", 1, 1, 6)])


def test_duplicate_triple():
    with pytest.raises(DataError, match="duplicate"):
        _ds([("a", 1, 1, 3), ("a", 1, 1, 4)])


def test_dummy_encode_default_reference_is_first_level():
    ds = _ds([("a", 1, 1, 3), ("a", 2, 2, 4)], T=3)
    dm = dummy_encode(ds)
    assert dm.references == {"formulation": "F1", "attribute": "A1"}
    assert dm.columns["formulation"] == ("F2", "F3")
    np.testing.assert_array_equal(dm.blocks["formulation"], [[0, 0], [1, 0]])
    assert dm.decode(1) == {"formulation": "F2", "attribute": "A2"}


def test_dummy_encode_custom_reference():
    ds = _ds([("a", 1, 1, 3), ("a", 2, 2, 4)], T=3, L=3)
    dm = dummy_encode(ds, {"attribute": "A3"})
    assert dm.columns["attribute"] == ("A1", "A2")
    np.testing.assert_array_equal(dm.blocks["attribute"], [[1, 0], [0, 1]])
    assert dm.column_labels[:2] == ["formulation:F2", "formulation:F3"]


def test_dummy_encode_unknown_level():
    with pytest.raises(DataError, match="unknown formulation level"):
        dummy_encode(_ds([("a", 1, 1, 3)]), {"formulation": "F9"})


def test_contingency_table():
    ds = _ds([("a", 1, 1, 3), ("b", 1, 1, 3), ("a", 2, 1, 5), ("a", 2, 2, 1)])
    tab = contingency_table(ds, "A1")
    np.testing.assert_array_equal(tab, [[0, 0, 2, 0, 0], [0, 0, 0, 0, 1]])


def test_csv_roundtrip(tmp_path, small_ds):
    p = tmp_path / "d.csv"
    write_csv(small_ds, p)
    back = load_csv(p, CsvSchema(formulation_order=small_ds.formulations,
                                 attribute_order=small_ds.attributes))
    assert back.observations == small_ds.observations
    assert back.fingerprint() == small_ds.fingerprint()


def test_csv_missing_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("panellist,formulation,response\na,F1,3\n")
    with pytest.raises(DataError, match="missing column 'attribute'"):
        load_csv(p)


def test_csv_bad_response(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("panellist,formulation,attribute,response\na,F1,x,7\n")
    with pytest.raises(DataError, match="line 2: response out of range"):
        load_csv(p)


def test_select_attribute(small_ds):
    sub = small_ds.select_attribute("A2")
    assert sub.attributes == ("A2",)
    assert all(o.attribute == 1 for o in sub.observations)
    assert len(sub) == sum(o.attribute == 2 for o in small_ds.observations)
