import numpy as np
import pytest
from hypothesis import given, strategies as st

from advrgraph.errors import NotFoundError
from advrgraph.store import Store, array_digest, canonical_json, digest_of


def test_sorted_keys_and_float_format():
    doc = {"b": 0.5, "a": [1, 2.0, 0.3333333333], "c": {"y": 1e-7, "x": None}}
    assert canonical_json(doc) == '{"a":[1,2,0.333333],"b":0.5,"c":{"x":null,"y":1e-07}}'


def test_negative_zero_collapses():
    assert canonical_json(-0.0) == "0"


def test_six_significant_digits():
    assert canonical_json(1234567.0) == "1.23457e+06"
    assert canonical_json(0.000123456789) == "0.000123457"


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        canonical_json(float("nan"))
    with pytest.raises(ValueError):
        canonical_json({"x": float("inf")})


def test_bool_and_int_rendering():
    assert canonical_json({"t": True, "n": 3}) == '{"n":3,"t":true}'


@given(st.dictionaries(st.text(st.characters(codec="ascii"), max_size=8),
                       st.floats(allow_nan=False, allow_infinity=False, width=32),
                       max_size=6))
def test_digest_stable_under_key_order(d):
    items = list(d.items())
    assert digest_of(dict(items)) == digest_of(dict(reversed(items)))


def test_store_roundtrip(tmp_path):
    store = Store(tmp_path)
    key = store.put_json({"v": 1.25})
    assert store.has(key)
    assert store.get_json(key) == {"v": 1.25}
    assert store.get_bytes(key) == b'{"v":1.25}'


def test_store_append_only_conflict(tmp_path):
    store = Store(tmp_path)
    store.put_json_at("k" * 64, {"v": 1})
    store.put_json_at("k" * 64, {"v": 1})  # same bytes: fine
    with pytest.raises(ValueError):
        store.put_json_at("k" * 64, {"v": 2})


def test_store_missing_key(tmp_path):
    with pytest.raises(NotFoundError):
        Store(tmp_path).get_bytes("0" * 64)


def test_array_archive_content_addressed(tmp_path):
    store = Store(tmp_path)
    arrays = {"images": np.arange(12.0).reshape(3, 4), "ids": np.array([1, 2, 3])}
    k1 = store.put_arrays(arrays)
    k2 = store.put_arrays({k: v.copy() for k, v in arrays.items()})
    assert k1 == k2 == array_digest(arrays)
    out = store.get_arrays(k1)
    np.testing.assert_array_equal(out["images"], arrays["images"])


def test_array_digest_sensitive_to_shape():
    a = np.arange(6.0)
    assert array_digest({"x": a.reshape(2, 3)}) != array_digest({"x": a.reshape(3, 2)})
