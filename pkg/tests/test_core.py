import math

import numpy as np
import pytest

from alphasens import core
from alphasens.errors import (ConstantColumn, DegenerateTarget, DimensionMismatch, NonFinite, SchemaError,
                              ValidationError)


def test_standardize_three_points():
    data = core.Dataset(np.array([[1.0], [2.0], [3.0]]), ["a"])
    out, params = core.standardize(data)
    np.testing.assert_allclose(out.features[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)
    assert params.mean[0] == 2.0 and params.std[0] == 1.0


def test_standardize_is_idempotent_on_standardized_data(rng):
    data = core.Dataset(rng.standard_normal((200, 3)), ["a", "b", "c"])
    once, _ = core.standardize(data)
    twice, _ = core.standardize(once)
    np.testing.assert_allclose(twice.features, once.features, atol=1e-12)


def test_standardize_large_sample_moments():
    x = np.random.default_rng(0).standard_normal((50_000, 2))
    out, _ = core.standardize(core.Dataset(x, ["a", "b"]))
    assert np.all(np.abs(out.features.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(out.features.std(axis=0, ddof=1) - 1) < 1e-10)


def test_standardize_roundtrip(rng):
    data = core.Dataset(rng.normal(5, 3, (100, 4)), list("abcd"))
    out, params = core.standardize(data)
    np.testing.assert_allclose(params.inverse_transform(out).features, data.features, atol=1e-10)


def test_standardize_is_permutation_equivariant(rng):
    x = rng.standard_normal((50, 3))
    perm = rng.permutation(50)
    a, _ = core.standardize(core.Dataset(x, list("abc")))
    b, _ = core.standardize(core.Dataset(x[perm], list("abc")))
    np.testing.assert_allclose(a.features[perm], b.features, atol=1e-12)


def test_constant_column_rejected():
    with pytest.raises(ConstantColumn) as info:
        core.standardize(core.Dataset(np.array([[1.0, 2.0], [1.0, 3.0]]), ["a", "b"]))
    assert info.value.column == 0


def test_rescale_target_examples():
    scaled, lo, hi = core.rescale_target([2.0, 4.0, 6.0])
    np.testing.assert_allclose(scaled, [0, 0.5, 1])
    assert (lo, hi) == (2.0, 6.0)
    np.testing.assert_allclose(core.rescale_target([0.0, 1.0])[0], [0, 1])


def test_rescale_target_is_affine_and_order_preserving(rng):
    v = rng.normal(3, 10, 500)
    w, _, _ = core.rescale_target(v)
    assert abs(np.corrcoef(v, w)[0, 1] - 1) < 1e-12
    assert np.array_equal(np.argsort(v, kind="stable"), np.argsort(w, kind="stable"))
    assert w.min() == 0 and w.max() == 1


def test_degenerate_target():
    with pytest.raises(DegenerateTarget):
        core.rescale_target([1.0, 1.0])


def test_dataset_rejects_bad_input():
    with pytest.raises(NonFinite):
        core.Dataset(np.array([[np.nan]]), ["a"])
    with pytest.raises(ValidationError):
        core.Dataset(np.ones((2, 2)), ["a", "a"])
    with pytest.raises(ValidationError):
        core.Dataset(np.ones((0, 2)), ["a", "b"])


def test_dataset_is_immutable():
    data = core.Dataset(np.ones((2, 2)), ["a", "b"])
    with pytest.raises(ValueError):
        data.features[0, 0] = 5.0


def test_norm_pair():
    assert core.NormPair(2, math.inf).q == math.inf
    with pytest.raises(ValidationError):
        core.NormPair(0.5, 2)
    assert core.parse_norm("inf") == math.inf
    assert core.format_norm(math.inf) == "inf"


def test_csv_roundtrip(tmp_path, rng):
    data = core.Dataset(rng.standard_normal((5, 2)), ["x 1", "y,2"], rng.standard_normal(5), "t")
    path = tmp_path / "d.csv"
    core.write_csv(path, data)
    back = core.read_csv(path, "t")
    assert back.feature_names == data.feature_names
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.target, data.target)


def test_csv_accepts_scientific_notation(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text('a,"b"\n1e-3,2.5E2\n-4,5\n')
    data = core.read_csv(path)
    np.testing.assert_array_equal(data.features, [[1e-3, 250.0], [-4, 5]])


def test_csv_errors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,x\n")
    with pytest.raises(ValidationError):
        core.read_csv(path)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        core.read_csv(path, "missing")


def test_jacobian_csv_and_json(tmp_path, rng):
    single = core.JacobianTensor(rng.standard_normal((4, 1, 3)), ["a", "b", "c"])
    core.write_jacobian(tmp_path / "j.csv", single)
    back = core.read_jacobian(tmp_path / "j.csv")
    assert np.array_equal(back.values, single.values) and back.feature_names == single.feature_names

    multi = core.JacobianTensor(rng.standard_normal((4, 2, 3)))
    core.write_jacobian(tmp_path / "j.json", multi)
    back = core.read_jacobian(tmp_path / "j.json")
    assert np.array_equal(back.values, multi.values)
    assert back.n_samples == 4 and back.n_outputs == 2 and back.n_features == 3


def test_jacobian_json_shape_check():
    with pytest.raises((SchemaError, DimensionMismatch)):
        core.jacobian_from_json({"n_samples": 2, "n_outputs": 1, "n_features": 1, "values": [[[1.0]]]})
