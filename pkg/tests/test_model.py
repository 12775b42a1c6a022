import numpy as np
import pytest
from hypothesis import given, strategies as st

from prefixcube import scales
from prefixcube.model import (
    DescriptorConfig,
    DimensionSpec,
    FeatureDescriptor,
    Measure,
    Range,
    Schema,
    UnsupportedMeasureError,
    auto_scale_count,
    bin_indices,
    descriptor_add,
    descriptor_sub,
    estimate_measure,
    is_empty,
    measure_grid,
)

AGG2 = DescriptorConfig("aggregate", 2, "v")
HIST = DescriptorConfig("histogram", 2, "v")


def fd(values):
    return FeatureDescriptor("aggregate", tuple(values))


# -- descriptor algebra ------------------------------------------------------


def test_descriptor_add_zero_identity():
    out = descriptor_add(fd([1, 2]), fd([0, 0]))
    np.testing.assert_array_equal(out.as_array(), [1, 2])


def test_descriptor_add_elementwise():
    out = descriptor_add(fd([1, 2]), fd([3, 4]))
    np.testing.assert_array_equal(out.as_array(), [4, 6])


@given(st.lists(st.integers(min_value=0, max_value=10**9), min_size=1, max_size=8).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.integers(min_value=0, max_value=10**9),
                                             min_size=len(a), max_size=len(a)))))
def test_descriptor_add_then_sub_roundtrips(pair):
    a, b = (fd(x) for x in pair)
    back = descriptor_sub(descriptor_add(a, b), b)
    np.testing.assert_array_equal(back.as_array(), a.as_array())


def test_descriptor_length_mismatch_rejected():
    with pytest.raises(ValueError):
        descriptor_add(fd([1, 2]), fd([1, 2, 3]))


def test_descriptor_kind_mismatch_rejected():
    with pytest.raises(ValueError):
        descriptor_add(fd([1, 2]), FeatureDescriptor("histogram", (1, 2)))


# -- measure estimation -------------------------------------------------------


def test_mean_from_aggregate():
    assert estimate_measure([10, 50], Measure("mean", "v"), AGG2) == 5.0


def test_sum_and_count_from_aggregate():
    assert estimate_measure([10, 50], Measure("sum", "v"), AGG2) == 50.0
    assert estimate_measure([10, 50], Measure("count"), AGG2) == 10.0


def test_mean_of_empty_cell_is_empty():
    assert is_empty(estimate_measure([0, 0], Measure("mean", "v"), AGG2))


def test_median_symmetric_mass_midpoint():
    v = estimate_measure([4, 4], Measure("median", "v"), HIST,
                         hist_edges=np.array([0.0, 1.0, 2.0]))
    assert v == 1.0


def test_median_within_one_bin_of_sorted_oracle():
    rng = np.random.default_rng(4)
    samples = rng.uniform(3.0, 11.0, size=1000)
    bins = 16
    edges = np.linspace(3.0, 11.0, bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    cfg = DescriptorConfig("histogram", bins, "v")
    est = estimate_measure(counts, Measure("median", "v"), cfg, hist_edges=edges)
    width = edges[1] - edges[0]
    assert abs(est - np.median(samples)) <= width


def test_measure_grid_shapes_and_empty_cells():
    table = np.array([[[2.0, 8.0], [0.0, 0.0]]])  # (1, 2, B)
    out = measure_grid(table, Measure("mean", "v"), AGG2)
    assert out.shape == (1, 2)
    assert out[0, 0] == 4.0 and is_empty(out[0, 1])


def test_measure_descriptor_mismatch_raises():
    with pytest.raises(UnsupportedMeasureError):
        Measure("median", "v").validate_against(AGG2)
    with pytest.raises(UnsupportedMeasureError):
        Measure("mean", "v").validate_against(DescriptorConfig("aggregate", 1))
    with pytest.raises(UnsupportedMeasureError):
        Measure("sum", "other").validate_against(AGG2)


# -- binning rule -------------------------------------------------------------


def test_bin_indices_half_open_with_closed_top():
    edges = np.array([0.0, 1.0, 2.0])
    vals = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    np.testing.assert_array_equal(bin_indices(vals, edges), [0, 0, 1, 1, 1])


def test_bin_indices_out_of_range_markers():
    edges = np.array([0.0, 1.0, 2.0])
    np.testing.assert_array_equal(bin_indices(np.array([-0.1, 2.1]), edges), [-1, 2])


@given(st.floats(min_value=0, max_value=10, allow_nan=False))
def test_bin_indices_brackets_value(x):
    edges = np.linspace(0, 10, 21)
    i = int(bin_indices(np.array([x]), edges)[0])
    assert 0 <= i <= 19
    assert edges[i] <= x <= edges[i + 1]


# -- dimensions and schema ------------------------------------------------------


def test_dimension_rejects_rough_scale_count():
    with pytest.raises(ValueError, match="smooth"):
        DimensionSpec("x", scale_count=7)


def test_categorical_dimension_shape():
    d = DimensionSpec("day", kind="categorical",
                      category_labels=("mon", "tue", "wed"))
    assert d.domain_min == 0.0 and d.domain_max == 3.0 and d.scale_count == 3
    assert d.label_index("tue") == 1
    with pytest.raises(KeyError):
        d.label_index("sun")


def test_schema_roles_and_lookup():
    schema = Schema((DimensionSpec("x"), DimensionSpec("t", scale_count=3600)),
                    measure_names=("x", "fare"))  # x serves both roles
    assert schema.d == 2
    assert schema.dim_index("t") == 1
    assert schema.measure_index("fare") == 1
    with pytest.raises(KeyError):
        schema.dim_index("fare")


def test_schema_duplicate_dims_rejected():
    with pytest.raises(ValueError):
        Schema((DimensionSpec("x"), DimensionSpec("x")))


def test_range_resolution_clips_to_domain():
    schema = Schema((DimensionSpec("x"), DimensionSpec("y")))
    box = Range({0: (-5.0, 0.25)}).resolve(schema)
    np.testing.assert_array_equal(box[:, 0], [0.0, 0.25])
    np.testing.assert_array_equal(box[:, 1], [0.0, 1.0])


def test_auto_scale_counts_are_smooth_and_budgeted():
    for d in range(1, 6):
        n = auto_scale_count(d)
        assert scales.is_smooth(n)
        assert n ** d <= 65_536
