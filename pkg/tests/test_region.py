import numpy as np
import pytest

from pfcert.exceptions import ModelError
from pfcert.region import RegionKind, RegionSpec, ellipsoid_shape


@pytest.fixture
def box():
    return RegionSpec.box([1.0, -1.0], [0.5, 0.25], delta=2.0)


@pytest.fixture
def ellipse():
    return RegionSpec.ellipsoid([0.0, 0.0], np.diag([1.0, 4.0]), delta=1.0)


def test_box_contains(box):
    assert box.contains([1.0, -1.0])
    assert box.contains([2.0, -0.5])
    assert not box.contains([2.01, -1.0])
    assert box.contains([2.01, -1.0], tol=0.02)


def test_box_bounds(box):
    lower, upper = box.bounds()
    np.testing.assert_allclose(lower, [0.0, -1.5])
    np.testing.assert_allclose(upper, [2.0, -0.5])


def test_ellipsoid_contains_and_bounds(ellipse):
    assert ellipse.contains([1.0, 0.0])
    assert ellipse.contains([0.0, 0.5])
    assert not ellipse.contains([0.0, 0.51])
    lower, upper = ellipse.bounds()
    np.testing.assert_allclose(upper, [1.0, 0.5])
    np.testing.assert_allclose(lower, [-1.0, -0.5])


@pytest.mark.parametrize("name", ["box", "ellipse"])
def test_samples_stay_inside(name, request):
    region = request.getfixturevalue(name)
    samples = region.sample(np.random.default_rng(1), 500)
    assert samples.shape == (500, 2)
    assert all(region.contains(s, tol=1e-12) for s in samples)


def test_ellipsoid_samples_fill_the_region(ellipse):
    samples = ellipse.sample(np.random.default_rng(2), 2000)
    radii = np.einsum("ij,jk,ik->i", samples, ellipse.shape, samples)
    # uniform in a disc: a quarter of the mass sits inside half the radius
    assert np.mean(radii <= 0.25) == pytest.approx(0.25, abs=0.05)


def test_with_delta_scales(box):
    smaller = box.with_delta(0.5)
    assert smaller.delta == 0.5
    assert box.delta == 2.0
    np.testing.assert_allclose(smaller.bounds()[1], [1.25, -0.875])
    collapsed = box.with_delta(0.0)
    assert collapsed.contains(box.center)
    assert not collapsed.contains(box.center + 1e-9)


@pytest.mark.parametrize("name", ["box", "ellipse"])
def test_dict_round_trip(name, request):
    region = request.getfixturevalue(name)
    restored = RegionSpec.from_dict(region.to_dict())
    assert restored.kind is region.kind
    assert restored.delta == region.delta
    np.testing.assert_allclose(restored.center, region.center)
    np.testing.assert_allclose(restored.bounds()[0], region.bounds()[0])


def test_from_dict_rejects_malformed():
    with pytest.raises(ModelError) as exc_info:
        RegionSpec.from_dict({"kind": "box", "center": [0.0]})
    assert "malformed region" in str(exc_info.value)
    with pytest.raises(ModelError):
        RegionSpec.from_dict({"kind": "sphere", "center": [0.0]})
    with pytest.raises(ModelError) as exc_info:
        RegionSpec.from_dict({"kind": "box", "center": [0.0], "widths": [-1.0]})
    assert "positive" in str(exc_info.value)


def test_region_validation():
    with pytest.raises(ModelError):
        RegionSpec.box([0.0, 0.0], [1.0])
    with pytest.raises(ModelError):
        RegionSpec.box([0.0], [1.0], delta=-0.1)
    with pytest.raises(ModelError):
        RegionSpec.ellipsoid([0.0, 0.0], np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ModelError) as exc_info:
        RegionSpec.ellipsoid([0.0, 0.0], np.diag([1.0, -1.0]))
    assert "positive definite" in str(exc_info.value)


def test_ellipsoid_shape_has_unit_determinant():
    rng = np.random.default_rng(5)
    samples = rng.standard_normal((4000, 3)) * [1.0, 2.0, 0.5]
    shape = ellipsoid_shape(samples)
    assert np.linalg.det(shape) == pytest.approx(1.0)
    np.testing.assert_allclose(shape, shape.T)
    # the longest axis of the data has the smallest curvature
    assert np.argmin(np.diag(shape)) == 1
    region = RegionSpec.ellipsoid(np.zeros(3), shape)
    assert region.kind is RegionKind.ELLIPSOID


def test_ellipsoid_shape_needs_enough_samples():
    with pytest.raises(ModelError) as exc_info:
        ellipsoid_shape(np.zeros((2, 3)))
    assert "need more than 3 samples" in str(exc_info.value)
    with pytest.raises(ModelError):
        ellipsoid_shape(np.ones((10, 2)))


def test_box_polynomials_in_plain_numbers(box):
    # the membership polynomials also evaluate on plain floats
    values = dict(box.polynomials([1.5, -1.0]))
    assert values["region s0 upper"] == pytest.approx(0.5)
    assert values["region s0 lower"] == pytest.approx(1.5)
    assert values["region s1 upper"] == pytest.approx(0.5)
