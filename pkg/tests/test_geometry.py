import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sphere_spectra.geometry import (
    SpherePoint,
    from_cartesian,
    random_directions,
    rotation_to,
    sample_uniform,
    to_cartesian,
)

NORTH = np.array([0.0, 0.0, 1.0])


@pytest.mark.parametrize(
    "tau, phi, expected",
    [
        (0.0, 0.0, (0, 0, 1)),
        (np.pi / 2, 0.0, (1, 0, 0)),
        (np.pi / 2, np.pi / 2, (0, 1, 0)),
    ],
)
def test_to_cartesian_reference_points(tau, phi, expected):
    np.testing.assert_allclose(to_cartesian(tau, phi), expected, atol=1e-15)


@pytest.mark.parametrize(
    "v, tau, phi",
    [
        ((0, 0, 1), 0.0, 0.0),
        ((1, 0, 0), np.pi / 2, 0.0),
        ((0, -1, 0), np.pi / 2, 3 * np.pi / 2),
        ((0, 0, -1), np.pi, 0.0),
    ],
)
def test_from_cartesian_reference_points(v, tau, phi):
    t, p = from_cartesian(np.array(v, dtype=float))
    assert t == pytest.approx(tau, abs=1e-15)
    assert p == pytest.approx(phi, abs=1e-15)


def test_from_cartesian_rejects_non_unit():
    with pytest.raises(ValueError):
        from_cartesian(np.array([0.0, 0.0, 1.1]))


def test_sphere_point_validation_and_embedding():
    p = SpherePoint(1.0, 2.0)
    assert np.linalg.norm(p.xyz) == pytest.approx(1.0, abs=1e-12)
    q = SpherePoint.from_xyz(p.xyz)
    assert (q.tau, q.phi) == pytest.approx((1.0, 2.0), abs=1e-12)
    with pytest.raises(ValueError):
        SpherePoint(-0.1, 0.0)
    with pytest.raises(ValueError):
        SpherePoint(0.5, 2 * np.pi)


unit_vectors = st.tuples(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)
).filter(lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.array(v) / np.linalg.norm(v))


@given(unit_vectors)
def test_cartesian_round_trip(v):
    np.testing.assert_allclose(to_cartesian(*from_cartesian(v)), v, atol=1e-10)


@given(st.floats(1e-3, np.pi - 1e-3), st.floats(0, 2 * np.pi, exclude_max=True))
def test_angle_round_trip_away_from_poles(tau, phi):
    t, p = from_cartesian(to_cartesian(tau, phi))
    assert t == pytest.approx(tau, abs=1e-10)
    # phi wraps: compare on the circle
    assert abs(np.angle(np.exp(1j * (p - phi)))) < 1e-10


def test_sample_uniform_is_deterministic():
    a = sample_uniform(100, 7)
    b = sample_uniform(100, 7)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_sample_uniform_rejects_empty():
    with pytest.raises(ValueError):
        sample_uniform(0, 1)


def test_sample_uniform_moments():
    n = 100_000
    tau, phi = sample_uniform(n, 3)
    z = np.cos(tau)
    assert abs(z.mean()) < 3 * (1 / np.sqrt(3)) / np.sqrt(n)
    assert abs(np.mean(tau <= np.pi / 2) - 0.5) < 3 * 0.5 / np.sqrt(n)
    assert np.all((phi >= 0) & (phi < 2 * np.pi))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sample_uniform_equal_area_bands_chi_square(seed):
    n = 100_000
    tau, _ = sample_uniform(n, seed)
    # 8 equal-area bands are equal-width in z
    counts, _ = np.histogram(np.cos(tau), bins=np.linspace(-1, 1, 9))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_fibonacci_sampling_covers_bands_evenly():
    tau, phi = sample_uniform(800, 0, method="fibonacci")
    counts, _ = np.histogram(np.cos(tau), bins=np.linspace(-1, 1, 9))
    assert counts.max() - counts.min() <= 1


def test_rotation_reference_matrices():
    np.testing.assert_allclose(rotation_to(NORTH), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(
        rotation_to([1.0, 0.0, 0.0]), [[0, 0, 1], [0, 1, 0], [-1, 0, 0]], atol=1e-15
    )
    np.testing.assert_allclose(rotation_to([0.0, 0.0, -1.0]), np.diag([1, -1, -1]), atol=1e-15)


def test_rotation_properties_on_many_directions():
    for seed in range(1000):
        w = random_directions(1, seed)[0]
        R = rotation_to(w)
        np.testing.assert_allclose(R @ NORTH, w, atol=1e-10)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-10)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-10)


@given(unit_vectors)
@settings(max_examples=200)
def test_rotation_maps_north_to_w(w):
    R = rotation_to(w)
    np.testing.assert_allclose(R @ NORTH, w, atol=1e-10)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-10)
