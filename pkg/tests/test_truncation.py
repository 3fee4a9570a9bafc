"""Projection and schedule tests, including brute-force grid oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trunc_sa import (
    DomainError,
    TruncationRegion,
    TruncationSchedule,
    admissibility_horizon,
    cnorm_condition,
    project,
)


def grid_min_distance(region, z, points_per_axis=60):
    """Brute-force oracle: min distance from z to a discretization of the region."""
    if region.kind == "box":
        lo, hi = region.lower, region.upper
    else:
        lo = region.center - region.radius
        hi = region.center + region.radius
    axes = [np.linspace(lo[i], hi[i], points_per_axis) for i in range(region.dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.dim)
    if region.kind == "sphere":
        keep = np.linalg.norm(mesh - region.center, axis=1) <= region.radius
        mesh = mesh[keep]
    d = np.linalg.norm(mesh - np.asarray(z, float), axis=1)
    spacing = float(np.max((hi - lo) / (points_per_axis - 1)))
    return float(np.min(d)), spacing


class TestProject:
    def test_sphere_radial_scaling(self):
        got = project(TruncationRegion.sphere([0.0, 0.0], 1.0), [3.0, 4.0])
        np.testing.assert_allclose(got, [0.6, 0.8], atol=1e-15)

    def test_identity_inside_box(self):
        got = project(TruncationRegion.box([-1.0, -1.0], [1.0, 1.0]), [0.3, -0.7])
        np.testing.assert_array_equal(got, [0.3, -0.7])

    def test_clamp_above(self):
        got = project(TruncationRegion.box([-1.0], [1.0]), [2.5])
        np.testing.assert_array_equal(got, [1.0])

    def test_whole_space_identity(self):
        got = project(TruncationRegion.whole_space(3), [5.0, -2.0, 1e9])
        np.testing.assert_array_equal(got, [5.0, -2.0, 1e9])

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            project(TruncationRegion.box([-1.0], [1.0]), [np.nan])
        with pytest.raises(DomainError):
            project(TruncationRegion.sphere([0.0], 1.0), [np.inf])

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_grid_oracle(self, dim):
        """Projection beats every grid candidate within grid resolution."""
        rng = np.random.default_rng(202)
        for _ in range(40):
            if rng.random() < 0.5:
                lo = rng.uniform(-3, 0, dim)
                region = TruncationRegion.box(lo, lo + rng.uniform(0.5, 3, dim))
            else:
                region = TruncationRegion.sphere(rng.uniform(-2, 2, dim), rng.uniform(0.5, 3))
            z = rng.uniform(-6, 6, dim)
            p = region.project(z)
            best, spacing = grid_min_distance(region, z)
            assert np.linalg.norm(p - z) <= best + spacing
            assert region.contains(p, tol=1e-12)


class TestProjectionProperties:
    @given(
        z=st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2),
        lo=st.lists(st.floats(-10, 0), min_size=2, max_size=2),
        width=st.lists(st.floats(0.1, 10), min_size=2, max_size=2),
    )
    @settings(max_examples=200, deadline=None)
    def test_box_idempotent_and_member(self, z, lo, width):
        region = TruncationRegion.box(lo, np.asarray(lo) + width)
        p1 = region.project(z)
        p2 = region.project(p1)
        np.testing.assert_array_equal(p1, p2)
        assert region.contains(p1, tol=1e-12)

    @given(
        z=st.lists(st.floats(-100, 100), min_size=2, max_size=2),
        c=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
        r=st.floats(0.1, 10),
    )
    @settings(max_examples=200, deadline=None)
    def test_sphere_idempotent_and_member(self, z, c, r):
        region = TruncationRegion.sphere(c, r)
        p1 = region.project(z)
        p2 = region.project(p1)
        np.testing.assert_array_equal(p1, p2)
        assert np.linalg.norm(p1 - np.asarray(c)) <= r * (1 + 1e-12) + 1e-12

    @given(
        x=st.lists(st.floats(-50, 50), min_size=2, max_size=2),
        y=st.lists(st.floats(-50, 50), min_size=2, max_size=2),
        r=st.floats(0.1, 5),
        use_sphere=st.booleans(),
    )
    @settings(max_examples=200, deadline=None)
    def test_nonexpansive(self, x, y, r, use_sphere):
        if use_sphere:
            region = TruncationRegion.sphere([0.5, -0.5], r)
        else:
            region = TruncationRegion.box([-r, -r], [r, r])
        px, py = region.project(x), region.project(y)
        dx = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float))
        assert np.linalg.norm(px - py) <= dx + 1e-9

    def test_box_projection_is_per_coordinate_clamp(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            dim = rng.integers(1, 5)
            lo = rng.uniform(-5, 0, dim)
            hi = lo + rng.uniform(0.1, 5, dim)
            z = rng.uniform(-10, 10, dim)
            region = TruncationRegion.box(lo, hi)
            onedim = np.array(
                [
                    TruncationRegion.box([lo[i]], [hi[i]]).project([z[i]])[0]
                    for i in range(dim)
                ]
            )
            np.testing.assert_array_equal(region.project(z), onedim)


def random_spd(rng, dim):
    A = rng.standard_normal((dim, dim))
    return A @ A.T + np.eye(dim) * rng.uniform(0.05, 1.0)


class TestCnormCondition:
    def test_identity_inside(self):
        assert cnorm_condition(np.eye(2), [0.5, 0.0], 1.0, [0.0, 0.0])

    def test_diag_examples(self):
        C = np.diag([4.0, 1.0])
        assert not cnorm_condition(C, [1.0, 0.0], 1.9, [0.0, 0.0])  # 4 > 3.61
        assert cnorm_condition(C, [1.0, 0.0], 2.1, [0.0, 0.0])  # 4 <= 4.41

    def test_non_spd_rejected(self):
        with pytest.raises(DomainError):
            cnorm_condition(np.diag([1.0, -1.0]), [0.0, 0.0], 1.0, [0.0, 0.0])
        with pytest.raises(DomainError):
            cnorm_condition(np.array([[1.0, 2.0], [0.0, 1.0]]), [0.0, 0.0], 1.0, [0.0, 0.0])

    def test_weighted_distance_never_increases_when_condition_holds(self):
        """Sampled soundness check of the eigenvalue test (small version of the
        acceptance criterion)."""
        rng = np.random.default_rng(99)
        checked = 0
        while checked < 2000:
            dim = int(rng.integers(1, 4))
            C = random_spd(rng, dim)
            center = rng.uniform(-2, 2, dim)
            radius = rng.uniform(0.5, 3.0)
            root = center + rng.uniform(-1, 1, dim) * radius / np.sqrt(dim)
            if np.linalg.norm(root - center) > radius:
                continue
            if not cnorm_condition(C, center, radius, root):
                continue
            z = center + rng.standard_normal(dim) * 2.0 * radius
            region = TruncationRegion.sphere(center, radius)
            if region.contains(z):
                continue
            zp = region.project(z)
            before = (z - root) @ C @ (z - root)
            after = (zp - root) @ C @ (zp - root)
            assert after <= before + 1e-10
            checked += 1


class TestSchedules:
    def test_constant_box_admissible_immediately(self):
        sch = TruncationSchedule.constant(TruncationRegion.box([-3.0], [3.0]))
        assert admissibility_horizon(sch, [2.0], 10) == 1

    def test_expanding_log_box_hits_root_at_seven(self):
        sch = TruncationSchedule.expanding_box(lambda t: np.log(t + 1), 1)
        assert admissibility_horizon(sch, [2.0], 50) == 7

    def test_shrinking_sphere_can_exclude_root(self):
        sch = TruncationSchedule.shrinking_sphere(
            lambda t: np.zeros(1), lambda t: 2.0 / t
        )
        assert admissibility_horizon(sch, [1.0], 100) is None

    def test_expanding_box_requires_monotone_width(self):
        with pytest.raises(DomainError):
            TruncationSchedule.expanding_box(lambda t: 10.0 - t, 1)

    def test_power_family_width(self):
        sch = TruncationSchedule.expanding_box_power(C=5.0, r=0.9, l=3, dim=1)
        reg = sch.region_at(64)
        assert reg.upper[0] == pytest.approx(5.0 * 64 ** (0.9 / 6.0))

    def test_aux_overrides_sphere_center(self):
        sch = TruncationSchedule.shrinking_sphere(lambda t: np.zeros(2), lambda t: 1.0)
        reg = sch.region_at(3, aux=[5.0, 5.0])
        np.testing.assert_array_equal(reg.center, [5.0, 5.0])

    def test_schedule_is_pure(self):
        sch = TruncationSchedule.expanding_box_log(5.0, 1)
        a = sch.region_at(17)
        b = sch.region_at(17)
        np.testing.assert_array_equal(a.lower, b.lower)
        np.testing.assert_array_equal(a.upper, b.upper)
