import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcflab.explicit import (
    AlternatingFamily,
    ConstructionError,
    DomainError,
    GrimReaper,
    ParameterError,
    SphereBarrier,
    barrier_pair,
    initial_data_area_sharpness,
    initial_data_gradient_sharpness,
    plateau,
)
from mcflab.grid import UniformGrid


class TestGrimReaper:
    def test_center_values(self):
        g = GrimReaper(lam=1.0)
        val, slope = g.eval(math.pi / 2, 0.0)
        assert val == pytest.approx(0.0, abs=1e-15)
        assert slope == pytest.approx(0.0, abs=1e-15)

    def test_translates_at_unit_speed(self):
        g = GrimReaper(lam=1.0)
        assert g.value(math.pi / 2, 5.0) == pytest.approx(5.0)

    def test_rescaled_value_at_probe(self):
        # oracle: direct substitution lam*t - log(sin(lam x))/lam at lam=3
        lam = 3.0
        x = math.exp(-lam * lam)
        expected = lam - math.log(math.sin(lam * x)) / lam
        g = GrimReaper(lam=lam)
        assert g.value(x, 1.0) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(5.6338, abs=2e-4)
        assert expected <= 2.0 * lam

    def test_domain_error_not_inf(self):
        g = GrimReaper(lam=2.0)
        for bad in (0.0, math.pi / 2, -0.1):
            with pytest.raises(DomainError):
                g.value(bad, 0.0)

    def test_vertical_translation_identity(self):
        g = GrimReaper(lam=1.7, shift=0.3, offset=1.1, sign=-1)
        x = 0.3 + 0.4
        s = 2.25
        assert g.value(x, 1.0 + s) == pytest.approx(
            g.value(x, 1.0) + g.sign * g.lam * s, rel=1e-14)

    @given(
        lam=st.floats(min_value=0.2, max_value=5.0),
        xi=st.floats(min_value=0.05, max_value=0.95),
        t=st.floats(min_value=0.0, max_value=3.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_parabolic_rescaling_identity(self, lam, xi, t):
        x = xi * math.pi / lam
        unit = GrimReaper(lam=1.0)
        scaled = GrimReaper(lam=lam)
        assert scaled.value(x, t) == pytest.approx(
            unit.value(lam * x, lam * lam * t) / lam, rel=1e-12, abs=1e-12)

    def test_slope_is_value_derivative(self):
        g = GrimReaper(lam=2.0, shift=-0.5, sign=-1)
        x, eps = 0.1, 1e-6
        fd = (g.value(x + eps, 0.3) - g.value(x - eps, 0.3)) / (2 * eps)
        assert g.slope(x, 0.3) == pytest.approx(fd, rel=1e-8)

    def test_invalid_parameters(self):
        with pytest.raises(ParameterError):
            GrimReaper(lam=0.0)
        with pytest.raises(ParameterError):
            GrimReaper(lam=1.0, sign=2)


class TestBarrierPair:
    def test_extremes_at_t0(self):
        upper, lower = barrier_pair(2.0)
        assert upper.value(-math.pi / 4, 0.0) == pytest.approx(-6.0, abs=1e-13)
        assert lower.value(math.pi / 4, 0.0) == pytest.approx(6.0, abs=1e-13)

    def test_lower_barrier_exceeds_lam_at_probe(self):
        lam = 2.0
        _, lower = barrier_pair(lam)
        probe = math.exp(-lam * lam)
        # oracle: 2 lam + log(sin(lam x)) / lam at x = probe, t = 1
        expected = 2 * lam + math.log(math.sin(lam * probe)) / lam
        got = lower.value(probe, 1.0)
        assert got == pytest.approx(expected, rel=1e-14)
        assert got >= lam
        assert got == pytest.approx(2.3464, abs=1e-4)

    def test_floor_and_ceiling(self):
        lam = 1.5
        upper, lower = barrier_pair(lam)
        xs = np.linspace(-math.pi / lam + 1e-6, -1e-6, 500)
        assert np.all(upper.value(xs, 0.0) >= -3 * lam - 1e-12)
        xs = np.linspace(1e-6, math.pi / lam - 1e-6, 500)
        assert np.all(lower.value(xs, 0.0) <= 3 * lam + 1e-12)

    def test_requires_lam_above_one(self):
        with pytest.raises(ParameterError):
            barrier_pair(1.0)


class TestAlternatingFamily:
    def test_midpoint_values_at_t1(self):
        fam = AlternatingFamily(2)
        assert fam.eval(0, math.pi / 4, 1.0) == pytest.approx(-2.0, abs=1e-13)
        assert fam.eval(1, 3 * math.pi / 4, 1.0) == pytest.approx(2.0, abs=1e-13)

    def test_midpoint_value_at_t0(self):
        fam = AlternatingFamily(2)
        assert fam.eval(0, math.pi / 4, 0.0) == pytest.approx(-4.0, abs=1e-13)

    def test_all_members_midpoints(self):
        k = 3
        fam = AlternatingFamily(k)
        for j in range(-k, k):
            want = -k if j % 2 == 0 else k
            assert fam.eval(j, fam.midpoint(j), 1.0) == pytest.approx(want, abs=1e-12)

    def test_member_domain_enforced(self):
        fam = AlternatingFamily(2)
        with pytest.raises(DomainError):
            fam.eval(0, math.pi / 2 + 0.01, 1.0)
        with pytest.raises(ParameterError):
            fam.member(5)

    def test_k_validation(self):
        with pytest.raises(ParameterError):
            AlternatingFamily(1)


class TestSphereBarrier:
    def test_examples(self):
        b = SphereBarrier(rho=math.sqrt(3), center_height=0.0, n=1, sign=-1)
        assert b.height(0.0, 1.0) == pytest.approx(-1.0)
        assert b.height(0.0, 0.0) == pytest.approx(-math.sqrt(3))
        b2 = SphereBarrier(rho=math.sqrt(5), center_height=0.0, n=2, sign=-1)
        assert b2.height(np.zeros(2), 1.0) == pytest.approx(-1.0)

    def test_domain_errors(self):
        b = SphereBarrier(rho=math.sqrt(3), center_height=0.0, n=1, sign=-1)
        with pytest.raises(DomainError):
            b.height(0.0, 2.0)  # collapsed
        with pytest.raises(DomainError):
            b.height(3.0, 0.0)  # outside radius

    def test_rho_validation(self):
        with pytest.raises(ParameterError):
            SphereBarrier(rho=1.0, center_height=0.0, n=1)


def _probe_grid(lam, m=16):
    h = math.exp(-lam * lam) / m
    return UniformGrid.centered(h, math.ceil(4 * math.pi / lam / h))


class TestGradientSharpnessData:
    def test_lam2_shape(self):
        lam = 2.0
        grid = _probe_grid(lam)
        w = initial_data_gradient_sharpness(lam, grid)
        x = grid.axes[0]
        sup = np.abs(w.values).max()
        assert 3 * lam < sup <= 4 * lam
        assert np.all(w.values[np.abs(x) > math.pi / lam] == 0.0)
        # dip below the upper barrier's minimum -3 lam
        idx = grid.nearest_index(-math.pi / (2 * lam))[0]
        assert w.values[idx] < -3 * lam

    def test_strict_inequalities_independent_check(self):
        lam = 2.0
        grid = _probe_grid(lam)
        w = initial_data_gradient_sharpness(lam, grid)
        x = grid.axes[0]
        L = math.pi / lam
        pos = (x > 0) & (x < L)
        lower_vals = 3 * lam + np.log(np.sin(lam * x[pos])) / lam
        assert np.all(w.values[pos] > lower_vals)
        neg = (x < 0) & (x > -L)
        upper_vals = -np.log(np.sin(lam * np.abs(x[neg]))) / lam - 3 * lam
        assert np.all(w.values[neg] < upper_vals)

    def test_odd_symmetry(self):
        grid = _probe_grid(1.5)
        w = initial_data_gradient_sharpness(1.5, grid)
        assert np.abs(w.values + w.values[::-1]).max() < 1e-12

    def test_small_grid_rejected(self):
        grid = UniformGrid((-1.0, 1.0), 101)
        with pytest.raises(ParameterError):
            initial_data_gradient_sharpness(2.0, grid)

    def test_coarse_grid_fails_construction(self):
        grid = UniformGrid((-7.0, 7.0), 61)  # h ~ 0.23, far above exp(-4)/8
        with pytest.raises(ConstructionError):
            initial_data_gradient_sharpness(2.0, grid)


class TestAreaSharpnessData:
    def test_k2_shape(self):
        k = 2
        h = math.pi / 512
        grid = UniformGrid.centered(h, math.ceil((2 * math.pi + 2) / h))
        w = initial_data_area_sharpness(k, grid)
        x = grid.axes[0]
        sup = np.abs(w.values).max()
        assert 2 * k < sup <= 3 * k
        assert np.all(w.values[np.abs(x) >= math.pi] == 0.0)
        # sign alternation at the four member midpoints
        fam = AlternatingFamily(k)
        signs = []
        for j in range(-k, k):
            idx = grid.nearest_index(fam.midpoint(j))[0]
            signs.append(math.copysign(1.0, w.values[idx]))
        assert signs == [-1.0, 1.0, -1.0, 1.0]
        # independent ordering check against member 0
        inside = (x > 0) & (x < math.pi / 2)
        u0 = -np.log(np.sin(k * x[inside])) / k - 2 * k
        assert np.all(w.values[inside] < u0)

    def test_extrema_count(self):
        k = 2
        h = math.pi / 512
        grid = UniformGrid.centered(h, math.ceil((2 * math.pi + 2) / h))
        w = initial_data_area_sharpness(k, grid)
        hits = np.abs(np.abs(w.values) - np.abs(w.values).max()) < 1e-9
        # four plateau blocks at the sup level
        blocks = np.count_nonzero(np.diff(hits.astype(int)) == 1)
        assert blocks == 2 * k

    def test_span_required(self):
        with pytest.raises(ParameterError):
            initial_data_area_sharpness(2, UniformGrid((-2.0, 2.0), 501))


def test_plateau_profile():
    x = np.linspace(-1, 2, 301)
    p = plateau(x, 0.0, 1.0, 0.2)
    assert np.all(p[(x <= 0) | (x >= 1)] == 0.0)
    assert np.all(p[(x >= 0.2) & (x <= 0.8)] == pytest.approx(1.0, abs=1e-12))
    assert np.all((p >= 0) & (p <= 1))
