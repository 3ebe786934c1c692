"""Forcing basis construction, the noise stream, and exact correlations."""

import numpy as np
import pytest

from bkhm import ChannelGrid, RngState, build_forcing_basis, l2_norms
from bkhm.fields import dealias, transform_inverse
from bkhm.forcing import (
    ForcingMode,
    dealiased_kappa_max,
    forcing_correlations_at,
    gaussian_block,
    sample_vorticity_increment,
)
from bkhm.oracle import brute_forcing_correlations


class TestBasisConstruction:
    def test_band_mode_count_and_totals(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        assert len(basis.modes) == 17
        assert basis.eps_total == 1.0
        assert basis.eta_total == pytest.approx(25.23529411764706, rel=1e-14)
        assert basis.eta_area == pytest.approx(1.278434934781262, rel=1e-14)
        # equal amplitudes, b = sqrt(2 eps / J)
        assert {m.b for m in basis.modes} == {basis.modes[0].b}
        assert basis.modes[0].b == pytest.approx(np.sqrt(2.0 / 17.0), rel=1e-15)

    def test_single_mode_band(self, grid):
        basis = build_forcing_basis(grid, 0.9, 1.05, eps_total=1.0)
        assert basis.modes == (
            ForcingMode(k=0, m=1, b=1.4142135623730951, kappa2=1.0),
        )
        assert basis.draws_per_sample() == 1

    def test_modes_inside_band_and_sorted(self, offset_grid):
        basis = build_forcing_basis(offset_grid, 2.0, 5.0, eps_total=0.7)
        kappas = [np.sqrt(m.kappa2) for m in basis.modes]
        assert all(2.0 <= kap <= 5.0 for kap in kappas)
        keys = [(m.m, m.k) for m in basis.modes]
        assert keys == sorted(keys)
        eta = 0.5 * basis.modes[0].b ** 2 * sum(m.kappa2 for m in basis.modes)
        assert basis.eta_total == pytest.approx(eta, rel=1e-15)

    def test_injection_scale_is_band_midpoint(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        assert basis.kappa_injection == 5.0
        assert basis.l_injection == pytest.approx(2.0 * np.pi / 5.0)

    def test_empty_band_raises(self, grid):
        with pytest.raises(ValueError, match="no eigenmodes"):
            build_forcing_basis(grid, 4.01, 4.05, eps_total=1.0)

    def test_inverted_band_raises(self, grid):
        with pytest.raises(ValueError, match="need 0 < kappa_lo"):
            build_forcing_basis(grid, 6.0, 4.0, eps_total=1.0)

    def test_nonpositive_rate_raises(self, grid):
        with pytest.raises(ValueError, match="eps_total must be positive"):
            build_forcing_basis(grid, 4.0, 6.0, eps_total=0.0)

    def test_band_reaching_dealias_limit_raises(self, grid):
        limit = dealiased_kappa_max(grid)
        with pytest.raises(ValueError, match="dealiased"):
            build_forcing_basis(grid, 4.0, limit, eps_total=1.0)


class TestNoiseStream:
    def test_frozen_draws(self):
        got = gaussian_block(RngState(7, 3), 4)
        want = [-0.15349940206787166, -0.9714637895163419,
                2.1038607096337225, -0.08871187032234198]
        np.testing.assert_allclose(got, want, rtol=1e-13)

    def test_state_determines_draws(self):
        st = RngState(42, 11)
        assert np.array_equal(gaussian_block(st, 16), gaussian_block(st, 16))
        assert not np.array_equal(gaussian_block(st, 16),
                                  gaussian_block(st.advanced(), 16))

    def test_block_prefix_is_stable(self):
        # longer requests extend, never reshuffle, a counter block
        st = RngState(5, 2)
        assert np.array_equal(gaussian_block(st, 4), gaussian_block(st, 9)[:4])


class TestIncrement:
    def test_variance_matches_injection_rate(self, grid):
        """Mean ||dW||^2 over 600 draws vs 2 eta_total dt, frozen stream."""
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        st = RngState(123)
        dt = 0.01
        total = 0.0
        n = 600
        for _ in range(n):
            inc, st = sample_vorticity_increment(basis, dt, st)
            total += l2_norms(inc).omega_sq
        ratio = total / n / (2.0 * basis.eta_total * dt)
        assert ratio == pytest.approx(0.9955786716257742, rel=1e-12)
        assert abs(ratio - 1.0) < 0.05
        assert st.counter == n

    def test_zero_dt_gives_zero_field_but_advances(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        inc, st = sample_vorticity_increment(basis, 0.0, RngState(9, 5))
        assert not inc.coeffs.any()
        assert st == RngState(9, 6)

    def test_negative_dt_raises(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        with pytest.raises(ValueError, match="dt must be >= 0"):
            sample_vorticity_increment(basis, -0.1, RngState(0))

    def test_increment_is_real_and_survives_dealiasing(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        inc, _ = sample_vorticity_increment(basis, 0.02, RngState(31, 7))
        samples = transform_inverse(inc).values  # raises if not conjugate-symmetric
        assert np.isrealobj(samples)
        assert np.array_equal(dealias(inc).coeffs, inc.coeffs)

    def test_identical_streams_bitwise(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        a = RngState(77)
        b = RngState(77)
        for _ in range(5):
            inc_a, a = sample_vorticity_increment(basis, 0.004, a)
            inc_b, b = sample_vorticity_increment(basis, 0.004, b)
            assert np.array_equal(inc_a.coeffs, inc_b.coeffs)


class TestCorrelations:
    def test_zero_offset_anchors(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        a0, fraka0 = forcing_correlations_at(basis, 0.0, 0.0)
        assert float(a0) == pytest.approx(basis.eps_area, rel=1e-13)
        assert float(fraka0) == basis.eta_area

    def test_against_dense_quadrature(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        for y1, y2 in [(0.31, 0.22), (-0.5, -0.37)]:
            a_ref, fraka_ref = brute_forcing_correlations(basis, y1, y2)
            a_val, fraka_val = forcing_correlations_at(basis, y1, y2)
            assert float(a_val) == pytest.approx(a_ref, abs=1e-6)
            assert float(fraka_val) == pytest.approx(fraka_ref, abs=1e-6)

    def test_offset_beyond_height_raises(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        with pytest.raises(ValueError, match="exceeds the channel height"):
            forcing_correlations_at(basis, 0.0, grid.height * 1.001)

    def test_unwindowed_agrees_at_zero_offset(self, grid):
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        assert forcing_correlations_at(basis, 0.0, 0.0) == \
            forcing_correlations_at(basis, 0.0, 0.0, windowed=False)

    def test_quadratic_response_of_unwindowed_average(self, grid):
        """a_bar(r) = eps_area - (r^2/4) eta_area with quartic remainder."""
        basis = build_forcing_basis(grid, 4.0, 6.0, eps_total=1.0)
        theta = (np.arange(128) + 0.5) * 2.0 * np.pi / 128
        n1, n2 = np.cos(theta), np.sin(theta)

        def sph(r, windowed=False):
            r = np.asarray(r, dtype=float)
            a, _ = forcing_correlations_at(basis, r[:, None] * n1,
                                           r[:, None] * n2, windowed=windowed)
            return a.mean(axis=1)

        r0 = 1e-3
        d2 = 2.0 * (sph(np.array([r0]))[0] - basis.eps_area) / r0**2
        assert d2 == pytest.approx(-basis.eta_area / 2.0, rel=0.01)

        rs = np.geomspace(1e-3, 0.15, 40)
        rem = np.abs(sph(rs) - (basis.eps_area - rs**2 / 4.0 * basis.eta_area))
        slope = np.polyfit(np.log(rs), np.log(rem), 1)[0]
        assert slope >= 2.9

        # the overlap-windowed average carries a wall term linear in r and
        # must NOT satisfy the expansion; the flag is load-bearing
        d2_win = 2.0 * (sph(np.array([r0]), windowed=True)[0] - basis.eps_area) / r0**2
        assert abs(d2_win + basis.eta_area / 2.0) > basis.eta_area
