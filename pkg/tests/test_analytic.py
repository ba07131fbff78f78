"""Tests for zero counting, densities, and the m-function comparison."""

import numpy as np
import pytest

from sturmkit import analytic
from sturmkit.analytic import (
    ContourRejectionError,
    DegenerateSamplerError,
    EntireSampler,
    PoleProximityError,
    build_F,
    count_zeros_halfplane,
    density_profile,
    density_to_csv,
    logplus_integral,
    weyl_m,
)
from sturmkit.slcore import PotentialField

V0 = PotentialField.zero()


def sine_sampler(a=0.6):
    def cf(z):
        z = np.asarray(z, complex)
        small = np.abs(z) < 1e-12
        safe = np.where(small, 1.0, z)
        return np.where(small, a, np.sin(a * z) / safe)

    return EntireSampler(evaluator=cf, x0=a)


class TestCountZeros:
    @pytest.mark.parametrize("r", [10.0, 25.0, 52.0])
    def test_closed_form_sine(self, r):
        zc = count_zeros_halfplane(sine_sampler(), r)
        assert zc.count == int(np.floor(0.6 * r / np.pi))
        assert zc.contour_residual < 0.1

    def test_brute_force_equivalence(self):
        # all zeros of sin(0.6 z)/z are real; count roots on (0, r) directly
        r = 31.0
        S = sine_sampler()
        zc = count_zeros_halfplane(S, r)
        t = np.linspace(1e-3, r, 20001)
        vals = np.real(S(t.astype(complex)))
        direct = int(np.count_nonzero(np.diff(np.sign(vals)) != 0))
        assert zc.count == direct

    def test_radius_at_zero_is_rejected(self):
        S = sine_sampler()
        r = 5.0 * np.pi / 0.6  # fifth zero sits exactly on the arc
        with pytest.raises(ContourRejectionError):
            count_zeros_halfplane(S, r)

    def test_degenerate_input(self):
        F = build_F(V0, PotentialField.zero(), 0.5)
        with pytest.raises(DegenerateSamplerError):
            count_zeros_halfplane(F, 10.0)

    def test_tiny_radius_rejected(self):
        with pytest.raises(ValueError):
            count_zeros_halfplane(sine_sampler(), 1e-4)


class TestBuildF:
    def test_constant_shift_closed_form(self):
        F = build_F(V0, PotentialField.constant(3.0), 0.6)
        z = np.array([2.0 + 1.0j, 7.0, 0.3 + 0.1j, 15.0 - 2.0j])
        w = np.sqrt(z * z - 3.0 + 0j)
        want = np.sin(0.6 * z) / z - np.sin(0.6 * w) / w
        assert np.max(np.abs(F(z) - want)) < 1e-9

    def test_schwarz_reflection_and_evenness(self):
        x = np.linspace(0, 1, 257)
        V2 = PotentialField(2.0 * np.exp(-30 * (x - 0.3) ** 2))
        F = build_F(V0, V2, 0.55)
        z = np.array([1.0 + 2.0j, 6.0 - 1.0j, 11.0 + 0.5j])
        assert np.max(np.abs(F(np.conj(z)) - np.conj(F(z)))) < 1e-12
        assert np.max(np.abs(F(-z) - F(z))) < 1e-12

    def test_derivative_kind(self):
        G = build_F(V0, PotentialField.constant(3.0), 0.6, kind="dpsi-difference")
        z = np.array([4.0 + 1.0j, 9.0])
        w = np.sqrt(z * z - 3.0 + 0j)
        want = np.cos(0.6 * z) - np.cos(0.6 * w)
        assert np.max(np.abs(G(z) - want)) < 1e-9

    def test_rejects_bad_x0(self):
        with pytest.raises(ValueError):
            build_F(V0, V0, 1.5)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            build_F(V0, V0, 0.5, kind="hessian")

    def test_scalar_call_shape(self):
        F = build_F(V0, PotentialField.constant(1.0), 0.5)
        out = F(3.0 + 0.0j)
        assert out.shape == ()


class TestDensityProfile:
    def test_sine_plateau(self):
        prof = density_profile(sine_sampler(), [20.0, 40.0, 80.0])
        assert prof.plateau == pytest.approx(0.6 / np.pi, rel=0.02)

    def test_retries_radius_on_zero(self):
        # 5 pi / 0.6 sits on a zero; the profile must nudge and succeed
        prof = density_profile(sine_sampler(), [10.0, 5.0 * np.pi / 0.6])
        assert len(prof.rows) == 2
        assert prof.rows[1].count >= prof.rows[0].count

    def test_counts_nondecreasing(self):
        prof = density_profile(sine_sampler(), [15.0, 30.0, 60.0])
        counts = [row.count for row in prof.rows]
        assert counts == sorted(counts)

    def test_csv(self, tmp_path):
        prof = density_profile(sine_sampler(), [15.0, 30.0])
        p = tmp_path / "density.csv"
        density_to_csv(prof, p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "r,n,n_over_r,residual"
        assert len(lines) == 3
        r, n, nr, resid = lines[1].split(",")
        assert float(nr) == pytest.approx(int(n) / float(r))


class TestLogPlus:
    def test_bounded_sampler_gives_zero(self):
        S = EntireSampler(
            evaluator=lambda z: 0.5 * np.ones_like(np.asarray(z, complex)), x0=0.5
        )
        assert logplus_integral(S, 50.0) == 0.0

    def test_synthetic_violation_grows(self):
        S = EntireSampler(
            evaluator=lambda z: np.exp(np.abs(z)).astype(complex), x0=0.5
        )
        i1 = logplus_integral(S, 100.0)
        i2 = logplus_integral(S, 400.0)
        # log+|e^{|t|}| = |t|, so the weighted integral is log(1 + R^2)
        assert i1 == pytest.approx(np.log(1 + 100.0**2), rel=1e-3)
        assert i2 - i1 > 2.0

    def test_polynomial_growth_stabilizes(self):
        S = EntireSampler(
            evaluator=lambda z: (1.0 + np.asarray(z, complex) ** 2) ** -1, x0=0.5
        )
        assert logplus_integral(S, 200.0) == 0.0


class TestWeylM:
    def test_free_cotangent(self):
        zg = np.array([1.0 + 0.5j, 4.0 + 0.2j, 9.0 + 1.0j])
        m = weyl_m(V0, 0.35, zg)
        assert np.max(np.abs(m - zg / np.tan(zg * 0.35))) < 1e-8

    def test_constant_substitution(self):
        c = 5.0
        zg = np.array([2.0 + 1.0j, 6.0 + 0.5j])
        m = weyl_m(PotentialField.constant(c), 0.4, zg)
        w = np.sqrt(zg * zg - c)
        assert np.max(np.abs(m - w / np.tan(w * 0.4))) < 1e-8

    def test_pole_raises(self):
        with pytest.raises(PoleProximityError):
            weyl_m(V0, 0.35, [np.pi / 0.35])

    def test_grid_refinement_agreement(self):
        f = lambda x: 3.0 * np.sin(2 * x) + 1.0
        Va = PotentialField.from_function(f, n=1024)
        Vb = PotentialField.from_function(f, n=4096)
        zg = np.array([3.0 + 0.7j, 12.0 + 0.3j, 25.0 + 1.0j])
        ma = weyl_m(Va, 0.45, zg)
        mb = weyl_m(Vb, 0.45, zg)
        assert np.max(np.abs(ma - mb)) < 1e-6
