"""Tests for density estimation, window construction, interpolation, and
the kernel-matching map."""

import csv

import numpy as np
import pytest

from sturmkit import harmonics as hm
from sturmkit import pdesim, slcore
from sturmkit.slcore import PotentialField, dirichlet_eigs

PI = np.pi
V0 = PotentialField.zero()
V1 = PotentialField.constant(1.0)

PAIRS0_20 = dirichlet_eigs(V0, 20)
PAIRS1_20 = dirichlet_eigs(V1, 20)
LAMS0_20 = np.array([p.lam for p in PAIRS0_20])
LAMS1_20 = np.array([p.lam for p in PAIRS1_20])


def build_pairs(V, k_max):
    """Eigenpairs on the refined grid interpolate_lp uses by default."""
    return dirichlet_eigs(V, k_max, n_steps=16 * slcore._eig_auto_steps(V, k_max))


class TestFrequencySet:
    def test_from_values_sorts(self):
        fs = hm.FrequencySet.from_values([3.0, 1.0, 2.0])
        assert np.array_equal(fs.values, [1.0, 2.0, 3.0])
        assert fs.separation == 1.0
        assert fs.span == 2.0
        assert len(fs) == 3

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            hm.FrequencySet(np.array([1.0, 1.0, 2.0]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            hm.FrequencySet(np.array([]))

    def test_single_value_has_infinite_separation(self):
        assert hm.FrequencySet(np.array([2.0])).separation == np.inf


class TestBeurlingDensity:
    def test_integer_multiples_of_pi(self):
        fs = hm.FrequencySet.from_values(PI * np.arange(1, 501))
        est = hm.beurling_density(fs, [fs.span / 2])
        assert abs(est * PI - 1.0) < 0.02

    def test_eigenvalue_set_is_sparse(self):
        fs = hm.FrequencySet.from_values((PI * np.arange(1, 201)) ** 2)
        est = hm.beurling_density(fs, [fs.span / 2])
        assert est < 5e-3

    def test_arithmetic_progression(self):
        d = 0.7
        est = hm.beurling_density(d * np.arange(1, 301), [0.7 * 149])
        assert abs(est * d - 1.0) < 0.01

    def test_radius_bounds(self):
        fs = hm.FrequencySet.from_values([0.0, 1.0, 2.0])
        with pytest.raises(ValueError, match="radii"):
            hm.beurling_density(fs, [1.5])
        with pytest.raises(ValueError, match="radii"):
            hm.beurling_density(fs, [0.0])


class TestCosWindow:
    def test_orthogonal_case(self):
        lam = (PI * np.arange(1, 17)) ** 2
        w = hm.build_cos_window(lam, lam, 3, 2.5, 16)
        assert len(w.freqs) == 16
        assert w.max_residual < 1e-8
        assert w.kind == "cos"
        assert w.horizon == 2.5
        assert not np.iscomplexobj(w.values)

    def test_orthogonal_case_closed_form_reference(self):
        # cos(3 pi t) on [0, 2] meets the same constraints exactly, because
        # the cosines are orthonormal there; quadrature confirms the target.
        nodes, wq = hm._gl_nodes(0.0, 2.0, 600)
        ref = np.cos(3 * PI * nodes)
        for k in range(1, 17):
            val = np.sum(wq * ref * np.cos(k * PI * nodes))
            assert abs(val - (1.0 if k == 3 else 0.0)) < 1e-10

    def test_second_list_with_target_removed(self):
        lam = (PI * np.arange(1, 17)) ** 2
        l2 = np.delete(lam, 2)
        w = hm.build_cos_window(lam, l2, 3, 2.5, 16)
        assert len(w.freqs) == 16
        assert w.max_residual < 1e-8

    def test_mixed_spectra(self):
        w = hm.build_cos_window(LAMS0_20, LAMS1_20, 5, 2.5, 20)
        assert len(w.freqs) == 40
        assert w.max_residual < 1e-6

    def test_short_horizon_rejected(self):
        lam = (PI * np.arange(1, 5)) ** 2
        with pytest.raises(ValueError, match="horizon"):
            hm.build_cos_window(lam, lam, 1, 1.5, 4)

    def test_bad_target_index(self):
        lam = (PI * np.arange(1, 5)) ** 2
        with pytest.raises(ValueError, match="index"):
            hm.build_cos_window(lam, lam, 5, 2.5, 4)

    def test_near_collision_is_infeasible(self):
        # A second-list value 1e-6 away from the target gets opposite
        # targets at numerically indistinguishable oscillations.
        lam = (PI * np.arange(1, 17)) ** 2
        l2 = lam.copy()
        l2[2] = lam[2] + 1e-6
        with pytest.raises(hm.InfeasibleTruncationError) as exc:
            hm.build_cos_window(lam, l2, 3, 2.5, 16)
        assert exc.value.max_residual > 0.1

    def test_deep_well_hits_growth_cap(self):
        with pytest.raises(ValueError, match="cap"):
            hm.build_cos_window(np.array([-600.0, PI**2]),
                                np.array([PI**2]), 2, 2.5, 2)

    def test_call_matches_stored_samples(self):
        lam = (PI * np.arange(1, 9)) ** 2
        w = hm.build_cos_window(lam, lam, 2, 2.5, 8)
        assert np.allclose(w(w.t_grid), w.values, atol=1e-13)


class TestExpWindow:
    def test_single_constraint_closed_form(self):
        lam1 = PI**2
        w = hm.build_exp_window([lam1], [], 1, 0.5, 1)
        assert w.max_residual < 1e-10
        # direct 2x2 solve over {1, exp(-i lam1 t)} with the mean row
        def ent(mu):
            if abs(mu) < 1e-14:
                return 0.5
            return (np.exp(1j * mu * 0.5) - 1.0) / (1j * mu)
        G = np.array([[ent(0.0), ent(-lam1)], [ent(lam1), ent(0.0)]])
        ref = np.linalg.solve(G, np.array([0.0, 1.0], dtype=complex))
        assert np.max(np.abs(w.coeffs - ref)) < 1e-12

    def test_mixed_spectra(self):
        w = hm.build_exp_window(LAMS0_20[:12], LAMS1_20[:12], 4, 0.5, 12)
        assert w.max_residual < 1e-6
        assert np.iscomplexobj(w.values)
        # the first constraint row is the zero-mean condition
        assert w.freqs[0] == 0.0
        assert w.constraint_residuals[0] < 1e-6

    def test_colliding_lists_rejected(self):
        l2 = np.concatenate([[LAMS0_20[2]], LAMS1_20[:11]])
        with pytest.raises(hm.InfeasibleTruncationError, match="share"):
            hm.build_exp_window(LAMS0_20[:12], l2, 4, 0.5, 12)

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            hm.build_exp_window([0.0, PI**2], [], 1, 0.5, 2)

    def test_delta_domain(self):
        with pytest.raises(ValueError, match="delta"):
            hm.build_exp_window([PI**2], [], 1, 1.5, 1)

    def test_call_matches_stored_samples(self):
        w = hm.build_exp_window(LAMS0_20[:6], [], 2, 0.5, 6)
        assert np.allclose(w(w.t_grid), w.values, atol=1e-13)


class TestWindowValidation:
    def test_bad_kind(self):
        t = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError, match="kind"):
            hm.WindowFunction(t, np.zeros(5), np.zeros(2), "haar",
                              np.zeros(2), np.zeros(2))

    def test_shape_mismatch(self):
        t = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError, match="shape"):
            hm.WindowFunction(t, np.zeros(4), np.zeros(2), "cos",
                              np.zeros(2), np.zeros(2))


class TestTraceExtraction:
    def test_wave_difference_isolates_coefficient(self):
        # The proof mechanics: pairing the window against the difference of
        # two systems' left traces reads off one expansion coefficient.
        def f(x):
            return x * (1.0 - x) * np.exp(x)

        K = 20
        w = hm.build_cos_window(LAMS0_20, LAMS1_20, 5, 2.5, K)
        a_direct = slcore.expansion_coeffs(f, V0, K, pairs=PAIRS0_20)[4]
        tr0 = pdesim.wave_trace(pdesim.WaveConfig(V=V0, f=f, T=2.5, K=K), n_t=8192)
        tr1 = pdesim.wave_trace(pdesim.WaveConfig(V=V1, f=f, T=2.5, K=K), n_t=8192)
        got = hm.pair_window_with_trace(w, tr0.t_grid, tr0.left - tr1.left)
        assert abs(got - a_direct) < 1e-4

    def test_exp_window_reads_schrodinger_mode(self):
        # With every eigenvalue of the single system annihilated except the
        # target, the pairing returns fhat_m - chat_m / lambda_m; the mean
        # row removes the constant part of each mode's motion.
        def f(x):
            return x * (1.0 - x) * np.exp(x)

        def F(x):
            return np.sin(PI * x) * (1.0 + x)

        K, delta = 12, 0.5
        cfg = pdesim.SchrodingerConfig(V=V0, f=f, F=F, delta=delta, T=delta, K=K)
        pairs, _A, (fhat, Fhat, ind) = pdesim.schrodinger_modes(
            cfg, np.array([0.0, delta]))
        lams = np.array([p.lam for p in pairs])
        chat = Fhat + ind
        target = fhat[3] - chat[3] / lams[3]
        w = hm.build_exp_window(lams, [], 4, delta, K)
        tr = pdesim.schrodinger_trace(cfg, n_t=8192)
        got = hm.pair_window_with_trace(w, tr.t_grid, tr.left)
        assert abs(got - target) < 1e-5

    def test_short_trace_rejected(self):
        w = hm.build_cos_window(LAMS0_20[:4], LAMS0_20[:4], 1, 2.5, 4)
        t = np.linspace(0.0, 2.0, 100)
        with pytest.raises(ValueError, match="shorter"):
            hm.pair_window_with_trace(w, t, np.zeros(100))


class TestSequenceLP:
    def test_norm(self):
        s = hm.SequenceLP(np.array([1.0, 2.0]), np.array([1, 3]))
        assert s.norm() == pytest.approx(np.sqrt(1.0 + 9.0 * 4.0))

    def test_validation(self):
        with pytest.raises(ValueError, match="equal length"):
            hm.SequenceLP(np.array([1.0]), np.array([1, 2]))
        with pytest.raises(ValueError, match="increasing"):
            hm.SequenceLP(np.array([1.0, 2.0]), np.array([3, 1]))


class TestInterpolate:
    def test_single_constraint_closed_form(self):
        eps = 0.9
        it = hm.interpolate_lp([1.0], [1], eps, V0, pairs=build_pairs(V0, 1))
        x = it.x_grid
        phi1 = np.sin(PI * x) / PI
        norm_sq = (eps / 2.0 - np.sin(2 * PI * eps) / (4 * PI)) / PI**2
        assert np.max(np.abs(it.values - phi1 / norm_sq)) < 1e-8

    def test_dense_prefix_random_c(self):
        rng = np.random.default_rng(7)
        it = hm.interpolate_lp(rng.standard_normal(8), np.arange(1, 9), 0.9, V0)
        assert it.max_residual < 1e-8
        assert np.isfinite(it.witness) and it.witness > 0.0

    def test_sequence_input_equivalent(self):
        pairs = build_pairs(V0, 8)
        c = np.array([0.3, -1.0, 0.2, 0.5, 0.0, 1.0, -0.4, 0.1])
        s = hm.SequenceLP(c, np.arange(1, 9))
        a = hm.interpolate_lp(c, np.arange(1, 9), 0.9, V0, pairs=pairs)
        b = hm.interpolate_lp(s, None, 0.9, V0, pairs=pairs)
        assert np.array_equal(a.values, b.values)
        with pytest.raises(ValueError, match="P=None"):
            hm.interpolate_lp(s, np.arange(1, 9), 0.9, V0, pairs=pairs)

    def test_sparse_set_truncation_stability(self):
        rng = np.random.default_rng(11)
        P = np.arange(3, 61, 3)
        c = rng.standard_normal(20)
        pairs = build_pairs(V0, 60)
        it10 = hm.interpolate_lp(c, P, 0.5, V0, k_trunc=10, pairs=pairs)
        it20 = hm.interpolate_lp(c, P, 0.5, V0, k_trunc=20, pairs=pairs)
        assert it10.max_residual < 1e-6
        assert it20.max_residual < 1e-6
        assert 0.5 < it20.witness / it10.witness < 2.0

    def test_linearity(self):
        pairs = build_pairs(V0, 8)
        rng = np.random.default_rng(3)
        P = np.arange(1, 9)
        ca, cb = rng.standard_normal(8), rng.standard_normal(8)
        fa = hm.interpolate_lp(ca, P, 0.9, V0, pairs=pairs)
        fb = hm.interpolate_lp(cb, P, 0.9, V0, pairs=pairs)
        fab = hm.interpolate_lp(0.3 * ca + 0.5 * cb, P, 0.9, V0, pairs=pairs)
        assert np.max(np.abs(fab.values - 0.3 * fa.values - 0.5 * fb.values)) < 1e-10

    def test_density_warning_on_crowded_set(self):
        rng = np.random.default_rng(5)
        with pytest.warns(RuntimeWarning, match="density"):
            hm.interpolate_lp(rng.standard_normal(12), np.arange(1, 13),
                              0.25, V0)

    def test_validation(self):
        with pytest.raises(ValueError, match="epsilon"):
            hm.interpolate_lp([1.0], [1], 1.5, V0)
        with pytest.raises(ValueError, match="increasing"):
            hm.interpolate_lp([1.0, 2.0], [4, 2], 0.9, V0)
        with pytest.raises(ValueError, match="equal length"):
            hm.interpolate_lp([1.0], [1, 2], 0.9, V0)
        with pytest.raises(ValueError, match="cover"):
            hm.interpolate_lp([1.0, 1.0], [1, 9], 0.9, V0,
                              pairs=build_pairs(V0, 2))


def z_grid_for(n_out, delta, tau, factor=1.3):
    """Energies whose momenta sweep linearly up to the hat resolution."""
    mom_max = factor * n_out * PI / delta
    u = np.linspace(0.0, mom_max, 4 * n_out + 8)
    return u * u - tau


class TestKernelMatch:
    delta = 0.5
    x = np.linspace(0.0, 0.5, 65)
    f = np.sin(2 * PI * x / 0.5) * x * (0.5 - x)

    def test_identity(self):
        res = hm.remling_map(self.f, 0.0, self.delta, V0,
                             z_grid_for(65, self.delta, 0.0))
        rel = np.linalg.norm(res.values - self.f) / np.linalg.norm(self.f)
        assert rel < 1e-6
        assert abs(res.norm_ratio - 1.0) < 1e-6

    def test_constant_shift(self):
        # Solutions of the constant well V = -tau at energy z are exactly
        # sin(sqrt(z+tau) x)/sqrt(z+tau), so the map is again the identity.
        tau = 2.0
        Vc = PotentialField.constant(-tau)
        res = hm.remling_map(self.f, tau, self.delta, Vc,
                             z_grid_for(65, self.delta, tau))
        rel = np.linalg.norm(res.values - self.f) / np.linalg.norm(self.f)
        assert rel < 1e-6

    def test_callable_input(self):
        fn = lambda x: np.sin(2 * PI * x / 0.5) * x * (0.5 - x)
        res = hm.remling_map(fn, 0.0, self.delta, V0,
                             z_grid_for(65, self.delta, 0.0), n_out=65)
        assert np.allclose(res.x_grid, self.x)
        rel = np.linalg.norm(res.values - self.f) / np.linalg.norm(self.f)
        assert rel < 1e-6

    def test_bump_round_trip(self):
        xg = np.linspace(0.0, 1.0, 4097)
        Vb = PotentialField(3.0 * np.exp(-40.0 * (xg - 0.25) ** 2))
        tau = Vb.sup_bound
        zg = z_grid_for(65, self.delta, tau)
        fwd = hm.remling_map(self.f, tau, self.delta, Vb, zg)
        back = hm.remling_map(fwd.values, tau, self.delta, Vb, zg, inverse=True)
        rel = np.linalg.norm(back.values - self.f) / np.linalg.norm(self.f)
        assert rel < 1e-4

    def test_norm_equivalence_over_ensemble(self):
        xg = np.linspace(0.0, 1.0, 4097)
        Vb = PotentialField(3.0 * np.exp(-40.0 * (xg - 0.25) ** 2))
        tau = Vb.sup_bound
        zg = z_grid_for(65, self.delta, tau)
        rng = np.random.default_rng(3)
        ratios = []
        for _ in range(10):
            co = rng.standard_normal(6) / (1.0 + np.arange(6)) ** 2
            fr = sum(c * np.sin((j + 1) * PI * self.x / self.delta)
                     for j, c in enumerate(co))
            ratios.append(hm.remling_map(fr, tau, self.delta, Vb, zg).norm_ratio)
        ratios = np.array(ratios)
        assert np.all(ratios > 0.5) and np.all(ratios < 2.0)
        assert ratios.max() / ratios.min() < 2.0

    def test_undersampled_z_grid_rejected(self):
        with pytest.raises(ValueError, match="four rows"):
            hm.remling_map(self.f, 0.0, self.delta, V0, np.linspace(0, 100, 30))

    def test_rank_deficiency_raises(self):
        with pytest.raises(RuntimeError, match="rank"):
            hm.remling_map(self.f, 0.0, self.delta, V0, np.full(268, 9.0))


class TestCsv:
    def test_window_csv(self, tmp_path):
        w = hm.build_exp_window(LAMS0_20[:4], [], 2, 0.5, 4)
        path = tmp_path / "window.csv"
        hm.window_to_csv(w, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "value_re", "value_im"]
        assert len(rows) == w.t_grid.size + 1
        assert float(rows[1][1]) == w.values[0].real
        assert float(rows[-1][2]) == w.values[-1].imag

    def test_interpolant_csv(self, tmp_path):
        it = hm.interpolate_lp([1.0], [1], 0.9, V0, pairs=build_pairs(V0, 1))
        path = tmp_path / "interp.csv"
        hm.interpolant_to_csv(it, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "value_re", "value_im"]
        assert len(rows) == it.x_grid.size + 1

    def test_frequency_round_trip(self, tmp_path):
        fs = hm.FrequencySet.from_values(PI * np.arange(1, 40))
        path = tmp_path / "freqs.csv"
        hm.frequencies_to_csv(fs, path)
        back = hm.frequencies_from_csv(path)
        assert np.array_equal(back.values, fs.values)

    def test_frequency_header_guard(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("wavelength\n1.0\n")
        with pytest.raises(ValueError, match="header"):
            hm.frequencies_from_csv(path)
