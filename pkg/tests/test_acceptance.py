"""End-to-end acceptance checks, one test per shipped guarantee.

Each test states a user-facing promise of the package (solver exactness,
asymptotics, estimate constants, zero-density plateaus, reconstruction
accuracy, trace cross-validation, coefficient decay, exceptional-set
structure, window residuals, interpolation stability, gauge invariance)
and verifies it at the advertised tolerance.  Every tolerance here is a
contract; loosening one is an interface change, not a test fix.
"""

import time

import numpy as np
import pytest

from sturmkit import _march, analytic, harmonics, inverse, pdesim, slcore
from sturmkit.analytic import EntireSampler, build_F, density_profile
from sturmkit.slcore import PotentialField, dirichlet_eigs

PI = np.pi
V0 = PotentialField.zero()

XB = np.linspace(0.0, 1.0, 4097)
VBUMP = PotentialField(2.0 * np.exp(-30.0 * (XB - 0.45) ** 2))


def test_01_eigen_solver_exactness():
    _march.warmup()
    t0 = time.time()
    pairs = dirichlet_eigs(V0, 50)
    elapsed = time.time() - t0
    for p in pairs:
        want = (p.k * PI) ** 2
        assert abs(p.lam - want) <= 1e-8 * want, f"k={p.k}"
        assert abs(p.dphi_at_1 - (-1.0) ** p.k) <= 1e-8, f"k={p.k}"
    assert elapsed < 5.0, f"solve took {elapsed:.2f}s"


def test_02_eigenvalue_asymptotics_random_potentials():
    rng = np.random.default_rng(2026)
    x = np.linspace(0.0, 1.0, 4097)
    for _ in range(5):
        c = rng.standard_normal(4)
        vals = sum(cj * np.sin((j + 1) * PI * x) for j, cj in enumerate(c))
        vals += rng.uniform(-1.0, 1.0)
        vals *= 5.0 / max(1.0, float(np.max(np.abs(vals))))
        V = PotentialField(vals)
        ks, w = slcore.asymptotic_witnesses(V, 64)
        assert np.all(np.isfinite(w))
        assert np.max(w) <= 2.0
        tail = np.array([w[ks >= j].max() for j in range(20, 65)])
        assert np.all(np.diff(tail) <= 0.0)


def test_03_estimate_constants_stable_under_radius_doubling():
    def sweep(r):
        re = np.arange(1.0, r + 0.5, 1.0).astype(complex)
        im = np.arange(1.0, r / 2.0 + 0.5, 1.0) + 3.0j
        return np.concatenate([re, im])

    pots = [PotentialField.constant(1.0), VBUMP,
            PotentialField(3.0 * np.sin(2.0 * PI * XB))]
    for V in pots:
        for deriv in (False, True):
            c50 = slcore.verify_psi_estimates(V, z_grid=sweep(50.0),
                                              derivative=deriv)
            c100 = slcore.verify_psi_estimates(V, z_grid=sweep(100.0),
                                               derivative=deriv)
            assert np.isfinite(c50) and np.isfinite(c100)
            assert abs(c100 - c50) <= 0.10 * c50, f"{c50} vs {c100}"


def test_04_zero_density_plateau():
    t0 = time.time()
    x = np.linspace(0.0, 1.0, 4097)
    V2 = PotentialField(np.where(x < 0.5, 4.0, 0.0),
                        interp_rule="piecewise-constant")
    F = build_F(V0, V2, 0.6)
    prof = density_profile(F, [50.0, 100.0, 200.0])
    assert prof.plateau <= 0.6 / PI + 0.02, f"plateau {prof.plateau}"

    def sine_cf(z):
        z = np.asarray(z, complex)
        small = np.abs(z) < 1e-12
        safe = np.where(small, 1.0, z)
        return np.where(small, 0.6, np.sin(0.6 * z) / safe)

    sine = EntireSampler(evaluator=sine_cf, x0=0.6)
    prof_s = density_profile(sine, [50.0, 100.0, 200.0])
    assert abs(prof_s.plateau - 0.6 / PI) <= 0.02 * (0.6 / PI)
    assert time.time() - t0 < 60.0


def test_05_reconstruction_accuracy_and_shift_equivariance():
    t0 = time.time()
    xf = np.linspace(0.0, 1.0, 16385)
    vals = 5.0 * np.exp(-50.0 * (xf - 0.3) ** 2) * (xf <= 0.6)
    V_true = PotentialField(vals)
    eps = 0.3
    S = inverse.IndexSet(tuple(range(1, 41)))
    tail_x = np.linspace(1.0 - eps, 1.0, 257)
    w = np.concatenate([np.ones(40), 0.05 * np.ones(40)])

    def solve(V, init):
        data = inverse.forward_data(V, S, 40)
        prob = inverse.ReconstructionProblem(
            data=data, known_tail=tuple(V(tail_x)), epsilon=eps, weights=w)
        return inverse.reconstruct(prob, init, max_iter=40)

    rep = solve(V_true, PotentialField.zero())
    xg = np.linspace(0.0, 1.0, 4097)
    err = np.sqrt(np.trapezoid((rep.V_hat(xg) - V_true(xg)) ** 2, xg)
                  / np.trapezoid(V_true(xg) ** 2, xg))
    assert err <= 0.05, f"relative L2 error {err:.4f}"

    shift = 2.0
    rep_sh = solve(PotentialField(vals + shift), PotentialField.constant(shift))
    dev = np.max(np.abs(rep_sh.V_hat(xg) - rep.V_hat(xg) - shift))
    assert dev <= 1e-8, f"shift deviation {dev:.3e}"
    assert time.time() - t0 < 300.0


def test_06_wave_trace_cross_validation():
    def f_poly(x):
        return x**2 * (1.0 - x) ** 2

    cfg = pdesim.WaveConfig(V=VBUMP, f=f_poly, T=2.5, K=128)
    tr = pdesim.wave_trace(cfg, n_t=2048)
    fd = pdesim.fdtd_wave_oracle(cfg, n_space=4096)
    for spec_side, fd_side in ((tr.left, fd.left), (tr.right, fd.right)):
        oracle = np.interp(tr.t_grid, fd.t_grid, fd_side)
        l2 = np.sqrt(np.trapezoid((spec_side - oracle) ** 2, tr.t_grid) / cfg.T)
        assert l2 <= 1e-3, f"L2 gap {l2:.2e}"

    cfg0 = pdesim.WaveConfig(V=V0, f=lambda x: np.sin(PI * x), T=2.5, K=8)
    tr0 = pdesim.wave_trace(cfg0, n_t=2048)
    assert np.max(np.abs(tr0.left - PI * np.cos(PI * tr0.t_grid))) <= 1e-6


def test_07_coefficient_decay_limits():
    f = lambda x: x**2 * (1.0 - x) ** 3
    w = pdesim.coeff_decay_witness(V0, f, 64)
    vals = {k: v for k, v in w}
    # f''(0) = 2 and f''(1) = 0, so both parity limits sit at -2
    assert abs(vals[64] - (-2.0)) <= 0.02 * 2.0
    assert abs(vals[63] - (-2.0)) <= 0.02 * 2.0
    assert min(abs(v) for k, v in w if k >= 4) >= 0.5


def test_08_exceptional_set_structure_and_density():
    zero = lambda x: 0.0 * np.asarray(x)
    P = pdesim.exceptional_set_P(V0, zero, zero, 0.5, 2000)
    assert P.members == tuple(range(4, 2001, 4))
    assert abs(P.density(2000) - 0.25) <= 1e-3

    f = lambda x: 0.01 * np.sin(PI * x)
    F = lambda x: 0.01 * x**2 * (1.0 - x) ** 2
    Pg = pdesim.exceptional_set_P(VBUMP, f, F, 0.5, 2000)
    assert Pg.density(2000) <= 0.25 + 0.05


def test_09_window_residuals_and_trace_extraction():
    # Orthogonal spectra: the constraint pattern is the one cos(3 pi t)
    # on [0, 2] realizes exactly, confirmed by independent quadrature.
    lam = (PI * np.arange(1, 17)) ** 2
    w = harmonics.build_cos_window(lam, lam, 3, 2.5, 16)
    assert w.max_residual <= 1e-8
    nodes, wq = harmonics._gl_nodes(0.0, 2.0, 600)
    ref = np.cos(3.0 * PI * nodes)
    for k in range(1, 17):
        target = 1.0 if k == 3 else 0.0
        val = float(np.sum(wq * ref * np.cos(k * PI * nodes)))
        assert abs(val - target) <= 1e-8

    V1 = PotentialField.constant(1.0)
    l0 = np.array([p.lam for p in dirichlet_eigs(V0, 20)])
    l1 = np.array([p.lam for p in dirichlet_eigs(V1, 20)])
    wm = harmonics.build_cos_window(l0, l1, 5, 2.5, 20)
    assert wm.max_residual <= 1e-6

    f = lambda x: x * (1.0 - x) * np.exp(x)
    a_direct = slcore.expansion_coeffs(f, V0, 20)[4]
    tr0 = pdesim.wave_trace(pdesim.WaveConfig(V=V0, f=f, T=2.5, K=20), n_t=8192)
    tr1 = pdesim.wave_trace(pdesim.WaveConfig(V=V1, f=f, T=2.5, K=20), n_t=8192)
    got = harmonics.pair_window_with_trace(wm, tr0.t_grid, tr0.left - tr1.left)
    assert abs(got - a_direct) <= 1e-4, f"extraction gap {abs(got - a_direct):.2e}"


def test_10_interpolation_stability_and_kernel_matching():
    P = list(range(2, 41, 2))
    eps = 0.9
    pairs = dirichlet_eigs(V0, 40, n_steps=16 * slcore._eig_auto_steps(V0, 40))
    pairs_fine = dirichlet_eigs(V0, 40,
                                n_steps=64 * slcore._eig_auto_steps(V0, 40))
    rng = np.random.default_rng(10)
    p_arr = np.asarray(P, dtype=np.float64)
    witnesses, worst_resid = [], 0.0
    for _ in range(100):
        c = rng.standard_normal(20)
        c /= np.sqrt(np.sum(p_arr**2 * c**2))
        it = harmonics.interpolate_lp(c, P, eps, V0, pairs=pairs,
                                      pairs_fine=pairs_fine)
        witnesses.append(it.witness)
        worst_resid = max(worst_resid, float(np.max(it.constraint_residuals)))
    witnesses = np.array(witnesses)
    assert worst_resid <= 1e-8, f"worst residual {worst_resid:.2e}"
    spread = float(witnesses.max() / witnesses.min())
    assert spread <= 10.0, f"witness spread {spread:.3f}"

    delta = 0.5
    x = np.linspace(0.0, delta, 65)
    f = np.sin(2.0 * PI * x / delta) * x * (delta - x)

    def z_grid_for(n_out, tau):
        u = np.linspace(0.0, 1.3 * n_out * PI / delta, 4 * n_out + 8)
        return u * u - tau

    res = harmonics.remling_map(f, 0.0, delta, V0, z_grid_for(65, 0.0))
    rel = np.linalg.norm(res.values - f) / np.linalg.norm(f)
    assert rel <= 1e-6, f"identity error {rel:.2e}"

    Vb = PotentialField(3.0 * np.exp(-40.0 * (XB - 0.25) ** 2))
    tau = Vb.sup_bound
    zg = z_grid_for(65, tau)
    fwd = harmonics.remling_map(f, tau, delta, Vb, zg)
    back = harmonics.remling_map(fwd.values, tau, delta, Vb, zg, inverse=True)
    rel_rt = np.linalg.norm(back.values - f) / np.linalg.norm(f)
    assert rel_rt <= 1e-4, f"round-trip error {rel_rt:.2e}"


def test_11_gauge_invariance_of_boundary_traces():
    f1 = lambda x: np.sin(PI * x)
    Fz = lambda x: 0.0 * np.asarray(x)

    # Third gauge: a three-eigenfunction combination with both endpoint
    # slopes zeroed.  Built from the true modes so the K=32 budget carries
    # it exactly; a generic slope-vanishing gauge would leave a constant
    # trace offset equal to the truncated tail of its mode series.
    pairs = dirichlet_eigs(VBUMP, 3)
    d = [p.dphi_at_1 for p in pairs]
    c12 = np.linalg.solve(np.array([[1.0, 1.0], [d[0], d[1]]]),
                          [-1.0, -d[2]])
    c = np.array([c12[0], c12[1], 1.0])
    xg = np.linspace(0.0, 1.0, pairs[0].phi.shape[0])
    g_s = sum(ci * p.phi for ci, p in zip(c, pairs))
    gxx_s = sum(ci * (VBUMP(xg) - p.lam) * p.phi for ci, p in zip(c, pairs))
    g_combo = lambda x: np.interp(x, xg, g_s)
    gxx_combo = lambda x: np.interp(x, xg, gxx_s)

    gauges = [
        (lambda x: np.sin(2.0 * PI * x),
         lambda x: -((2.0 * PI) ** 2) * np.sin(2.0 * PI * x), False),
        (lambda x: x * (1.0 - x),
         lambda x: -2.0 * np.ones_like(np.asarray(x, float)), False),
        (g_combo, gxx_combo, True),
    ]
    for g, gxx, slope_vanishes in gauges:
        dev = pdesim.gauge_pair_check(VBUMP, f1, Fz, g, 0.3, 1.0, K=32,
                                      g_xx=gxx, n_t=400)
        assert dev <= 1e-6, f"gauge deviation {dev:.2e}"
        if slope_vanishes:
            f2 = lambda x: f1(x) + g(x)
            F2 = lambda x: Fz(x) + (-gxx(x) + VBUMP(x) * g(x))
            mk = lambda ff, FF: pdesim.SchrodingerConfig(
                V=VBUMP, f=ff, F=FF, delta=0.3, T=1.0, K=32)
            t1 = pdesim.schrodinger_trace(mk(f1, Fz), n_t=400)
            t2 = pdesim.schrodinger_trace(mk(f2, F2), n_t=400)
            assert np.max(np.abs(t2.left - t1.left)) <= 1e-6
            assert np.max(np.abs(t2.right - t1.right)) <= 1e-6
