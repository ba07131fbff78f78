"""Forward Sturm-Liouville machinery on [0,1] with Dirichlet conditions.

Solutions psi(x, z) of -psi'' + V psi = E psi with psi(0)=0, psi'(0)=1,
Dirichlet eigenpairs under the normalization dphi_k(0)=1, asymptotics and
pointwise-estimate witnesses, and eigenfunction expansion coefficients.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _march

DEFAULT_GRID_N = 4096
EIG_RTOL = 1e-12

INTERP_RULES = ("piecewise-linear", "piecewise-constant")


class SolverOverflowError(RuntimeError):
    """Solution magnitude exceeded the overflow guard during marching."""

    def __init__(self, x, msg=None):
        self.x = float(x)
        super().__init__(msg or f"solution overflow while marching, at x = {self.x:.6g}")


class BracketError(RuntimeError):
    """Eigenvalue bracket could not be established (solver grid too coarse)."""


class PotentialField:
    """Real potential V sampled on the uniform grid x_i = i/n over [0,1].

    Immutable after construction.  interp_rule controls how V is evaluated
    between samples; sup_bound caches max|V| over the samples.
    """

    def __init__(self, samples, interp_rule="piecewise-linear"):
        samples = np.asarray(samples, dtype=np.float64).copy()
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.shape[0] < 17:
            raise ValueError("need n >= 16 grid cells (at least 17 samples)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if interp_rule not in INTERP_RULES:
            raise ValueError(f"interp_rule must be one of {INTERP_RULES}")
        samples.setflags(write=False)
        self.samples = samples
        self.interp_rule = interp_rule
        self.sup_bound = float(np.max(np.abs(samples)))

    @property
    def n(self):
        return self.samples.shape[0] - 1

    @property
    def x_grid(self):
        return np.linspace(0.0, 1.0, self.samples.shape[0])

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        n = self.n
        if self.interp_rule == "piecewise-linear":
            return np.interp(x, self.x_grid, self.samples)
        idx = np.clip(np.floor(x * n).astype(np.int64), 0, n - 1)
        return self.samples[idx]

    def half_samples(self, n_steps, length=1.0):
        """V at the 2*n_steps+1 half-step points of a march over [0, length]."""
        xh = np.linspace(0.0, length, 2 * n_steps + 1)
        return self(xh)

    def mean(self):
        return float(np.trapezoid(self.samples, dx=1.0 / self.n))

    @classmethod
    def constant(cls, c, n=256, interp_rule="piecewise-linear"):
        return cls(np.full(n + 1, float(c)), interp_rule)

    @classmethod
    def zero(cls, n=256):
        return cls.constant(0.0, n)

    @classmethod
    def from_function(cls, fn, n=DEFAULT_GRID_N, interp_rule="piecewise-linear"):
        x = np.linspace(0.0, 1.0, n + 1)
        return cls(np.asarray(fn(x), dtype=np.float64) * np.ones_like(x), interp_rule)

    def __repr__(self):
        return (f"PotentialField(n={self.n}, rule={self.interp_rule!r}, "
                f"sup={self.sup_bound:.4g})")


@dataclass(frozen=True)
class SpectralParam:
    """Spectral parameter with explicit convention.

    convention 'energy': value is E and the equation is -psi''+V psi = E psi.
    convention 'momentum': value is z with E = z^2.
    Conversion uses the principal branch Re z >= 0 (ties broken to Im z >= 0).
    """

    value: complex
    convention: str = "energy"

    def __post_init__(self):
        if self.convention not in ("energy", "momentum"):
            raise ValueError("convention must be 'energy' or 'momentum'")
        if not np.isfinite(self.value):
            raise ValueError("spectral parameter must be finite")

    @property
    def energy(self):
        if self.convention == "energy":
            return complex(self.value)
        z = complex(self.value)
        return z * z

    @property
    def z(self):
        if self.convention == "momentum":
            return complex(self.value)
        w = complex(np.sqrt(complex(self.value)))
        if w.real < 0.0 or (w.real == 0.0 and w.imag < 0.0):
            w = -w
        return w


@dataclass(frozen=True)
class SolutionAtZ:
    """IVP solution on the march grid; psi[0]=0 and dpsi[0]=1 by construction."""

    param: SpectralParam
    x_grid: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray

    def __post_init__(self):
        self.psi[0] = 0.0
        self.dpsi[0] = 1.0


@dataclass(frozen=True)
class EigenPair:
    k: int
    lam: float
    phi: np.ndarray
    dphi: np.ndarray
    dphi_at_1: float
    norm_sq: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("eigenvalue index k must be >= 1")
        if self.norm_sq <= 0.0:
            raise ValueError("norm_sq must be positive")


@dataclass(frozen=True)
class SpectralDatum:
    k: int
    lam: float
    dphi_at_1: float
    norm_sq: float = float("nan")


def auto_steps(z_max, floor=DEFAULT_GRID_N):
    """March step count for phase accuracy at momentum up to z_max.

    Chosen so z_max * h <= 0.02, which keeps the RK4 eigenvalue bias near
    (z h)^4 / 60 ~ 3e-9 relative.
    """
    n = max(int(floor), int(math.ceil(50.0 * max(1.0, z_max))))
    return ((n + 63) // 64) * 64


def _eig_auto_steps(V, K, floor=DEFAULT_GRID_N):
    z_max = (K + 1) * math.pi + math.sqrt(V.sup_bound + 1.0)
    return auto_steps(z_max, floor)


def solve_ivp(V, p, n_steps=DEFAULT_GRID_N):
    """March -psi'' + V psi = E psi, psi(0)=0, psi'(0)=1 across [0,1].

    Fixed-step RK4; global error O(n_steps^-4) for piecewise-linear V.
    Raises SolverOverflowError (carrying x) if the solution blows up.
    """
    if n_steps < 64:
        raise ValueError("n_steps must be >= 64")
    E = p.energy
    if not np.isfinite(E):
        raise ValueError("energy must be finite")
    h = 1.0 / n_steps
    vh = V.half_samples(n_steps)
    if E.imag == 0.0:
        psi, dpsi, ox = _march.trajectory_real(vh, np.array([E.real]), h)
        psi = psi.astype(np.complex128)
        dpsi = dpsi.astype(np.complex128)
    else:
        psi, dpsi, ox = _march.trajectory_complex(vh, np.array([E]), h)
    if np.isfinite(ox[0]):
        raise SolverOverflowError(ox[0])
    x = np.linspace(0.0, 1.0, n_steps + 1)
    return SolutionAtZ(param=p, x_grid=x, psi=psi[0], dpsi=dpsi[0])


# ---------------------------------------------------------------------------
# eigenvalue location


def _secant_roots(vh, h, guesses, lo, hi, rtol, max_iter=60):
    """Vectorized safeguarded secant on E -> psi(1, E) from per-root guesses.

    lo/hi are per-root clamp walls (the rigorous brackets).  Returns
    (roots, ok) where ok flags convergence inside the walls.
    """
    e0 = np.asarray(guesses, np.float64).copy()
    spread = np.maximum(1e-3, 1e-7 * np.abs(e0))
    e1 = e0 + spread
    g0 = _march.endpoint_real(vh, e0, h)[0]
    g1 = _march.endpoint_real(vh, e1, h)[0]
    ok = np.isfinite(g0) & np.isfinite(g1)
    done = np.zeros_like(ok)
    for _ in range(max_iter):
        act = ok & ~done
        if not act.any():
            break
        denom = g1 - g0
        step = np.zeros_like(e0)
        good = act & (denom != 0.0) & np.isfinite(denom)
        step[good] = -g1[good] * (e1[good] - e0[good]) / denom[good]
        bad = act & ~good
        ok[bad] = False
        enew = e1 + step
        wall = act & ((enew < lo) | (enew > hi) | ~np.isfinite(enew))
        ok[wall] = False
        conv = act & ok & (np.abs(step) <= rtol * np.maximum(1.0, np.abs(enew)))
        e0 = np.where(act, e1, e0)
        g0 = np.where(act, g1, g0)
        e1 = np.where(act & ok, enew, e1)
        done |= conv
        if (ok & ~done).any():
            g1_new = _march.endpoint_real(vh, e1, h)[0]
            g1 = np.where(act & ok, g1_new, g1)
            ok &= np.isfinite(g1) | done
    return e1, ok & done


def _count_at(vh, E, h):
    """Full interior sign-change count of psi(., E), the Sturm index."""
    psi1, _, osc, lastsig, ox = _march.endpoint_real(vh, E, h)
    if np.any(np.isfinite(ox)):
        raise SolverOverflowError(ox[np.isfinite(ox)][0])
    return _march.full_count(psi1, osc, lastsig)


def _bisect_roots(vh, h, ks, lo, hi, rtol):
    """Oscillation-count bisection plus secant refinement for indices ks.

    Robust path: bisect on the Sturm predicate count(E) >= k, which flips
    exactly at lambda_k, then polish with a wall-guarded secant.  All
    marches are batched across the requested indices.
    """
    ks = np.asarray(ks, np.int64)
    lo = np.asarray(lo, np.float64).copy()
    hi = np.asarray(hi, np.float64).copy()
    if np.any(_count_at(vh, lo, h) >= ks) or np.any(_count_at(vh, hi, h) < ks):
        raise BracketError(
            "oscillation counts inconsistent at bracket walls; "
            "solver grid too coarse for the requested index range")
    for _ in range(52):
        mid = 0.5 * (lo + hi)
        up = _count_at(vh, mid, h) >= ks
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.all(hi - lo <= np.maximum(1e-9, rtol * np.abs(hi))):
            break
    # the predicate flips at the root, so hi converges onto it from above;
    # a short secant pass restores full floating-point accuracy
    roots, ok = _secant_roots(vh, h, hi, lo - 1e-6, hi + (hi - lo) + 1e-6, rtol, max_iter=30)
    return np.where(ok, roots, hi)


def _eig_values(V, K, n_steps, rtol=EIG_RTOL):
    """First K Dirichlet eigenvalues.  Fast verified-secant with robust fallback."""
    tau = V.sup_bound
    h = 1.0 / n_steps
    vh = V.half_samples(n_steps)
    ks = np.arange(1, K + 1)
    base = (ks * math.pi) ** 2
    lo = base - tau - 1.0
    hi = base + tau + 1.0
    # containment slack: the discrete root carries an O((z h)^4) bias
    # relative to the continuum bracket [base - tau, base + tau]
    bias = 10.0 * ((np.sqrt(base + tau + 1.0) * h) ** 4 / 60.0) * (base + tau + 1.0)
    slack = 1e-6 + bias
    guesses = base + V.mean()
    roots, ok = _secant_roots(vh, h, guesses, lo, hi, rtol)
    # verify: oscillation index (endpoint-robust count) and containment
    if ok.any():
        _, _, osc, _, ox = _march.endpoint_real(vh, roots, h)
        ok &= ~np.isfinite(ox)
        ok &= osc == ks - 1
        ok &= (roots >= base - tau - slack) & (roots <= base + tau + slack)
    order_ok = bool(np.all(np.diff(roots) > 0.0)) if ok.all() else True
    if not (ok.all() and order_ok):
        redo = ~ok if not ok.all() else np.ones(K, bool)
        roots = roots.copy()
        roots[redo] = _bisect_roots(vh, h, ks[redo], lo[redo], hi[redo], rtol)
        _, _, osc, _, ox = _march.endpoint_real(vh, roots, h)
        if np.any(np.isfinite(ox)) or np.any(osc != ks - 1) or np.any(np.diff(roots) <= 0.0):
            raise BracketError(
                "eigenvalue search failed verification within "
                f"[-sup(V), ((K+2)pi)^2 + sup(V)] for K={K}; "
                "increase n_steps")
    return roots


def dirichlet_eigs(V, K, n_steps=None, rtol=EIG_RTOL):
    """First K Dirichlet eigenpairs of -phi'' + V phi = lambda phi.

    Normalization dphi(0) = 1.  Brackets come from the rigorous inclusion
    lambda_k in [(k pi)^2 - sup|V|, (k pi)^2 + sup|V|]; roots are located by
    oscillation-count bisection plus secant refinement to relative tolerance
    rtol, with a verified asymptotic-guess fast path.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if n_steps is None:
        n_steps = _eig_auto_steps(V, K)
    lam = _eig_values(V, K, n_steps, rtol)
    h = 1.0 / n_steps
    vh = V.half_samples(n_steps)
    phi, dphi, ox = _march.trajectory_real(vh, lam, h)
    if np.any(np.isfinite(ox)):
        raise SolverOverflowError(ox[np.isfinite(ox)][0])
    pairs = []
    for i, k in enumerate(range(1, K + 1)):
        p = phi[i]
        scale = float(np.max(np.abs(p)))
        if abs(p[-1]) > 1e-5 * scale:
            raise BracketError(f"eigenfunction k={k} fails the endpoint condition")
        norm_sq = float(np.trapezoid(p * p, dx=h))
        pairs.append(EigenPair(k=k, lam=float(lam[i]), phi=p, dphi=dphi[i],
                               dphi_at_1=float(dphi[i, -1]), norm_sq=norm_sq))
    return pairs


def verify_asymptotics(V, K, n_steps=None):
    """sup over 2 <= k <= K of k * |sqrt(lambda_k) - k pi|."""
    return float(np.max(asymptotic_witnesses(V, K, n_steps)[1]))


def asymptotic_witnesses(V, K, n_steps=None):
    """The sequence k * |sqrt(lambda_k) - k pi| for k = 2..K."""
    if K < 2:
        raise ValueError("need K >= 2")
    if n_steps is None:
        n_steps = _eig_auto_steps(V, K)
    lam = _eig_values(V, K, n_steps)
    ks = np.arange(2, K + 1)
    lam_t = lam[1:]
    if np.any(lam_t <= 0.0):
        raise ValueError("nonpositive eigenvalue for k >= 2; shift V by its sup bound first")
    w = ks * np.abs(np.sqrt(lam_t) - ks * math.pi)
    return ks, w


def verify_psi_estimates(V1, V2=None, z_grid=(), derivative=False, n_steps=None):
    """Empirical constant of the free-solution comparison estimates.

    Returns the max over the z grid, over x, and over the supplied
    potentials of |psi - sin(zx)/z| (1+|z|^2) e^{-|Im z| x}, or with
    derivative=True of |dpsi - cos(zx)| (1+|z|) e^{-|Im z| x}.
    """
    zs = np.asarray(list(z_grid), np.complex128)
    if zs.size == 0:
        raise ValueError("z_grid must be non-empty")
    if n_steps is None:
        n_steps = auto_steps(float(np.max(np.abs(zs))))
    pots = [V1] if V2 is None else [V1, V2]
    h = 1.0 / n_steps
    x = np.linspace(0.0, 1.0, n_steps + 1)
    best = 0.0
    E = zs * zs
    for V in pots:
        vh = V.half_samples(n_steps)
        psi, dpsi, ox = _march.trajectory_complex(vh, E, h)
        if np.any(np.isfinite(ox)):
            raise SolverOverflowError(ox[np.isfinite(ox)][0])
        zx = zs[:, None] * x[None, :]
        small = np.abs(zs) < 1e-12
        free = np.empty_like(psi)
        if small.any():
            free[small] = x[None, :]
        nz = ~small
        free[nz] = np.sin(zx[nz]) / zs[nz, None]
        damp = np.exp(-np.abs(zs.imag)[:, None] * x[None, :])
        if derivative:
            dev = np.abs(dpsi - np.cos(zx)) * (1.0 + np.abs(zs))[:, None] * damp
        else:
            dev = np.abs(psi - free) * (1.0 + np.abs(zs) ** 2)[:, None] * damp
        best = max(best, float(np.max(dev)))
    return best


def expansion_coeffs(f, V, K, n_steps=None, pairs=None):
    """Coefficients a_k = (f, phi_k) / ||phi_k||^2 by trapezoid quadrature.

    f may be a callable on [0,1] or an array on a uniform grid (linearly
    resampled onto the solver grid).  f must vanish at both endpoints.
    """
    if pairs is None:
        if n_steps is None:
            n_steps = _eig_auto_steps(V, K)
        pairs = dirichlet_eigs(V, K, n_steps)
    else:
        K = min(K, len(pairs))
        n_steps = pairs[0].phi.shape[0] - 1
    x = np.linspace(0.0, 1.0, n_steps + 1)
    fx = sample_on_grid(f, x)
    if abs(fx[0]) > 1e-12 or abs(fx[-1]) > 1e-12:
        raise ValueError("f must vanish at both endpoints")
    if n_steps < 8 * K:
        warnings.warn("solver grid has fewer than 8 points per requested mode; "
                      "quadrature accuracy degrades", RuntimeWarning)
    h = 1.0 / n_steps
    out = np.empty(K)
    for i in range(K):
        out[i] = np.trapezoid(fx * pairs[i].phi, dx=h) / pairs[i].norm_sq
    return out


def sample_on_grid(f, x):
    """Evaluate f (callable or uniform-grid array) at grid points x."""
    if callable(f):
        return np.asarray(f(x), np.float64) * np.ones_like(x)
    arr = np.asarray(f, np.float64)
    src = np.linspace(0.0, 1.0, arr.shape[0])
    return np.interp(x, src, arr)


# ---------------------------------------------------------------------------
# CSV interfaces


def potential_to_csv(V, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "V"])
        for x, v in zip(V.x_grid, V.samples):
            w.writerow([repr(float(x)), repr(float(v))])


def potential_from_csv(path, interp_rule="piecewise-linear"):
    xs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "x":
                continue
            xs.append(float(row[0]))
            vs.append(float(row[1]))
    xs = np.asarray(xs)
    if not np.allclose(np.diff(xs), xs[1] - xs[0], rtol=1e-9, atol=1e-12):
        raise ValueError("potential CSV must be on a uniform grid")
    return PotentialField(np.asarray(vs), interp_rule)


def eigendata_to_csv(pairs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda", "dphi_at_1", "norm_sq"])
        for p in pairs:
            w.writerow([p.k, repr(p.lam), repr(p.dphi_at_1), repr(p.norm_sq)])


def eigendata_from_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "k":
                continue
            rows.append(SpectralDatum(int(row[0]), float(row[1]),
                                      float(row[2]), float(row[3])))
    return rows
