"""Nonharmonic window functions, band-limited interpolation, and the
kernel-matching map between a shifted sine model and a potential's solutions.

The window builders solve small moment problems: find the minimal-norm
function on a time interval whose pairings with a prescribed family of
oscillations hit a delta pattern.  Feasibility at a given truncation level
is checked by independent quadrature, never assumed.  The interpolation
routine plays the same game in space, using Dirichlet eigenfunctions
restricted to a subinterval (0, epsilon).
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _march, slcore
from .pdesim import _cutcell_nodal_weights
from .slcore import PotentialField, auto_steps, dirichlet_eigs

SV_CUTOFF = 1e-10
RESIDUAL_BAR = 1e-6
COS_ARG_CAP = 50.0
VALUE_MATCH_RTOL = 1e-9
WINDOW_GRID_N = 2048


class InfeasibleTruncationError(RuntimeError):
    """The moment problem has no usable solution at this truncation level."""

    def __init__(self, msg, max_residual=None):
        super().__init__(msg)
        self.max_residual = max_residual


@dataclass(frozen=True)
class FrequencySet:
    """Sorted real frequencies with a strictly positive separation."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise ValueError("frequency set must be nonempty")
        if not np.all(np.isfinite(v)):
            raise ValueError("frequencies must be finite")
        if v.size > 1 and np.min(np.diff(v)) <= 0.0:
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values):
        return cls(np.sort(np.asarray(values, dtype=np.float64).ravel()))

    @property
    def separation(self):
        v = self.values
        return math.inf if v.size < 2 else float(np.min(np.diff(v)))

    @property
    def span(self):
        return float(self.values[-1] - self.values[0])

    def __len__(self):
        return int(self.values.size)


@dataclass(frozen=True)
class WindowFunction:
    """A window on [0, T] stored both sampled and in closed form.

    kind 'cos' means sum_j c_j cos(sqrt(lam_j) t) (real); kind 'exp' means
    sum_j c_j exp(-i lam_j t) (complex).  constraint_residuals holds the
    verified pairing errors against the target delta pattern, one per
    constraint value in freqs.
    """

    t_grid: np.ndarray
    values: np.ndarray
    constraint_residuals: np.ndarray
    kind: str
    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        if self.kind not in ("cos", "exp"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.values.shape != self.t_grid.shape:
            raise ValueError("window values must share the time grid shape")

    @property
    def horizon(self):
        return float(self.t_grid[-1])

    @property
    def max_residual(self):
        return float(np.max(self.constraint_residuals))

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "cos":
            return np.real(self.coeffs @ _coslam_rows(self.freqs, t.ravel())).reshape(t.shape)
        rows = np.exp(-1j * np.outer(self.freqs, t.ravel()))
        return (self.coeffs @ rows).reshape(t.shape)


@dataclass(frozen=True)
class SequenceLP:
    """A finite sequence c indexed by mode numbers P, normed by sum p^2 |c_p|^2."""

    entries: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.entries).ravel()
        p = np.asarray(self.indices, dtype=np.int64).ravel()
        if c.size != p.size:
            raise ValueError("entries and indices must have equal length")
        if p.size == 0:
            raise ValueError("sequence must be nonempty")
        if np.min(p) < 1 or (p.size > 1 and np.min(np.diff(p)) <= 0):
            raise ValueError("indices must be strictly increasing positive integers")
        object.__setattr__(self, "entries", c)
        object.__setattr__(self, "indices", p)

    def norm(self):
        return float(np.sqrt(np.sum(self.indices.astype(np.float64) ** 2
                                    * np.abs(self.entries) ** 2)))


@dataclass(frozen=True)
class Interpolant:
    """Result of band-limited interpolation on (0, epsilon)."""

    x_grid: np.ndarray
    values: np.ndarray
    constraint_residuals: np.ndarray
    witness: float
    coefficients: np.ndarray

    @property
    def max_residual(self):
        return float(np.max(self.constraint_residuals))


@dataclass(frozen=True)
class KernelMatchResult:
    """Output of the kernel-matching map on (0, delta)."""

    x_grid: np.ndarray
    values: np.ndarray
    norm_ratio: float
    lsq_residual: float


# ---------------------------------------------------------------------------
# density estimation


def beurling_density(freqs, window_radii):
    """Upper-density estimate: max over positions of counts in (x, x+r] per r.

    freqs is a FrequencySet or an array of frequency values.  Each radius
    must lie in (0, span/2]; the estimate reported is the value at the
    largest radius.  Finite truncations bias the estimate upward by about
    one point per window, so treat the result as an upper bound.
    """
    v = freqs.values if isinstance(freqs, FrequencySet) else \
        np.sort(np.asarray(freqs, dtype=np.float64).ravel())
    radii = np.asarray(window_radii, dtype=np.float64).ravel()
    if radii.size == 0:
        raise ValueError("need at least one window radius")
    span = float(v[-1] - v[0])
    if span <= 0.0:
        raise ValueError("frequency set must have positive span")
    if np.any(radii <= 0.0) or np.any(radii > span / 2.0 + 1e-12):
        raise ValueError("window radii must lie in (0, span/2]")
    est = 0.0
    for r in np.sort(radii):
        # Anchor a half-open window (x, x+r] at each point and slide; the
        # max count is attained with the left edge just below some value.
        hi = np.searchsorted(v, v + r, side="right")
        count = int(np.max(hi - np.arange(v.size)))
        est = count / float(r)
    return est


# ---------------------------------------------------------------------------
# shared quadrature and solve helpers


def _gl_nodes(a, b, n):
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _coslam_rows(lams, t):
    """Rows cos(sqrt(lam_i) t_j), with the negative branch going to cosh."""
    z = np.sqrt(np.asarray(lams, dtype=complex))[:, None] * np.asarray(t)[None, :]
    worst = float(np.max(np.abs(z.imag))) if z.size else 0.0
    if worst > COS_ARG_CAP:
        raise ValueError(
            f"cosh argument {worst:.1f} exceeds the cap {COS_ARG_CAP:g}; "
            "the window horizon is too long for this negative eigenvalue"
        )
    return np.cos(z).real


def _svd_solve(G, b, cutoff=SV_CUTOFF):
    """Least-squares solve through an SVD with relative singular-value cutoff."""
    U, s, Vh = np.linalg.svd(G)
    keep = s > cutoff * s[0]
    y = (U.conj().T @ b)[keep] / s[keep]
    return Vh.conj().T[:, keep] @ y


def _truncate_spectrum(lams, k_trunc, name):
    v = np.asarray(lams, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v[:k_trunc]


# ---------------------------------------------------------------------------
# window builders


def build_cos_window(lams1, lams2, m, T, k_trunc):
    """Window eta on [0, T] with int eta cos(sqrt(lam) t) dt = delta pattern.

    The pairing target is 1 at the m-th value of lams1 (and at any value of
    either list coinciding with it) and 0 at every other value of both lists,
    each truncated at k_trunc.  eta is the minimal-norm combination of the
    constraint oscillations themselves, found through the Gram matrix with a
    singular-value cutoff; feasibility is then verified by independent
    quadrature at four times the build resolution, and a verified residual
    above 1e-6 raises rather than returning a bad window.
    """
    if T <= 2.0:
        raise ValueError("window horizon T must exceed 2")
    l1 = _truncate_spectrum(lams1, k_trunc, "lams1")
    l2 = _truncate_spectrum(lams2, k_trunc, "lams2")
    if not (1 <= m <= l1.size):
        raise ValueError(f"target index m={m} outside the first spectrum")
    lam_m = float(l1[m - 1])

    merged = np.concatenate([l1, l2])
    order = np.argsort(merged)
    vals = []
    for v in merged[order]:
        tol = VALUE_MATCH_RTOL * max(1.0, abs(v))
        if vals and abs(v - vals[-1]) <= tol:
            continue
        vals.append(float(v))
    vals = np.asarray(vals)
    b = np.where(np.abs(vals - lam_m) <= VALUE_MATCH_RTOL * max(1.0, abs(lam_m)),
                 1.0, 0.0)

    # Node count follows the fastest oscillation sqrt(lam_max); the
    # verification pass reuses the same rule at 4x density.
    rate = math.sqrt(max(1.0, float(np.max(np.abs(vals)))))
    n_gl = max(32, math.ceil(8.0 * rate * T / math.pi))
    nodes, wq = _gl_nodes(0.0, T, n_gl)
    C = _coslam_rows(vals, nodes)
    G = (C * wq) @ C.T
    coeffs = _svd_solve(G, b)

    nodes4, wq4 = _gl_nodes(0.0, T, 4 * n_gl)
    C4 = _coslam_rows(vals, nodes4)
    eta4 = coeffs @ C4
    resid = np.abs(C4 @ (wq4 * eta4) - b)
    worst = float(np.max(resid))
    if worst > RESIDUAL_BAR:
        raise InfeasibleTruncationError(
            f"verified constraint residual {worst:.3e} exceeds {RESIDUAL_BAR:g}; "
            "the delta pattern is not attainable at this truncation",
            max_residual=worst,
        )
    t_grid = np.linspace(0.0, T, WINDOW_GRID_N + 1)
    values = np.real(coeffs @ _coslam_rows(vals, t_grid))
    return WindowFunction(t_grid=t_grid, values=values, constraint_residuals=resid,
                          kind="cos", freqs=vals, coeffs=coeffs)


def build_exp_window(lams1, lams2, m, delta, k_trunc):
    """Window eta on [0, delta] with int eta exp(i lam t) dt = delta pattern.

    Targets 1 at the m-th value of lams1, 0 at all other values of both
    truncated lists, and 0 for the plain mean of eta (the constant row keeps
    the window from leaking into the zero-frequency part of a trace).  Any
    value shared between the two lists makes the pattern contradictory, so
    that raises immediately.  The Gram matrix is assembled in closed form
    and the solve is verified by quadrature at the end.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    l1 = _truncate_spectrum(lams1, k_trunc, "lams1")
    l2 = _truncate_spectrum(lams2, k_trunc, "lams2")
    if not (1 <= m <= l1.size):
        raise ValueError(f"target index m={m} outside the first spectrum")
    lam_m = float(l1[m - 1])
    if abs(lam_m) <= VALUE_MATCH_RTOL:
        raise ValueError("target eigenvalue must be nonzero")
    if l1.size and l2.size:
        gap = np.min(np.abs(l1[:, None] - l2[None, :]))
        scale = max(1.0, float(np.max(np.abs(l1))), float(np.max(np.abs(l2))))
        if gap <= VALUE_MATCH_RTOL * scale:
            raise InfeasibleTruncationError(
                "the two spectra share an eigenvalue at this truncation; "
                "the one-versus-zero pattern has no solution"
            )

    vals = np.concatenate([[0.0], l1, l2])
    b = np.zeros(vals.size, dtype=complex)
    b[1 + (m - 1)] = 1.0

    # Gram of exp(-i lam_j t) over [0, delta] against exp(i lam_i t):
    # entries (exp(i mu delta) - 1) / (i mu) at mu = lam_i - lam_j.
    mu = vals[:, None] - vals[None, :]
    small = np.abs(mu) < 1e-12
    mu_safe = np.where(small, 1.0, mu)
    G = np.where(small, delta, (np.exp(1j * mu_safe * delta) - 1.0) / (1j * mu_safe))
    coeffs = _svd_solve(G, b)

    rate = max(1.0, float(np.max(np.abs(vals))))
    n_gl = 4 * max(32, math.ceil(8.0 * rate * delta / math.pi))
    nodes, wq = _gl_nodes(0.0, delta, n_gl)
    eta = coeffs @ np.exp(-1j * np.outer(vals, nodes))
    resid = np.abs(np.exp(1j * np.outer(vals, nodes)) @ (wq * eta) - b)
    worst = float(np.max(resid))
    if worst > RESIDUAL_BAR:
        raise InfeasibleTruncationError(
            f"verified constraint residual {worst:.3e} exceeds {RESIDUAL_BAR:g}; "
            "the delta pattern is not attainable at this truncation",
            max_residual=worst,
        )
    t_grid = np.linspace(0.0, delta, WINDOW_GRID_N + 1)
    values = coeffs @ np.exp(-1j * np.outer(vals, t_grid))
    return WindowFunction(t_grid=t_grid, values=values, constraint_residuals=resid,
                          kind="exp", freqs=vals, coeffs=coeffs)


def pair_window_with_trace(window, t_grid, signal):
    """Trapezoid pairing int signal(t) window(t) dt on the signal's own grid.

    The window is evaluated in closed form on t_grid, so the only quadrature
    error is the trace's.  The grid must cover the window horizon.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if t[-1] < window.horizon - 1e-12:
        raise ValueError("trace is shorter than the window horizon")
    mask = t <= window.horizon + 1e-12
    tt = t[mask]
    vals = np.asarray(signal)[mask] * window(tt)
    return complex(np.trapezoid(vals, tt)) if np.iscomplexobj(vals) \
        else float(np.trapezoid(vals, tt))


# ---------------------------------------------------------------------------
# band-limited interpolation on (0, epsilon)


def interpolate_lp(c, P, epsilon, V, k_trunc=None, pairs=None, pairs_fine=None):
    """Minimal-norm f on (0, epsilon) with int_0^eps f phi_p = c_p for p in P.

    c may be a SequenceLP (then P must be None) or an array matched with the
    index list P.  Only the first k_trunc entries are used.  The Gram matrix
    of the restricted eigenfunctions is assembled on a grid sixteen times
    finer than the eigensolver default, because trapezoid error on the Gram
    entries gets amplified by the Gram condition number and would otherwise
    dominate the reported residuals.  Residuals and the norm witness
    |f|_L2(0,eps) / |c|_P are then recomputed independently at the solved
    eigenvalues on a further four-times finer march.  pairs / pairs_fine
    accept precomputed eigenpair lists (covering max(P) at those two
    resolutions) for callers looping over many sequences with one
    potential.

    A density estimate of the momentum set {p pi} above epsilon, after a
    one-point boundary correction, only warns: finite sliding-window counts
    overshoot the true upper density, and the residual check is the real
    gate.
    """
    if isinstance(c, SequenceLP):
        if P is not None:
            raise ValueError("pass P=None when c is a SequenceLP")
        P = c.indices
        c = c.entries
    c = np.asarray(c).ravel()
    p = np.asarray(P, dtype=np.int64).ravel()
    if c.size != p.size:
        raise ValueError("c and P must have equal length")
    if np.min(p) < 1 or (p.size > 1 and np.min(np.diff(p)) <= 0):
        raise ValueError("P must be strictly increasing positive integers")
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must lie in (0, 1]")
    if k_trunc is None:
        k_trunc = p.size
    c = c[:k_trunc]
    p = p[:k_trunc]

    if p.size >= 3:
        mom = p.astype(np.float64) * math.pi
        r = float(mom[-1] - mom[0]) / 2.0
        hi = np.searchsorted(mom, mom + r, side="right")
        est = (int(np.max(hi - np.arange(mom.size))) - 1) / r
        if est > epsilon:
            warnings.warn(
                f"momentum density estimate {est:.3f} exceeds epsilon "
                f"= {epsilon:.3f}; interpolation may be unstable",
                RuntimeWarning,
            )

    k_max = int(p[-1])
    if pairs is None:
        pairs = dirichlet_eigs(V, k_max,
                               n_steps=16 * slcore._eig_auto_steps(V, k_max))
    if len(pairs) < k_max:
        raise ValueError("pairs must cover max(P) modes")
    sel = [pairs[int(q) - 1] for q in p]
    n = sel[0].phi.shape[0] - 1
    x = np.linspace(0.0, 1.0, n + 1)
    wts = _cutcell_nodal_weights(x, epsilon)
    Phi = np.vstack([pr.phi for pr in sel])
    G = (Phi * wts) @ Phi.T
    coeffs = _svd_solve(G, c.astype(complex) if np.iscomplexobj(c) else c)

    if pairs_fine is None:
        n4 = 4 * n
        lam = np.array([pr.lam for pr in sel])
        Phi4, _dphi, ox = _march.trajectory_real(V.half_samples(n4), lam, 1.0 / n4)
        if np.any(np.isfinite(ox)):
            raise slcore.SolverOverflowError(float(ox[np.isfinite(ox)][0]))
    else:
        sel4 = [pairs_fine[int(q) - 1] for q in p]
        Phi4 = np.vstack([pr.phi for pr in sel4])
        n4 = Phi4.shape[1] - 1
    x4 = np.linspace(0.0, 1.0, n4 + 1)
    w4 = _cutcell_nodal_weights(x4, epsilon)
    f4 = coeffs @ Phi4
    resid = np.abs(Phi4 @ (w4 * f4) - c)
    f_norm = float(np.sqrt(np.sum(w4 * np.abs(f4) ** 2)))
    c_norm = float(np.sqrt(np.sum(p.astype(np.float64) ** 2 * np.abs(c) ** 2)))
    witness = f_norm / c_norm if c_norm > 0.0 else 0.0

    mask = x <= epsilon + 1e-12
    return Interpolant(x_grid=x[mask], values=(coeffs @ Phi)[..., mask],
                       constraint_residuals=resid, witness=witness,
                       coefficients=coeffs)


# ---------------------------------------------------------------------------
# kernel matching between the shifted sine model and a potential


def remling_map(f, tau, delta, V, z_grid, n_out=None, inverse=False):
    """Match integrals against sin(sqrt(z+tau) x)/sqrt(z+tau) to integrals
    against the solutions of -psi'' + V psi = z psi on (0, delta).

    Forward direction: given f, find g with int g(x) psi(x, z) dx equal to
    int f(x) s(x, z) dx for every z in z_grid, in the least-squares sense
    over a hat basis for g.  inverse=True swaps the kernel roles, so the
    unknown sits on the sine side.  f may be a callable on [0, delta] or an
    array of samples on the uniform output grid.  z_grid is in energy units
    and must hold at least four rows per output node; a rank-deficient
    system raises with a request for a denser grid.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if callable(f):
        if n_out is None:
            n_out = 257
        x_out = np.linspace(0.0, delta, n_out)
        f_out = np.asarray(f(x_out), dtype=np.float64)
    else:
        f_out = np.asarray(f, dtype=np.float64).ravel()
        if n_out is None:
            n_out = f_out.size
        if f_out.size != n_out:
            raise ValueError("sampled f must have n_out entries")
        x_out = np.linspace(0.0, delta, n_out)
    z = np.asarray(z_grid, dtype=np.float64).ravel()
    if z.size < 4 * n_out:
        raise ValueError(
            f"z grid has {z.size} rows for {n_out} unknowns; "
            "need at least four rows per output node"
        )

    mom = math.sqrt(max(float(np.max(np.abs(z + tau))),
                        float(np.max(np.abs(z))) + V.sup_bound, 1.0))
    n_f = auto_steps(mom * delta, floor=2048)
    h = delta / n_f
    xf = np.linspace(0.0, delta, n_f + 1)
    tw = np.full(n_f + 1, h)
    tw[0] = tw[-1] = h / 2.0

    psi, _dpsi, ox = _march.trajectory_real(V.half_samples(n_f, length=delta), z, h)
    if np.any(np.isfinite(ox)):
        raise slcore.SolverOverflowError(float(ox[np.isfinite(ox)][0]))
    w = np.sqrt((z + tau).astype(complex))
    small = np.abs(w) < 1e-9
    ws = np.where(small, 1.0, w)
    S = np.where(small[:, None], xf[None, :],
                 np.sin(ws[:, None] * xf[None, :]) / ws[:, None]).real

    ker_data, ker_unknown = (psi, S) if inverse else (S, psi)
    hx = x_out[1] - x_out[0]
    hats = np.clip(1.0 - np.abs(xf[None, :] - x_out[:, None]) / hx, 0.0, 1.0)
    A = ker_unknown @ (hats * tw).T
    b = ker_data @ (tw * np.interp(xf, x_out, f_out))
    g, _res, rank, _sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < n_out:
        raise RuntimeError(
            f"matching system has rank {rank} for {n_out} unknowns; "
            "use a denser or more spread-out z grid"
        )
    resid = float(np.linalg.norm(A @ g - b) / max(np.linalg.norm(b), 1e-300))
    nf = math.sqrt(abs(float(np.trapezoid(f_out * f_out, x_out))))
    ng = math.sqrt(abs(float(np.trapezoid(g * g, x_out))))
    ratio = ng / nf if nf > 0.0 else math.inf
    return KernelMatchResult(x_grid=x_out, values=g, norm_ratio=ratio,
                             lsq_residual=resid)


# ---------------------------------------------------------------------------
# CSV emission


def window_to_csv(window, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "value_re", "value_im"])
        vals = np.asarray(window.values, dtype=complex)
        for t, v in zip(window.t_grid, vals):
            wr.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])


def interpolant_to_csv(interp, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "value_re", "value_im"])
        vals = np.asarray(interp.values, dtype=complex)
        for x, v in zip(interp.x_grid, vals):
            wr.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])


def frequencies_to_csv(freqs, path):
    v = freqs.values if isinstance(freqs, FrequencySet) else np.asarray(freqs)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frequency"])
        for val in v:
            wr.writerow([repr(float(val))])


def frequencies_from_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["frequency"]:
            raise ValueError(f"unexpected header {header!r}")
        vals = [float(row[0]) for row in rd]
    return FrequencySet.from_values(vals)
