"""Entire-function diagnostics built on the boundary values of psi.

The central object is the difference F(z) = psi1(x0, z) - psi2(x0, z) of
two solutions sharing the left initial data, sampled in the momentum
variable (E = z^2).  F is entire and even in z; its zeros in the right
half-plane are counted with the argument principle, and the resulting
density n(r)/r is the quantity the uniqueness argument turns on.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _march
from .slcore import PotentialField, SolverOverflowError, auto_steps

CONTOUR_INDENT = 1e-3
REJECT_RESIDUAL = 0.1
DEGENERATE_TOL = 1e-13
DEGENERATE_PROBES = 32


class ContourRejectionError(RuntimeError):
    """Raised when the argument-principle integral is not near an integer.

    Usually means a zero sits within about 1e-3 of the contour; retry with
    a slightly perturbed radius.
    """

    def __init__(self, radius, residual):
        super().__init__(
            f"contour integral at r={radius:g} is {residual:.3g} away from "
            "an integer; perturb the radius and retry"
        )
        self.radius = radius
        self.residual = residual


class DegenerateSamplerError(ValueError):
    """The sampler is numerically the zero function; counting is undefined."""


@dataclass(frozen=True)
class EntireSampler:
    """A vectorized complex evaluator together with its construction data.

    kind is free-form provenance for reports ("psi-difference",
    "dpsi-difference", or "closed-form" for hand-built samplers).
    """

    evaluator: object
    x0: float
    kind: str = "closed-form"

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.asarray(self.evaluator(z.ravel()), dtype=complex)
        return out.reshape(z.shape)


@dataclass(frozen=True)
class ZeroCount:
    radius: float
    count: int
    contour_residual: float


@dataclass(frozen=True)
class DensityProfile:
    rows: tuple
    plateau: float


def _march_psi_values(V, x0, z, want_derivative=False):
    """psi(x0, z) (or its x-derivative) for a batch of momenta z."""
    z = np.asarray(z, dtype=complex).ravel()
    if z.size == 0:
        return np.empty(0, complex)
    zmax = float(np.max(np.abs(z))) if z.size else 1.0
    n = auto_steps(zmax * x0, floor=2048)
    vh = V.half_samples(n, length=x0)
    h = x0 / n
    psi1, dpsi1, ox = _march.endpoint_complex(vh, z * z, h)
    bad = np.flatnonzero(np.isnan(psi1.real))
    if bad.size:
        raise SolverOverflowError(float(ox[bad[0]]))
    return dpsi1 if want_derivative else psi1


def build_F(V1, V2, x0, kind="psi-difference"):
    """Sampler for the endpoint difference of the two marched solutions.

    kind selects between the value difference and the x-derivative
    difference; both share the evenness and reflection symmetries.
    """
    if not 0.0 < x0 < 1.0:
        raise ValueError("x0 must lie in (0,1)")
    if kind not in ("psi-difference", "dpsi-difference"):
        raise ValueError(f"unknown sampler kind {kind!r}")
    want_d = kind == "dpsi-difference"

    def evaluator(z):
        a = _march_psi_values(V1, x0, z, want_derivative=want_d)
        b = _march_psi_values(V2, x0, z, want_derivative=want_d)
        return a - b

    return EntireSampler(evaluator=evaluator, x0=x0, kind=kind)


def _gl_nodes(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid + half * x, half * w


def _contour_pieces(r, n_quad):
    """Quadrature nodes and d z weights for the indented half-disk boundary.

    The flat side sits at Re z = -CONTOUR_INDENT so zeros on the imaginary
    axis land inside; traversal is counterclockwise (segment downward, arc
    through +r from below).
    """
    d = CONTOUR_INDENT
    ytop = math.sqrt(r * r - d * d)
    t, w = _gl_nodes(ytop, -ytop, n_quad)
    seg_z = -d + 1j * t
    seg_dz = 1j * w
    alpha = math.pi / 2.0 + math.asin(d / r)
    th, wt = _gl_nodes(-alpha, alpha, n_quad)
    arc_z = r * np.exp(1j * th)
    arc_dz = 1j * r * np.exp(1j * th) * wt
    return np.concatenate([seg_z, arc_z]), np.concatenate([seg_dz, arc_dz])


def _probe_degenerate(F, r):
    rng = np.random.default_rng(0)
    rr = min(r, 20.0) * np.sqrt(rng.uniform(0.0, 1.0, DEGENERATE_PROBES))
    th = rng.uniform(-np.pi / 2, np.pi / 2, DEGENERATE_PROBES)
    vals = np.abs(F(rr * np.exp(1j * th)))
    return float(np.max(vals)) < DEGENERATE_TOL


def count_zeros_halfplane(F, r, n_quad=None):
    """Zero count of F over {Re z >= 0, |z| < r} by the argument principle.

    F' is formed by central differences with step 1e-5 (1 + |z|), so one
    call costs three sampler evaluations per node; all nodes go through the
    evaluator in a single batch.
    """
    if r <= 2 * CONTOUR_INDENT:
        raise ValueError("radius too small for the indented contour")
    if n_quad is None:
        n_quad = max(64, 8 * math.ceil(r))
    if _probe_degenerate(F, r):
        raise DegenerateSamplerError(
            "sampler is numerically zero on probe points; cannot count zeros"
        )
    z, dz = _contour_pieces(r, n_quad)
    step = 1e-5 * (1.0 + np.abs(z))
    batch = np.concatenate([z, z + step, z - step])
    vals = F(batch)
    m = z.size
    f0, fp, fm = vals[:m], vals[m : 2 * m], vals[2 * m :]
    if np.any(f0 == 0.0):
        raise ContourRejectionError(r, math.inf)
    deriv = (fp - fm) / (2.0 * step)
    integral = np.sum(deriv / f0 * dz) / (2.0j * math.pi)
    count = int(round(integral.real))
    residual = abs(integral - count)
    if residual >= REJECT_RESIDUAL or count < 0:
        raise ContourRejectionError(r, residual)
    return ZeroCount(radius=float(r), count=count, contour_residual=float(residual))


def density_profile(F, radii, n_quad=None, max_retries=5):
    """Zero counts over a radius sweep, with the trailing density estimate.

    Radii that land too close to a zero are nudged by a relative 3e-3 per
    retry; the row records the radius actually used.
    """
    rows = []
    for r0 in radii:
        last = None
        for attempt in range(max_retries):
            r = float(r0) * (1.0 + 0.003 * attempt)
            try:
                rows.append(count_zeros_halfplane(F, r, n_quad))
                break
            except ContourRejectionError as e:
                last = e
        else:
            raise last
    for a, b in zip(rows, rows[1:]):
        if b.count < a.count:
            raise RuntimeError(
                f"zero count decreased from r={a.radius:g} to r={b.radius:g}"
            )
    tail = rows[-1]
    return DensityProfile(rows=tuple(rows), plateau=tail.count / tail.radius)


def density_to_csv(profile, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "n", "n_over_r", "residual"])
        for row in profile.rows:
            w.writerow(
                [repr(row.radius), row.count, repr(row.count / row.radius),
                 repr(row.contour_residual)]
            )


def logplus_integral(F, R, n_nodes=None):
    """int_{-R}^{R} log+ |F(t)| / (1 + t^2) dt on the real axis.

    Stabilization of the value as R grows is the finiteness witness; no
    convergence decision is made here.
    """
    if n_nodes is None:
        n_nodes = max(4097, int(20 * R) + 1)
    t = np.linspace(-R, R, n_nodes)
    mag = np.abs(F(t.astype(complex)))
    integrand = np.where(mag > 1.0, np.log(np.maximum(mag, 1.0)), 0.0) / (1.0 + t * t)
    return float(np.trapezoid(integrand, t))


class PoleProximityError(ArithmeticError):
    def __init__(self, z, psi_abs):
        super().__init__(
            f"psi(x0, z) = {psi_abs:.3g} at z = {z}: too close to a pole of m"
        )
        self.z = z


def weyl_m(V, x0, z_grid):
    """The ratio dpsi/psi at x0 over a momentum grid, with pole detection."""
    z = np.asarray(z_grid, dtype=complex).ravel()
    n = auto_steps(float(np.max(np.abs(z))) * x0, floor=2048)
    psi, dpsi, ox = _march.endpoint_complex(V.half_samples(n, length=x0), z * z, x0 / n)
    overflowed = np.flatnonzero(np.isnan(psi.real))
    if overflowed.size:
        raise SolverOverflowError(float(ox[overflowed[0]]))
    bad = np.abs(psi) < 1e-12 * (1.0 + np.abs(dpsi))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise PoleProximityError(z[i], float(np.abs(psi[i])))
    return dpsi / psi
