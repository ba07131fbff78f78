"""Recovery of a potential from partial Dirichlet spectral data.

The data for index k is the pair (lambda_k, dphi_k(1)).  Given those pairs
on an index subset S, the potential on a known tail interval [1-eps, 1],
and a smoothness prior, the fit runs Gauss-Newton on a coarse grid of
unknowns covering [0, 1-eps).  Eigenvalue rows of the Jacobian use the
first-order perturbation identity; endpoint-derivative rows use central
finite differences through full re-solves.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _march, slcore
from .slcore import PotentialField, SpectralDatum, dirichlet_eigs

DEFAULT_COARSE_N = 64
FD_STEP_SCALE = 1e-4
ARMIJO_FACTOR = 0.5
ARMIJO_SLOPE = 1e-4
MAX_BACKTRACKS = 25
MAX_LINESEARCH_FAILURES = 30
REG_FLOOR = 1e-12


class RankCollapseError(RuntimeError):
    def __init__(self):
        super().__init__(
            "normal system is rank deficient; supply more data "
            "or increase the tikhonov weight"
        )


@dataclass(frozen=True)
class IndexSet:
    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(set(int(k) for k in self.indices)))
        if not idx or idx[0] < 1:
            raise ValueError("indices must be positive integers")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @classmethod
    def first(cls, k_max):
        return cls(tuple(range(1, k_max + 1)))

    def upper_density_estimate(self, r=None):
        """|S intersect (0, r]| / r, by default at the largest index."""
        if r is None:
            r = self.indices[-1]
        return sum(1 for k in self.indices if k <= r) / float(r)


@dataclass(frozen=True)
class ReconstructionProblem:
    """Target data plus priors.

    known_tail holds V on a uniform grid over [1-epsilon, 1], endpoints
    included.  weights is None (all ones), one weight per datum, or one per
    stacked row (eigenvalue block first, then derivative block).  tikhonov
    of None picks 1e-8 times the squared weighted misfit at the starting
    iterate.
    """

    data: tuple
    known_tail: tuple
    epsilon: float
    weights: object = None
    tikhonov: object = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0,1)")
        if len(self.known_tail) < 2:
            raise ValueError("known_tail needs at least two samples")
        object.__setattr__(self, "data", tuple(self.data))
        object.__setattr__(self, "known_tail", tuple(float(v) for v in self.known_tail))

    @property
    def index_set(self):
        return IndexSet(tuple(d.k for d in self.data))


@dataclass(frozen=True)
class ReconstructionReport:
    V_hat: PotentialField
    residual_history: tuple
    data_misfit: float
    regularity_penalty: float
    iterations: int
    status: str


def forward_data(V, S, K_max, n_steps=None):
    """Spectral data (lambda_k, dphi_k(1)) for k in S, via the eigensolver."""
    S = S if isinstance(S, IndexSet) else IndexSet(tuple(S))
    if S.indices[-1] > K_max:
        raise ValueError("K_max smaller than the largest requested index")
    pairs = dirichlet_eigs(V, K_max, n_steps=n_steps)
    return [
        SpectralDatum(p.k, p.lam, p.dphi_at_1, p.norm_sq)
        for p in pairs
        if p.k in set(S.indices)
    ]


def eigenvalue_gradient(V, k, n_steps=None):
    """d lambda_k / dV as a function on V.x_grid: phi_k^2 / ||phi_k||^2."""
    pairs = dirichlet_eigs(V, k, n_steps=n_steps)
    p = pairs[k - 1]
    x_solver = np.linspace(0.0, 1.0, p.phi.shape[0])
    dens = p.phi**2 / p.norm_sq
    return np.interp(V.x_grid, x_solver, dens)


def _point_data(V, K, n_steps):
    """(lambda_k, dphi_k(1)) for k = 1..K without trajectory storage."""
    lam = slcore._eig_values(V, K, n_steps)
    vh = V.half_samples(n_steps)
    _, dpsi1, _, _, ox = _march.endpoint_real(vh, lam, 1.0 / n_steps)
    if np.any(np.isfinite(ox)):
        raise slcore.SolverOverflowError(float(ox[np.isfinite(ox)][0]))
    return lam, dpsi1


def _lambda_rows(pairs, kset, basis):
    """Perturbation-identity rows: row[i,j] = int phi_k^2 B_j / norm_k."""
    rows = np.empty((len(kset), basis.shape[0]))
    for i, k in enumerate(kset):
        p = pairs[k - 1]
        dens = p.phi**2 / p.norm_sq
        h = 1.0 / (p.phi.shape[0] - 1)
        rows[i] = np.trapezoid(dens[None, :] * basis, dx=h, axis=1)
    return rows


def jacobian(V, S, n_steps=None):
    """d(data)/d(V samples): eigenvalue block stacked over derivative block.

    Eigenvalue rows come from the first-order identity and are cheap;
    endpoint-derivative rows need two eigensolves per sample, so this is
    meant for coarse potentials (tens of samples, not thousands).
    """
    S = S if isinstance(S, IndexSet) else IndexSet(tuple(S))
    kset = list(S.indices)
    K = kset[-1]
    if n_steps is None:
        n_steps = slcore._eig_auto_steps(V, K)
    pairs = dirichlet_eigs(V, K, n_steps=n_steps)
    for a, b in zip(pairs, pairs[1:]):
        if b.lam - a.lam < 1e-6 * max(1.0, abs(a.lam)):
            raise RuntimeError(
                f"eigenvalues {a.k} and {b.k} collide within solver tolerance"
            )
    x_solver = np.linspace(0.0, 1.0, n_steps + 1)
    m = V.samples.shape[0]
    basis = np.empty((m, n_steps + 1))
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        basis[j] = np.interp(x_solver, V.x_grid, e)
    lam_block = _lambda_rows(pairs, kset, basis)
    h_fd = FD_STEP_SCALE * (1.0 + V.sup_bound)
    sel = np.array(kset) - 1
    d_block = np.empty((len(kset), m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h_fd
        _, d_plus = _point_data(PotentialField(V.samples + e, V.interp_rule), K, n_steps)
        _, d_minus = _point_data(PotentialField(V.samples - e, V.interp_rule), K, n_steps)
        d_block[:, j] = (d_plus[sel] - d_minus[sel]) / (2.0 * h_fd)
    return np.vstack([lam_block, d_block])


@dataclass(frozen=True)
class AgreementCertificate:
    agrees: bool
    worst_index: int
    worst_gap: float

    def __bool__(self):
        return self.agrees


def data_agreement_certificate(V1, V2, S, tol):
    """Check lambda and dphi(1) agreement on S within tol, reporting the worst k."""
    S = S if isinstance(S, IndexSet) else IndexSet(tuple(S))
    K = S.indices[-1]
    d1 = forward_data(V1, S, K)
    d2 = forward_data(V2, S, K)
    worst_k, worst = S.indices[0], -1.0
    for a, b in zip(d1, d2):
        gap = max(abs(a.lam - b.lam), abs(a.dphi_at_1 - b.dphi_at_1))
        if gap > worst:
            worst_k, worst = a.k, gap
    return AgreementCertificate(agrees=worst <= tol, worst_index=worst_k,
                                worst_gap=worst)


# ---------------------------------------------------------------------------
# Gauss-Newton fit


def _coarse_nodes(epsilon, n_coarse):
    d = (1.0 - epsilon) / n_coarse
    return np.arange(n_coarse) * d


def _assemble(u, problem, n_coarse, n_fine):
    """Full-interval potential: coarse unknowns, then the pinned tail."""
    eps = problem.epsilon
    xs = np.concatenate(
        [
            _coarse_nodes(eps, n_coarse),
            np.linspace(1.0 - eps, 1.0, len(problem.known_tail)),
        ]
    )
    vals = np.concatenate([u, problem.known_tail])
    fine = np.interp(np.linspace(0.0, 1.0, n_fine + 1), xs, vals)
    return PotentialField(fine)


def _basis_on(x, problem, n_coarse):
    """Hat-function values of each unknown on the grid x (tail frozen)."""
    eps = problem.epsilon
    xs = np.concatenate(
        [
            _coarse_nodes(eps, n_coarse),
            np.linspace(1.0 - eps, 1.0, len(problem.known_tail)),
        ]
    )
    B = np.empty((n_coarse, x.shape[0]))
    for j in range(n_coarse):
        e = np.zeros(xs.shape[0])
        e[j] = 1.0
        B[j] = np.interp(x, xs, e)
    return B


def _row_weights(problem, kset):
    ks = np.array(kset, dtype=float)
    w = np.concatenate([np.ones_like(ks), 1.0 / ks])
    if problem.weights is not None:
        user = np.asarray(problem.weights, dtype=float)
        if user.shape[0] == len(kset):
            w *= np.concatenate([user, user])
        elif user.shape[0] == 2 * len(kset):
            w *= user
        else:
            raise ValueError("weights must have one entry per datum or per row")
    return w


def _second_difference(n):
    D = np.zeros((n - 2, n))
    for i in range(n - 2):
        D[i, i : i + 3] = (1.0, -2.0, 1.0)
    return D


def reconstruct(problem, init, max_iter=40, n_coarse=None, n_fine=4096):
    """Regularized output least squares for the unknown head of V.

    The unknown grid spacing defaults to 1/64, so the number of unknowns
    scales with the size of the unknown region.  Stops on relative
    objective drop below 1e-10 or max_iter; thirty failed line searches
    end in a stagnation report carrying the best iterate.
    """
    if n_coarse is None:
        n_coarse = max(8, round(DEFAULT_COARSE_N * (1.0 - problem.epsilon)))
    kset = list(problem.index_set.indices)
    if len(kset) < n_coarse // 2:
        raise ValueError(
            f"{len(kset)} data indices cannot constrain {n_coarse} unknowns; "
            "shrink n_coarse or supply more data"
        )
    K = kset[-1]
    sel = np.array(kset) - 1
    n_steps = slcore._eig_auto_steps(
        _assemble(np.zeros(n_coarse), problem, n_coarse, n_fine), K
    )
    x_solver = np.linspace(0.0, 1.0, n_steps + 1)
    basis = _basis_on(x_solver, problem, n_coarse)

    target = np.concatenate(
        [[d.lam for d in problem.data], [d.dphi_at_1 for d in problem.data]]
    )
    w = _row_weights(problem, kset)
    D2 = _second_difference(n_coarse)

    nodes = _coarse_nodes(problem.epsilon, n_coarse)
    u = np.interp(nodes, init.x_grid, init.samples)

    def model_and_pairs(uvec):
        V = _assemble(uvec, problem, n_coarse, n_fine)
        pairs = dirichlet_eigs(V, K, n_steps=n_steps)
        vec = np.concatenate(
            [[pairs[i].lam for i in sel], [pairs[i].dphi_at_1 for i in sel]]
        )
        return vec, pairs, V

    def objective(uvec, vec):
        r = w * (vec - target)
        pen = reg * float(np.sum((D2 @ uvec) ** 2))
        return float(np.sum(r * r)) + pen, r

    vec, pairs, V_cur = model_and_pairs(u)
    reg = problem.tikhonov
    if reg is None:
        # Scale to the misfit at the starting point, not to the raw data:
        # eigenvalue targets grow like k^4 in square, and anchoring the
        # penalty to them flattens any curved profile the data could pin.
        r0 = w * (vec - target)
        reg = max(REG_FLOOR, 1e-8 * float(np.sum(r0 * r0)))
    phi_val, r = objective(u, vec)
    history = [phi_val]
    h_fd = FD_STEP_SCALE * (1.0 + V_cur.sup_bound)
    failures = 0
    status = "max_iter"
    it = 0

    if phi_val <= 1e-24 * max(1.0, float(np.sum((w * target) ** 2))):
        max_iter = 0
        status = "converged"

    while it < max_iter:
        lam_block = _lambda_rows(pairs, kset, basis)
        d_block = np.empty((len(kset), n_coarse))
        for j in range(n_coarse):
            up, um = u.copy(), u.copy()
            up[j] += h_fd
            um[j] -= h_fd
            _, dp = _point_data(_assemble(up, problem, n_coarse, n_fine), K, n_steps)
            _, dm = _point_data(_assemble(um, problem, n_coarse, n_fine), K, n_steps)
            d_block[:, j] = (dp[sel] - dm[sel]) / (2.0 * h_fd)
        J = np.vstack([lam_block, d_block])

        sq = np.sqrt(reg)
        A = np.vstack([w[:, None] * J, sq * D2])
        b = np.concatenate([-r, -sq * (D2 @ u)])
        if np.linalg.matrix_rank(A) < n_coarse:
            raise RankCollapseError()
        step = np.linalg.lstsq(A, b, rcond=None)[0]

        grad = 2.0 * (J.T @ (w * r) + reg * (D2.T @ (D2 @ u)))
        slope = float(grad @ step)
        alpha = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            u_try = u + alpha * step
            vec_try, pairs_try, V_try = model_and_pairs(u_try)
            phi_try, r_try = objective(u_try, vec_try)
            if phi_try <= phi_val + ARMIJO_SLOPE * alpha * slope:
                accepted = True
                break
            alpha *= ARMIJO_FACTOR
        it += 1
        if not accepted:
            failures += 1
            reg = max(REG_FLOOR, reg / 2.0)
            if failures >= MAX_LINESEARCH_FAILURES:
                status = "stagnated"
                break
            continue
        drop = (phi_val - phi_try) / max(phi_val, 1e-300)
        u, vec, pairs, V_cur = u_try, vec_try, pairs_try, V_try
        phi_val, r = phi_try, r_try
        history.append(phi_val)
        if drop < 1e-10:
            status = "converged"
            break

    misfit = float(np.sqrt(np.sum(r * r)))
    penalty = reg * float(np.sum((D2 @ u) ** 2))
    return ReconstructionReport(
        V_hat=V_cur,
        residual_history=tuple(history),
        data_misfit=misfit,
        regularity_penalty=penalty,
        iterations=it,
        status=status,
    )


# ---------------------------------------------------------------------------
# serialization

PROBLEM_SCHEMA = "sturmkit/reconstruction-problem/1"
REPORT_SCHEMA = "sturmkit/reconstruction-report/1"


def problem_to_json(problem, path):
    doc = {
        "schema": PROBLEM_SCHEMA,
        "data": [
            {"k": d.k, "lambda": d.lam, "dphi_at_1": d.dphi_at_1}
            for d in problem.data
        ],
        "epsilon": problem.epsilon,
        "tail": list(problem.known_tail),
        "reg": problem.tikhonov,
        "weights": None if problem.weights is None else list(problem.weights),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def problem_from_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != PROBLEM_SCHEMA:
        raise ValueError(f"unrecognized problem schema {doc.get('schema')!r}")
    data = tuple(
        SpectralDatum(int(e["k"]), float(e["lambda"]), float(e["dphi_at_1"]))
        for e in doc["data"]
    )
    return ReconstructionProblem(
        data=data,
        known_tail=tuple(doc["tail"]),
        epsilon=float(doc["epsilon"]),
        weights=doc.get("weights"),
        tikhonov=doc.get("reg"),
    )


def report_to_json(report, path):
    doc = {
        "schema": REPORT_SCHEMA,
        "status": report.status,
        "iterations": report.iterations,
        "data_misfit": report.data_misfit,
        "regularity_penalty": report.regularity_penalty,
        "residual_history": list(report.residual_history),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
