"""Fixed-step RK4 marching kernels for -psi'' + V psi = E psi on [0, L].

All kernels integrate the first-order system (psi, dpsi)' = (dpsi, (V-E) psi)
with psi(0)=0, dpsi(0)=1, vectorized over a batch of spectral parameters E.
The potential is supplied pre-sampled at half-steps: vh[j] = V(j*h/2),
j = 0..2n, so a step from x_i to x_{i+1} reads vh[2i], vh[2i+1], vh[2i+2].

Numba-compiled versions are used when available; set STURMKIT_NO_NUMBA=1
to force the pure-numpy fallback (slower, same results).
"""

import os

import numpy as np

OVERFLOW_LIMIT = 1e250


# ---------------------------------------------------------------------------
# scalar-loop cores (numba-friendly)

def _endpoint_c_core(vh, E, h):
    m = E.shape[0]
    n = (vh.shape[0] - 1) // 2
    psi1 = np.empty(m, np.complex128)
    dpsi1 = np.empty(m, np.complex128)
    ox = np.full(m, np.nan)
    for j in range(m):
        e = E[j]
        p = 0.0 + 0.0j
        dp = 1.0 + 0.0j
        bad = False
        for i in range(n):
            v0 = vh[2 * i]
            vm = vh[2 * i + 1]
            v1 = vh[2 * i + 2]
            k1p = dp
            k1d = (v0 - e) * p
            k2p = dp + 0.5 * h * k1d
            k2d = (vm - e) * (p + 0.5 * h * k1p)
            k3p = dp + 0.5 * h * k2d
            k3d = (vm - e) * (p + 0.5 * h * k2p)
            k4p = dp + h * k3d
            k4d = (v1 - e) * (p + h * k3p)
            p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            dp = dp + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
            if abs(p) > OVERFLOW_LIMIT or abs(dp) > OVERFLOW_LIMIT:
                ox[j] = (i + 1) * h
                bad = True
                break
        if bad:
            psi1[j] = np.nan
            dpsi1[j] = np.nan
        else:
            psi1[j] = p
            dpsi1[j] = dp
    return psi1, dpsi1, ox


def _endpoint_r_core(vh, E, h):
    # real-E fast path; also counts interior sign changes of psi (the
    # oscillation index used for Sturm bracketing).  The final arrival at
    # x_n is excluded from the count (at an eigenvalue psi(x_n) ~ 0 and its
    # sign is numerical noise); lastsig carries the sign of the last counted
    # value so callers can reconstruct the full count when they need it.
    m = E.shape[0]
    n = (vh.shape[0] - 1) // 2
    psi1 = np.empty(m, np.float64)
    dpsi1 = np.empty(m, np.float64)
    osc = np.zeros(m, np.int64)
    lastsig = np.zeros(m, np.int64)
    ox = np.full(m, np.nan)
    for j in range(m):
        e = E[j]
        p = 0.0
        dp = 1.0
        cnt = 0
        last = 0
        bad = False
        for i in range(n):
            v0 = vh[2 * i]
            vm = vh[2 * i + 1]
            v1 = vh[2 * i + 2]
            k1p = dp
            k1d = (v0 - e) * p
            k2p = dp + 0.5 * h * k1d
            k2d = (vm - e) * (p + 0.5 * h * k1p)
            k3p = dp + 0.5 * h * k2d
            k3d = (vm - e) * (p + 0.5 * h * k2p)
            k4p = dp + h * k3d
            k4d = (v1 - e) * (p + h * k3p)
            p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            dp = dp + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
            if abs(p) > OVERFLOW_LIMIT or abs(dp) > OVERFLOW_LIMIT:
                ox[j] = (i + 1) * h
                bad = True
                break
            if i < n - 1:
                s = 0
                if p > 0.0:
                    s = 1
                elif p < 0.0:
                    s = -1
                if s != 0:
                    if last != 0 and s != last:
                        cnt += 1
                    last = s
        if bad:
            psi1[j] = np.nan
            dpsi1[j] = np.nan
        else:
            psi1[j] = p
            dpsi1[j] = dp
        osc[j] = cnt
        lastsig[j] = last
    return psi1, dpsi1, osc, lastsig, ox


def _traj_c_core(vh, E, h):
    m = E.shape[0]
    n = (vh.shape[0] - 1) // 2
    psi = np.empty((m, n + 1), np.complex128)
    dpsi = np.empty((m, n + 1), np.complex128)
    ox = np.full(m, np.nan)
    for j in range(m):
        e = E[j]
        p = 0.0 + 0.0j
        dp = 1.0 + 0.0j
        psi[j, 0] = p
        dpsi[j, 0] = dp
        bad_at = -1
        for i in range(n):
            v0 = vh[2 * i]
            vm = vh[2 * i + 1]
            v1 = vh[2 * i + 2]
            k1p = dp
            k1d = (v0 - e) * p
            k2p = dp + 0.5 * h * k1d
            k2d = (vm - e) * (p + 0.5 * h * k1p)
            k3p = dp + 0.5 * h * k2d
            k3d = (vm - e) * (p + 0.5 * h * k2p)
            k4p = dp + h * k3d
            k4d = (v1 - e) * (p + h * k3p)
            p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            dp = dp + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
            psi[j, i + 1] = p
            dpsi[j, i + 1] = dp
            if abs(p) > OVERFLOW_LIMIT or abs(dp) > OVERFLOW_LIMIT:
                ox[j] = (i + 1) * h
                bad_at = i + 1
                break
        if bad_at >= 0:
            for i2 in range(bad_at + 1, n + 1):
                psi[j, i2] = np.nan
                dpsi[j, i2] = np.nan
    return psi, dpsi, ox


def _traj_r_core(vh, E, h):
    m = E.shape[0]
    n = (vh.shape[0] - 1) // 2
    psi = np.empty((m, n + 1), np.float64)
    dpsi = np.empty((m, n + 1), np.float64)
    ox = np.full(m, np.nan)
    for j in range(m):
        e = E[j]
        p = 0.0
        dp = 1.0
        psi[j, 0] = p
        dpsi[j, 0] = dp
        bad_at = -1
        for i in range(n):
            v0 = vh[2 * i]
            vm = vh[2 * i + 1]
            v1 = vh[2 * i + 2]
            k1p = dp
            k1d = (v0 - e) * p
            k2p = dp + 0.5 * h * k1d
            k2d = (vm - e) * (p + 0.5 * h * k1p)
            k3p = dp + 0.5 * h * k2d
            k3d = (vm - e) * (p + 0.5 * h * k2p)
            k4p = dp + h * k3d
            k4d = (v1 - e) * (p + h * k3p)
            p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            dp = dp + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
            psi[j, i + 1] = p
            dpsi[j, i + 1] = dp
            if abs(p) > OVERFLOW_LIMIT or abs(dp) > OVERFLOW_LIMIT:
                ox[j] = (i + 1) * h
                bad_at = i + 1
                break
        if bad_at >= 0:
            for i2 in range(bad_at + 1, n + 1):
                psi[j, i2] = np.nan
                dpsi[j, i2] = np.nan
    return psi, dpsi, ox


def _moments_r_core(vh, E, h, W):
    # Endpoint values, oscillation count, trapezoid moments int psi*W_l dx
    # and int psi^2 dx, accumulated on the fly (no trajectory storage).
    m = E.shape[0]
    n = (vh.shape[0] - 1) // 2
    L = W.shape[0]
    psi1 = np.empty(m, np.float64)
    dpsi1 = np.empty(m, np.float64)
    osc = np.zeros(m, np.int64)
    lastsig = np.zeros(m, np.int64)
    mom = np.zeros((m, L), np.float64)
    s2 = np.zeros(m, np.float64)
    ox = np.full(m, np.nan)
    for j in range(m):
        e = E[j]
        p = 0.0
        dp = 1.0
        cnt = 0
        last = 0
        bad = False
        for i in range(n):
            v0 = vh[2 * i]
            vm = vh[2 * i + 1]
            v1 = vh[2 * i + 2]
            k1p = dp
            k1d = (v0 - e) * p
            k2p = dp + 0.5 * h * k1d
            k2d = (vm - e) * (p + 0.5 * h * k1p)
            k3p = dp + 0.5 * h * k2d
            k3d = (vm - e) * (p + 0.5 * h * k2p)
            k4p = dp + h * k3d
            k4d = (v1 - e) * (p + h * k3p)
            p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            dp = dp + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
            if abs(p) > OVERFLOW_LIMIT or abs(dp) > OVERFLOW_LIMIT:
                ox[j] = (i + 1) * h
                bad = True
                break
            w = h if i < n - 1 else 0.5 * h
            for il in range(L):
                mom[j, il] += w * p * W[il, i + 1]
            s2[j] += w * p * p
            if i < n - 1:
                s = 0
                if p > 0.0:
                    s = 1
                elif p < 0.0:
                    s = -1
                if s != 0:
                    if last != 0 and s != last:
                        cnt += 1
                    last = s
        if bad:
            psi1[j] = np.nan
            dpsi1[j] = np.nan
        else:
            psi1[j] = p
            dpsi1[j] = dp
        osc[j] = cnt
        lastsig[j] = last
    return psi1, dpsi1, osc, lastsig, mom, s2, ox


# ---------------------------------------------------------------------------
# numpy fallbacks (batch-vectorized over E, python loop over steps)

def _rk4_sweep(vh, E, h, record=None, W=None, count_osc=False):
    """Shared fallback marcher.  record: None | 'traj'.  Returns a dict."""
    E = np.asarray(E)
    m = E.shape[0]
    n = (vh.shape[0] - 1) // 2
    cplx = np.iscomplexobj(E)
    dt = np.complex128 if cplx else np.float64
    p = np.zeros(m, dt)
    dp = np.ones(m, dt)
    ox = np.full(m, np.nan)
    alive = np.ones(m, bool)
    out = {}
    if record == "traj":
        psi = np.full((m, n + 1), np.nan, dt)
        dpsi = np.full((m, n + 1), np.nan, dt)
        psi[:, 0] = 0.0
        dpsi[:, 0] = 1.0
    if W is not None:
        mom = np.zeros((m, W.shape[0]), np.float64)
        s2 = np.zeros(m, np.float64)
    if count_osc:
        cnt = np.zeros(m, np.int64)
        last = np.zeros(m, np.int64)
    for i in range(n):
        v0, vm, v1 = vh[2 * i], vh[2 * i + 1], vh[2 * i + 2]
        k1p = dp
        k1d = (v0 - E) * p
        k2p = dp + 0.5 * h * k1d
        k2d = (vm - E) * (p + 0.5 * h * k1p)
        k3p = dp + 0.5 * h * k2d
        k3d = (vm - E) * (p + 0.5 * h * k2p)
        k4p = dp + h * k3d
        k4d = (v1 - E) * (p + h * k3p)
        pn = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        dpn = dp + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        act = alive.copy()
        p = np.where(act, pn, p)
        dp = np.where(act, dpn, dp)
        if record == "traj":
            psi[act, i + 1] = p[act]
            dpsi[act, i + 1] = dp[act]
        blow = act & ((np.abs(p) > OVERFLOW_LIMIT) | (np.abs(dp) > OVERFLOW_LIMIT))
        if blow.any():
            ox[blow] = (i + 1) * h
            alive = act & ~blow
        if W is not None:
            w = h if i < n - 1 else 0.5 * h
            pr = p.real
            mom += np.where(alive, w * pr, 0.0)[:, None] * W[:, i + 1][None, :]
            s2 += np.where(alive, w * pr * pr, 0.0)
        if count_osc and i < n - 1:
            s = np.sign(p.real).astype(np.int64)
            flip = alive & (s != 0) & (last != 0) & (s != last)
            cnt += flip
            last = np.where(alive & (s != 0), s, last)
    p = np.where(alive, p, np.nan)
    dp = np.where(alive, dp, np.nan)
    out["psi1"], out["dpsi1"], out["ox"] = p, dp, ox
    if record == "traj":
        out["psi"], out["dpsi"] = psi, dpsi
    if W is not None:
        out["mom"], out["s2"] = mom, s2
    if count_osc:
        out["osc"] = cnt
        out["lastsig"] = last
    return out


def _endpoint_c_np(vh, E, h):
    r = _rk4_sweep(vh, E.astype(np.complex128), h)
    return r["psi1"], r["dpsi1"], r["ox"]


def _endpoint_r_np(vh, E, h):
    r = _rk4_sweep(vh, E.astype(np.float64), h, count_osc=True)
    return r["psi1"], r["dpsi1"], r["osc"], r["lastsig"], r["ox"]


def _traj_c_np(vh, E, h):
    r = _rk4_sweep(vh, E.astype(np.complex128), h, record="traj")
    return r["psi"], r["dpsi"], r["ox"]


def _traj_r_np(vh, E, h):
    r = _rk4_sweep(vh, E.astype(np.float64), h, record="traj")
    return r["psi"], r["dpsi"], r["ox"]


def _moments_r_np(vh, E, h, W):
    r = _rk4_sweep(vh, E.astype(np.float64), h, W=W, count_osc=True)
    return r["psi1"], r["dpsi1"], r["osc"], r["lastsig"], r["mom"], r["s2"], r["ox"]


# ---------------------------------------------------------------------------
# dispatch

USE_NUMBA = False
if os.environ.get("STURMKIT_NO_NUMBA", "") != "1":
    try:
        import numba

        _endpoint_c_nb = numba.njit(cache=True)(_endpoint_c_core)
        _endpoint_r_nb = numba.njit(cache=True)(_endpoint_r_core)
        _traj_c_nb = numba.njit(cache=True)(_traj_c_core)
        _traj_r_nb = numba.njit(cache=True)(_traj_r_core)
        _moments_r_nb = numba.njit(cache=True)(_moments_r_core)
        USE_NUMBA = True
    except ImportError:
        pass


def endpoint_complex(vh, E, h):
    """psi(L), dpsi(L) at complex energies E.  Returns (psi1, dpsi1, ox)."""
    E = np.ascontiguousarray(E, np.complex128)
    vh = np.ascontiguousarray(vh, np.float64)
    if USE_NUMBA:
        return _endpoint_c_nb(vh, E, float(h))
    return _endpoint_c_np(vh, E, float(h))


def endpoint_real(vh, E, h):
    """Real-E endpoint march with oscillation count.

    Returns (psi1, dpsi1, osc, lastsig, ox).  osc counts sign changes over
    interior grid values excluding the final pair; lastsig is the sign of
    the last counted value, so the full count over (0,1) is
    osc + (lastsig different from sign(psi1)).
    """
    E = np.ascontiguousarray(E, np.float64)
    vh = np.ascontiguousarray(vh, np.float64)
    if USE_NUMBA:
        return _endpoint_r_nb(vh, E, float(h))
    return _endpoint_r_np(vh, E, float(h))


def trajectory_complex(vh, E, h):
    E = np.ascontiguousarray(E, np.complex128)
    vh = np.ascontiguousarray(vh, np.float64)
    if USE_NUMBA:
        return _traj_c_nb(vh, E, float(h))
    return _traj_c_np(vh, E, float(h))


def trajectory_real(vh, E, h):
    E = np.ascontiguousarray(E, np.float64)
    vh = np.ascontiguousarray(vh, np.float64)
    if USE_NUMBA:
        return _traj_r_nb(vh, E, float(h))
    return _traj_r_np(vh, E, float(h))


def moments_real(vh, E, h, W):
    """Endpoint values plus trapezoid moments of psi against weight rows W.

    W has shape (L, n_steps+1); returns (psi1, dpsi1, osc, lastsig, mom, s2,
    ox) with mom[j, l] = int psi(x, E_j) W[l] dx and s2[j] = int psi^2 dx.
    """
    E = np.ascontiguousarray(E, np.float64)
    vh = np.ascontiguousarray(vh, np.float64)
    W = np.ascontiguousarray(W, np.float64)
    if USE_NUMBA:
        return _moments_r_nb(vh, E, float(h), W)
    return _moments_r_np(vh, E, float(h), W)


def full_count(psi1, osc, lastsig):
    """Sign-change count over all of (0,1), endpoint pair included."""
    s = np.sign(np.asarray(psi1).real).astype(np.int64)
    return osc + ((lastsig != 0) & (s != 0) & (s != lastsig))


def warmup():
    """Trigger JIT compilation of all kernels on tiny inputs."""
    vh = np.zeros(2 * 64 + 1)
    ec = np.array([1.0 + 0.0j])
    er = np.array([1.0])
    w = np.ones((1, 65))
    endpoint_complex(vh, ec, 1.0 / 64)
    endpoint_real(vh, er, 1.0 / 64)
    trajectory_complex(vh, ec, 1.0 / 64)
    trajectory_real(vh, er, 1.0 / 64)
    moments_real(vh, er, 1.0 / 64, w)
