"""Compiled inner loops for density-matrix propagation.

Everything here works on plain arrays so numba can compile it. Stimuli are
passed as parallel arrays (amplitude in eV, angular frequency in rad/fs,
damping in 1/fs, level pair). Dimensions are 2 or 3. The step loops write
into preallocated buffers; a 2x2 step costs a few hundred nanoseconds.
"""
import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_TRACE_DRIFT = 1
STATUS_NO_STEADY_STATE = 2
STATUS_AMBIGUOUS = 3

TRACE_DRIFT_TOL = 1e-8
POPULATION_SLACK = 1e-6
DEGENERACY_TOL = 1e-12  # eV, frame without a reference
CLUSTER_TOL = 1e-10  # eV, subspace alignment against a reference

_PERMS3 = np.array(
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]],
    dtype=np.int64,
)


@njit(cache=True, nogil=True)
def fill_hamiltonian(h, levels, amps, omegas, etas, pa, pb, t):
    n = levels.shape[0]
    for i in range(n):
        for j in range(n):
            h[i, j] = 0.0
        h[i, i] = levels[i]
    for s in range(amps.shape[0]):
        mag = amps[s] * np.exp(-etas[s] * t)
        ph = omegas[s] * t
        z = complex(mag * np.cos(ph), mag * np.sin(ph))
        h[pa[s], pb[s]] += z
        h[pb[s], pa[s]] += z.conjugate()


@njit(cache=True, nogil=True)
def hamiltonian(levels, amps, omegas, etas, pa, pb, t):
    n = levels.shape[0]
    h = np.empty((n, n), dtype=np.complex128)
    fill_hamiltonian(h, levels, amps, omegas, etas, pa, pb, t)
    return h


@njit(cache=True, nogil=True)
def _eigh2_into(h, e, u):
    a = h[0, 0].real
    c = h[1, 1].real
    b = h[0, 1]
    bm = abs(b)
    half = 0.5 * (c - a)
    r = np.sqrt(half * half + bm * bm)
    mean = 0.5 * (a + c)
    e[0] = mean - r
    e[1] = mean + r
    theta = 0.5 * np.arctan2(bm, half)
    ph = b / bm if bm > 0.0 else 1.0 + 0.0j
    ct = np.cos(theta)
    st = np.sin(theta)
    u[0, 0] = ct
    u[1, 0] = -st * ph.conjugate()
    u[0, 1] = st * ph
    u[1, 1] = ct


@njit(cache=True, nogil=True)
def eigh_into(h, e, u):
    if h.shape[0] == 2:
        _eigh2_into(h, e, u)
    else:
        ev, uv = np.linalg.eigh(h)
        e[:] = ev
        u[:, :] = uv


@njit(cache=True, nogil=True)
def eigh_small(h):
    n = h.shape[0]
    e = np.empty(n)
    u = np.empty((n, n), dtype=np.complex128)
    eigh_into(h, e, u)
    return e, u


@njit(cache=True, nogil=True)
def has_degeneracy(e, tol):
    for i in range(e.shape[0] - 1):
        if e[i + 1] - e[i] < tol:
            return True
    return False


@njit(cache=True, nogil=True)
def _overlap(u_prev, u, i, j):
    acc = 0.0 + 0.0j
    for k in range(u.shape[0]):
        acc += u_prev[k, i].conjugate() * u[k, j]
    return acc


@njit(cache=True, nogil=True)
def _align2(e, u, u_prev):
    s00 = abs(_overlap(u_prev, u, 0, 0)) ** 2
    s11 = abs(_overlap(u_prev, u, 1, 1)) ** 2
    s01 = abs(_overlap(u_prev, u, 0, 1)) ** 2
    s10 = abs(_overlap(u_prev, u, 1, 0)) ** 2
    if s01 + s10 > s00 + s11:
        e[0], e[1] = e[1], e[0]
        for k in range(2):
            u[k, 0], u[k, 1] = u[k, 1], u[k, 0]
    for i in range(2):
        p = _overlap(u_prev, u, i, i)
        ap = abs(p)
        if ap > 0.0:
            f = p.conjugate() / ap
            for k in range(2):
                u[k, i] *= f


@njit(cache=True, nogil=True)
def _align_general(e, u, u_prev):
    n = e.shape[0]
    w = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            w[i, j] = abs(_overlap(u_prev, u, i, j)) ** 2
    best = -1.0
    kbest = 0
    for k in range(_PERMS3.shape[0]):
        tot = 0.0
        for i in range(n):
            tot += w[i, _PERMS3[k, i]]
        if tot > best + 1e-14:
            best = tot
            kbest = k
    e0 = e.copy()
    u0 = u.copy()
    for i in range(n):
        e[i] = e0[_PERMS3[kbest, i]]
        u[:, i] = u0[:, _PERMS3[kbest, i]]

    done = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if done[i]:
            continue
        members = np.zeros(n, dtype=np.int64)
        m = 0
        for j in range(i, n):
            if not done[j] and abs(e[j] - e[i]) < CLUSTER_TOL:
                members[m] = j
                m += 1
        if m > 1:
            uc = np.empty((n, m), dtype=np.complex128)
            pc = np.empty((n, m), dtype=np.complex128)
            for k in range(m):
                uc[:, k] = u[:, members[k]]
                pc[:, k] = u_prev[:, members[k]]
            x, _, yh = np.linalg.svd(np.ascontiguousarray(uc.conj().T) @ pc)
            rot = uc @ (x @ yh)
            for k in range(m):
                u[:, members[k]] = rot[:, k]
                done[members[k]] = True
        else:
            p = _overlap(u_prev, u, i, i)
            ap = abs(p)
            if ap > 0.0:
                f = p.conjugate() / ap
                for k in range(n):
                    u[k, i] *= f
            done[i] = True


@njit(cache=True, nogil=True)
def align_into(e, u, u_prev):
    """Reorder and rephase (e, u) in place to follow the frame u_prev.

    Columns are matched by maximal total overlap, degenerate clusters are
    rotated onto the reference subspace (polar factor), and remaining columns
    get a real-positive overlap with their predecessor.
    """
    if e.shape[0] == 2:
        _align2(e, u, u_prev)
    else:
        _align_general(e, u, u_prev)


@njit(cache=True, nogil=True)
def frame_into(h, e, u, levels, amps, omegas, etas, pa, pb, t, u_prev, has_prev):
    fill_hamiltonian(h, levels, amps, omegas, etas, pa, pb, t)
    eigh_into(h, e, u)
    if has_prev:
        align_into(e, u, u_prev)


@njit(cache=True, nogil=True)
def frame_at(levels, amps, omegas, etas, pa, pb, t, u_prev, has_prev):
    n = levels.shape[0]
    h = np.empty((n, n), dtype=np.complex128)
    e = np.empty(n)
    u = np.empty((n, n), dtype=np.complex128)
    frame_into(h, e, u, levels, amps, omegas, etas, pa, pb, t, u_prev, has_prev)
    return e, u


@njit(cache=True, nogil=True)
def nac_into(d, ua, ub, h):
    """Anti-Hermitian finite-difference coupling from <phi_i(a)|phi_j(b)>."""
    n = ua.shape[0]
    for i in range(n):
        d[i, i] = 0.0
        for j in range(i + 1, n):
            sij = _overlap(ua, ub, i, j)
            sji = _overlap(ua, ub, j, i)
            v = (sij - sji.conjugate()) / (2.0 * h)
            d[i, j] = v
            d[j, i] = -v.conjugate()


@njit(cache=True, nogil=True)
def nac_from_frames(ua, ub, h):
    n = ua.shape[0]
    d = np.empty((n, n), dtype=np.complex128)
    nac_into(d, ua, ub, h)
    return d


@njit(cache=True, nogil=True)
def _rhs_fixed(out, h, rho, hbar, gamma):
    n = rho.shape[0]
    for i in range(n):
        for j in range(n):
            acc = 0.0 + 0.0j
            for k in range(n):
                acc += h[i, k] * rho[k, j] - rho[i, k] * h[k, j]
            v = -1j * acc / hbar
            if i != j:
                v -= gamma * rho[i, j]
            out[i, j] = v


@njit(cache=True, nogil=True)
def _rhs_adiabatic(out, e, nac, rho, hbar, gamma, kt):
    n = rho.shape[0]
    for i in range(n):
        for j in range(n):
            acc = 0.0 + 0.0j
            for k in range(n):
                acc += nac[i, k] * rho[k, j] - rho[i, k] * nac[k, j]
            v = -acc
            if i != j:
                v += (-1j / hbar) * (e[i] - e[j]) * rho[i, j]
                v -= gamma * rho[i, j]
            out[i, j] = v
    if kt > 0.0:
        for i in range(n):
            for k in range(i + 1, n):
                # population flow into i from k through the (i, k) coupling
                flow = -2.0 * (nac[i, k] * rho[k, i]).real
                de = e[i] - e[k]
                up = 0.0
                if de > 0.0 and flow > 0.0:
                    up = flow * (1.0 - np.exp(-de / kt))
                elif de < 0.0 and flow < 0.0:
                    up = flow * (1.0 - np.exp(de / kt))
                out[i, i] -= up
                out[k, k] += up


@njit(cache=True, nogil=True)
def _unstable(rho):
    # RK4 blow-up keeps the trace exact for a while, so bound populations too
    tr = 0.0 + 0.0j
    for i in range(rho.shape[0]):
        p = rho[i, i].real
        if not (-POPULATION_SLACK <= p <= 1.0 + POPULATION_SLACK):
            return True
        tr += rho[i, i]
    return not abs(tr - 1.0) <= TRACE_DRIFT_TOL


@njit(cache=True, nogil=True)
def _axpy(out, x, a, y):
    n = x.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = x[i, j] + a * y[i, j]


@njit(cache=True, nogil=True)
def _rk4_combine(rho, dt, k1, k2, k3, k4):
    n = rho.shape[0]
    c = dt / 6.0
    for i in range(n):
        for j in range(n):
            rho[i, j] += c * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])


@njit(cache=True, nogil=True)
def run_fixed(levels, amps, omegas, etas, pa, pb, hbar, gamma, rho0, dt,
              nmax, stride, readout, win, nmin, tol):
    """RK4 in the fixed basis.

    With ``win > 0`` the run stops at the first window boundary past ``nmin``
    steps where the readout population moved by less than ``tol`` over the
    preceding ``win`` steps.
    """
    n = rho0.shape[0]
    nrec = nmax // stride + 1 if stride > 0 else 1
    rec = np.zeros((nrec, n, n), dtype=np.complex128)
    rho = rho0.copy()
    tmp = np.empty_like(rho)
    k1 = np.empty_like(rho)
    k2 = np.empty_like(rho)
    k3 = np.empty_like(rho)
    k4 = np.empty_like(rho)
    h0 = np.empty_like(rho)
    hm = np.empty_like(rho)
    h1 = np.empty_like(rho)
    if stride > 0:
        rec[0] = rho
    lo = rho[readout, readout].real
    hi = lo
    status = STATUS_NO_STEADY_STATE if win > 0 else STATUS_OK
    fill_hamiltonian(h1, levels, amps, omegas, etas, pa, pb, 0.0)
    k = 0
    while k < nmax:
        t = k * dt
        h0[:, :] = h1
        fill_hamiltonian(hm, levels, amps, omegas, etas, pa, pb, t + 0.5 * dt)
        fill_hamiltonian(h1, levels, amps, omegas, etas, pa, pb, t + dt)
        _rhs_fixed(k1, h0, rho, hbar, gamma)
        _axpy(tmp, rho, 0.5 * dt, k1)
        _rhs_fixed(k2, hm, tmp, hbar, gamma)
        _axpy(tmp, rho, 0.5 * dt, k2)
        _rhs_fixed(k3, hm, tmp, hbar, gamma)
        _axpy(tmp, rho, dt, k3)
        _rhs_fixed(k4, h1, tmp, hbar, gamma)
        _rk4_combine(rho, dt, k1, k2, k3, k4)
        k += 1
        if _unstable(rho):
            status = STATUS_TRACE_DRIFT
            break
        if stride > 0 and k % stride == 0:
            rec[k // stride] = rho
        if win > 0:
            p = rho[readout, readout].real
            lo = min(lo, p)
            hi = max(hi, p)
            if k % win == 0:
                if k >= nmin and hi - lo < tol:
                    status = STATUS_OK
                    break
                lo = p
                hi = p
    return rec, rho, k, status


@njit(cache=True, nogil=True)
def readout_fixed(u, rho, level):
    n = rho.shape[0]
    acc = 0.0 + 0.0j
    for i in range(n):
        for j in range(n):
            acc += u[level, i] * rho[i, j] * u[level, j].conjugate()
    return acc.real


@njit(cache=True, nogil=True)
def run_adiabatic(levels, amps, omegas, etas, pa, pb, hbar, gamma, kt, rho0,
                  dt, nmax, stride, readout, win, nmin, tol):
    """RK4 for the density matrix in the tracked adiabatic basis.

    Frames live on a half-step grid; couplings at t, t+dt/2 and t+dt come
    from central differences of neighbouring frames, except at t=0 where the
    first forward difference is used. ``rho0`` is already expressed in the
    frame returned by ``frame_at(..., 0.0, ..., False)``.
    """
    n = rho0.shape[0]
    nrec = nmax // stride + 1 if stride > 0 else 1
    rec = np.zeros((nrec, n, n), dtype=np.complex128)
    rec_u = np.zeros((nrec, n, n), dtype=np.complex128)

    h = np.empty((n, n), dtype=np.complex128)
    e_cur = np.empty(n)
    e_half = np.empty(n)
    e_next = np.empty(n)
    e_nh = np.empty(n)
    u_cur = np.empty((n, n), dtype=np.complex128)
    u_half = np.empty_like(u_cur)
    u_next = np.empty_like(u_cur)
    u_nh = np.empty_like(u_cur)
    d_cur = np.empty_like(u_cur)
    d_half = np.empty_like(u_cur)
    d_next = np.empty_like(u_cur)
    rho = rho0.copy()
    tmp = np.empty_like(rho)
    k1 = np.empty_like(rho)
    k2 = np.empty_like(rho)
    k3 = np.empty_like(rho)
    k4 = np.empty_like(rho)

    frame_into(h, e_cur, u_cur, levels, amps, omegas, etas, pa, pb, 0.0, u_cur, False)
    if has_degeneracy(e_cur, DEGENERACY_TOL):
        return rec, rec_u, rho, u_cur, 0, STATUS_AMBIGUOUS
    frame_into(h, e_half, u_half, levels, amps, omegas, etas, pa, pb,
               0.5 * dt, u_cur, True)
    nac_into(d_cur, u_cur, u_half, 0.5 * dt)

    if stride > 0:
        rec[0] = rho
        rec_u[0] = u_cur
    lo = readout_fixed(u_cur, rho, readout)
    hi = lo
    status = STATUS_NO_STEADY_STATE if win > 0 else STATUS_OK
    k = 0
    while k < nmax:
        t = k * dt
        frame_into(h, e_next, u_next, levels, amps, omegas, etas, pa, pb,
                   t + dt, u_half, True)
        frame_into(h, e_nh, u_nh, levels, amps, omegas, etas, pa, pb,
                   t + 1.5 * dt, u_next, True)
        nac_into(d_half, u_cur, u_next, dt)
        nac_into(d_next, u_half, u_nh, dt)

        _rhs_adiabatic(k1, e_cur, d_cur, rho, hbar, gamma, kt)
        _axpy(tmp, rho, 0.5 * dt, k1)
        _rhs_adiabatic(k2, e_half, d_half, tmp, hbar, gamma, kt)
        _axpy(tmp, rho, 0.5 * dt, k2)
        _rhs_adiabatic(k3, e_half, d_half, tmp, hbar, gamma, kt)
        _axpy(tmp, rho, dt, k3)
        _rhs_adiabatic(k4, e_next, d_next, tmp, hbar, gamma, kt)
        _rk4_combine(rho, dt, k1, k2, k3, k4)
        k += 1

        e_cur[:] = e_next
        u_cur[:, :] = u_next
        e_half[:] = e_nh
        u_half[:, :] = u_nh
        d_cur[:, :] = d_next

        if _unstable(rho):
            status = STATUS_TRACE_DRIFT
            break
        if stride > 0 and k % stride == 0:
            rec[k // stride] = rho
            rec_u[k // stride] = u_cur
        if win > 0:
            p = readout_fixed(u_cur, rho, readout)
            lo = min(lo, p)
            hi = max(hi, p)
            if k % win == 0:
                if k >= nmin and hi - lo < tol:
                    status = STATUS_OK
                    break
                lo = p
                hi = p
    return rec, rec_u, rho, u_cur, k, status
