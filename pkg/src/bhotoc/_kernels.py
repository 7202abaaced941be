"""Compiled inner loops for the mean-field Bose-Hubbard flow.

Everything here works on flat float64 arrays laid out as
``x = (q_1..q_L, p_1..p_L)``.  System parameters travel as a small tuple
``(E, U, J, delta, omega, shift)`` where ``E`` holds static on-site
energies, ``delta``/``omega`` describe the dimer drive and ``shift`` is the
offset added to ``n_l`` inside the interaction frequency (``-1/2`` for the
Weyl symbol, ``+1/2`` for the bare Gross-Pitaevskii functional).

Observables are encoded as ``(code, slot)`` pairs with
``code`` in {0: n, 1: q, 2: p, 3: p^2} and ``slot`` the 0-based site.
"""
import numpy as np
from numba import njit

OBS_N, OBS_Q, OBS_P, OBS_P2 = 0, 1, 2, 3


@njit(cache=True)
def onsite(E, delta, omega, t, l):
    if delta != 0.0:
        e = delta * np.cos(omega * t)
        if l == 0:
            return E[l] + e
        return E[l] - e
    return E[l]


@njit(cache=True)
def rhs(t, x, E, U, J, delta, omega, shift, out):
    L = x.size // 2
    for l in range(L):
        q = x[l]
        p = x[L + l]
        n = 0.5 * (q * q + p * p - 1.0)
        w = onsite(E, delta, omega, t, l) + U * (n + shift)
        dq = w * p
        dp = -w * q
        if l > 0:
            dq -= J * x[L + l - 1]
            dp += J * x[l - 1]
        if l < L - 1:
            dq -= J * x[L + l + 1]
            dp += J * x[l + 1]
        out[l] = dq
        out[L + l] = dp


@njit(cache=True)
def tangent_rhs(t, x, V, E, U, J, delta, omega, shift, out):
    """dV/dt = Jsymp . Hess(H) . V for every column of V."""
    L = x.size // 2
    K = V.shape[1]
    for l in range(L):
        q = x[l]
        p = x[L + l]
        n = 0.5 * (q * q + p * p - 1.0)
        w = onsite(E, delta, omega, t, l) + U * (n + shift)
        hqq = w + U * q * q
        hpp = w + U * p * p
        hqp = U * q * p
        for k in range(K):
            vq = V[l, k]
            vp = V[L + l, k]
            # (Hess V)_q and (Hess V)_p restricted to site l
            gq = hqq * vq + hqp * vp
            gp = hqp * vq + hpp * vp
            if l > 0:
                gq -= J * V[l - 1, k]
                gp -= J * V[L + l - 1, k]
            if l < L - 1:
                gq -= J * V[l + 1, k]
                gp -= J * V[L + l + 1, k]
            out[l, k] = gp
            out[L + l, k] = -gq


@njit(cache=True)
def rk4_step(t, x, dt, E, U, J, delta, omega, shift, k1, k2, k3, k4, tmp):
    n = x.size
    rhs(t, x, E, U, J, delta, omega, shift, k1)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * dt * k1[j]
    rhs(t + 0.5 * dt, tmp, E, U, J, delta, omega, shift, k2)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * dt * k2[j]
    rhs(t + 0.5 * dt, tmp, E, U, J, delta, omega, shift, k3)
    for j in range(n):
        tmp[j] = x[j] + dt * k3[j]
    rhs(t + dt, tmp, E, U, J, delta, omega, shift, k4)
    for j in range(n):
        x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True)
def rk4_tangent_step(t, x, V, dt, E, U, J, delta, omega, shift, ws, wv):
    """One RK4 step of the joint (x, V) system.

    The stages of V use the stage points of x, so V advances by exactly the
    Jacobian of the discrete RK4 map.
    """
    n = x.size
    K = V.shape[1]
    k1, k2, k3, k4, tmp = ws[0], ws[1], ws[2], ws[3], ws[4]
    l1, l2, l3, l4, vtmp = wv[0], wv[1], wv[2], wv[3], wv[4]
    rhs(t, x, E, U, J, delta, omega, shift, k1)
    tangent_rhs(t, x, V, E, U, J, delta, omega, shift, l1)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * dt * k1[j]
        for c in range(K):
            vtmp[j, c] = V[j, c] + 0.5 * dt * l1[j, c]
    rhs(t + 0.5 * dt, tmp, E, U, J, delta, omega, shift, k2)
    tangent_rhs(t + 0.5 * dt, tmp, vtmp, E, U, J, delta, omega, shift, l2)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * dt * k2[j]
        for c in range(K):
            vtmp[j, c] = V[j, c] + 0.5 * dt * l2[j, c]
    rhs(t + 0.5 * dt, tmp, E, U, J, delta, omega, shift, k3)
    tangent_rhs(t + 0.5 * dt, tmp, vtmp, E, U, J, delta, omega, shift, l3)
    for j in range(n):
        tmp[j] = x[j] + dt * k3[j]
        for c in range(K):
            vtmp[j, c] = V[j, c] + dt * l3[j, c]
    rhs(t + dt, tmp, E, U, J, delta, omega, shift, k4)
    tangent_rhs(t + dt, tmp, vtmp, E, U, J, delta, omega, shift, l4)
    for j in range(n):
        x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        for c in range(K):
            V[j, c] += dt / 6.0 * (l1[j, c] + 2.0 * l2[j, c] + 2.0 * l3[j, c] + l4[j, c])


@njit(cache=True)
def _finite(x):
    for j in range(x.size):
        if not np.isfinite(x[j]):
            return False
    return True


@njit(cache=True)
def _nsteps(span, dt):
    # Number of equal substeps not exceeding |dt| covering span (>= 0).
    if span <= 0.0:
        return 0
    m = int(np.ceil(span / dt - 1e-9))
    return max(m, 1)


@njit(cache=True)
def propagate_grid(x0, t0, times, dt, E, U, J, delta, omega, shift, V0):
    """Advance (x, V) through a sorted time grid.

    Returns the state and tangent columns at each grid time plus the time
    at which the state became non-finite (``nan`` if it never did).
    Between consecutive grid points the interval is split into equal
    substeps no longer than ``dt``; negative intervals integrate backwards.
    """
    n = x0.size
    K = V0.shape[1]
    nt = times.size
    xs = np.full((nt, n), np.nan)
    vs = np.full((nt, n, K), np.nan)
    x = x0.copy()
    V = V0.copy()
    ws = np.empty((5, n))
    wv = np.empty((5, n, K))
    t = t0
    for i in range(nt):
        span = times[i] - t
        m = _nsteps(abs(span), dt)
        if m > 0:
            h = span / m
            for s in range(m):
                if K > 0:
                    rk4_tangent_step(t, x, V, h, E, U, J, delta, omega, shift, ws, wv)
                else:
                    rk4_step(t, x, h, E, U, J, delta, omega, shift,
                             ws[0], ws[1], ws[2], ws[3], ws[4])
                t = times[i] - span + (s + 1) * h
                if not _finite(x):
                    return xs, vs, t
        t = times[i]
        xs[i] = x
        vs[i] = V
    return xs, vs, np.nan


@njit(cache=True)
def observable_value(code, slot, x):
    L = x.size // 2
    q = x[slot]
    p = x[L + slot]
    if code == OBS_N:
        return 0.5 * (q * q + p * p - 1.0)
    if code == OBS_Q:
        return q
    if code == OBS_P:
        return p
    return p * p


@njit(cache=True)
def observable_grad(code, slot, x, out):
    L = x.size // 2
    for j in range(out.size):
        out[j] = 0.0
    if code == OBS_N:
        out[slot] = x[slot]
        out[L + slot] = x[L + slot]
    elif code == OBS_Q:
        out[slot] = 1.0
    elif code == OBS_P:
        out[L + slot] = 1.0
    else:
        out[L + slot] = 2.0 * x[L + slot]


@njit(cache=True)
def otoc_brackets(X0, times, dt, E, U, J, delta, omega, shift, a_code, a_slot, b_code, b_slot):
    """Poisson brackets {A_t, B}(X0) for a batch of initial points.

    Only the single tangent vector ``Jsymp . grad B(X0)`` is propagated;
    its image under M(t) dotted with grad A(X_t) is the bracket.
    Rows whose trajectory blew up are left as ``nan``.
    """
    S, n = X0.shape
    nt = times.size
    out = np.full((S, nt), np.nan)
    L = n // 2
    gb = np.empty(n)
    ga = np.empty(n)
    for s in range(S):
        x0 = X0[s].copy()
        observable_grad(b_code, b_slot, x0, gb)
        V0 = np.empty((n, 1))
        # Jsymp . gradB with Jsymp = [[0, I], [-I, 0]]
        for l in range(L):
            V0[l, 0] = gb[L + l]
            V0[L + l, 0] = -gb[l]
        xs, vs, tfail = propagate_grid(x0, 0.0, times, dt, E, U, J, delta, omega, shift, V0)
        for i in range(nt):
            if not np.isfinite(xs[i, 0]):
                break
            observable_grad(a_code, a_slot, xs[i], ga)
            acc = 0.0
            for j in range(n):
                acc += ga[j] * vs[i, j, 0]
            out[s, i] = acc
    return out


@njit(cache=True)
def time_averages(X0, dt, T, burn, E, U, J, delta, omega, shift, a_code, a_slot):
    """Trapezoidal time average of an observable over [burn, T] per row."""
    S, n = X0.shape
    out = np.full(S, np.nan)
    m = _nsteps(T, dt)
    h = T / m
    ws = np.empty((5, n))
    for s in range(S):
        x = X0[s].copy()
        t = 0.0
        acc = 0.0
        wsum = 0.0
        prev = observable_value(a_code, a_slot, x)
        ok = True
        for k in range(m):
            rk4_step(t, x, h, E, U, J, delta, omega, shift, ws[0], ws[1], ws[2], ws[3], ws[4])
            t = (k + 1) * h
            if not _finite(x):
                ok = False
                break
            cur = observable_value(a_code, a_slot, x)
            if t > burn + 1e-12:
                acc += 0.5 * h * (prev + cur)
                wsum += h
            prev = cur
        if ok and wsum > 0.0:
            out[s] = acc / wsum
    return out


@njit(cache=True)
def benettin(x0, v0, T, renorm, dt, E, U, J, delta, omega, shift):
    """Largest Lyapunov exponent by periodic renormalisation of one tangent vector.

    Returns (times, running_average); running_average is nan-filled after a
    blow-up.
    """
    n = x0.size
    nblocks = int(np.floor(T / renorm + 1e-9))
    times = np.empty(nblocks)
    running = np.full(nblocks, np.nan)
    x = x0.copy()
    V = np.empty((n, 1))
    nrm = 0.0
    for j in range(n):
        nrm += v0[j] * v0[j]
    nrm = np.sqrt(nrm)
    for j in range(n):
        V[j, 0] = v0[j] / nrm
    ws = np.empty((5, n))
    wv = np.empty((5, n, 1))
    m = _nsteps(renorm, dt)
    h = renorm / m
    t = 0.0
    logsum = 0.0
    for b in range(nblocks):
        for k in range(m):
            rk4_tangent_step(t, x, V, h, E, U, J, delta, omega, shift, ws, wv)
            t = b * renorm + (k + 1) * h
        if not _finite(x):
            return times, running
        nrm = 0.0
        for j in range(n):
            nrm += V[j, 0] * V[j, 0]
        nrm = np.sqrt(nrm)
        logsum += np.log(nrm)
        for j in range(n):
            V[j, 0] /= nrm
        times[b] = (b + 1) * renorm
        running[b] = logsum / times[b]
    return times, running


@njit(cache=True)
def sample_times(x0, t_samples, dt, E, U, J, delta, omega, shift):
    """States at the requested (sorted, >= 0) times, no tangent."""
    V0 = np.empty((x0.size, 0))
    xs, vs, tfail = propagate_grid(x0, 0.0, t_samples, dt, E, U, J, delta, omega, shift, V0)
    return xs, tfail


@njit(cache=True)
def section_brackets(x0, T, dt, E, U, J, delta, omega, shift, slot, direction, max_points):
    """Integrate and record the state just before each section crossing.

    The section is p_slot = 0 with q_slot > 0; ``direction`` = -1 keeps
    crossings where p_slot goes from positive to non-positive (d theta/dt < 0),
    +1 the opposite.  Negative ``T`` integrates backwards.
    """
    n = x0.size
    L = n // 2
    m = _nsteps(abs(T), dt)
    h = T / m if m > 0 else 0.0
    pre = np.empty((max_points, n))
    tpre = np.empty(max_points)
    count = 0
    x = x0.copy()
    xprev = x0.copy()
    ws = np.empty((5, n))
    t = 0.0
    for k in range(m):
        for j in range(n):
            xprev[j] = x[j]
        rk4_step(t, x, h, E, U, J, delta, omega, shift, ws[0], ws[1], ws[2], ws[3], ws[4])
        tnew = (k + 1) * h
        if not _finite(x):
            return pre[:count], tpre[:count], tnew
        p0 = xprev[L + slot]
        p1 = x[L + slot]
        hit = False
        if direction < 0:
            hit = p0 > 0.0 and p1 <= 0.0
        else:
            hit = p0 < 0.0 and p1 >= 0.0
        if hit and (xprev[slot] + x[slot]) > 0.0 and count < max_points:
            pre[count] = xprev
            tpre[count] = t
            count += 1
        t = tnew
    return pre[:count], tpre[:count], np.nan


# -- Krylov propagation of Fock-space vectors ---------------------------------

@njit(cache=True)
def _hmatvec(indptr, indices, data, drive, amp, v, out):
    for i in range(v.size):
        s = amp * drive[i] * v[i]
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * v[indices[k]]
        out[i] = s


@njit(cache=True)
def _cdot(a, b):
    s = 0j
    for i in range(a.size):
        s += a[i].conjugate() * b[i]
    return s


@njit(cache=True)
def _cnorm(a):
    s = 0.0
    for i in range(a.size):
        s += a[i].real * a[i].real + a[i].imag * a[i].imag
    return np.sqrt(s)


@njit(cache=True)
def _lanczos(indptr, indices, data, drive, amp, v, tau, m, V, w, reorth=False):
    """exp(-i tau H) v on an m-dimensional Krylov space, with error estimate."""
    n = v.size
    beta0 = _cnorm(v)
    if beta0 == 0.0:
        return v.copy(), 0.0
    alpha = np.zeros(m)
    beta = np.zeros(m)
    for i in range(n):
        V[0, i] = v[i] / beta0
    k = m
    for j in range(m):
        _hmatvec(indptr, indices, data, drive, amp, V[j], w)
        a = _cdot(V[j], w).real
        for i in range(n):
            w[i] -= a * V[j, i]
        if j > 0:
            bj = beta[j - 1]
            for i in range(n):
                w[i] -= bj * V[j - 1, i]
        if reorth:
            for r in range(j + 1):
                c = _cdot(V[r], w)
                for i in range(n):
                    w[i] -= c * V[r, i]
        alpha[j] = a
        b = _cnorm(w)
        beta[j] = b
        if b < 1e-12 * max(1.0, abs(a)):
            k = j + 1
            break
        for i in range(n):
            V[j + 1, i] = w[i] / b
    T = np.zeros((k, k))
    for i in range(k):
        T[i, i] = alpha[i]
        if i + 1 < k:
            T[i, i + 1] = beta[i]
            T[i + 1, i] = beta[i]
    evals, evecs = np.linalg.eigh(T)
    coeff = np.zeros(k, dtype=np.complex128)
    for i in range(k):
        for e in range(k):
            coeff[i] += evecs[i, e] * np.exp(-1j * tau * evals[e]) * evecs[0, e]
    out = np.zeros(n, dtype=np.complex128)
    for r in range(k):
        c = beta0 * coeff[r]
        for i in range(n):
            out[i] += c * V[r, i]
    err = 0.0 if k < m else beta0 * beta[k - 1] * abs(coeff[k - 1])
    return out, err


@njit(cache=True)
def krylov_run(indptr, indices, data, drive, delta, omega, v, pts, m, tol):
    """Compose midpoint-frozen Lanczos substeps over the breakpoints ``pts``.

    A substep whose error estimate exceeds ``tol * max(1, |v|)`` is redone
    as 2, 4, ... equal pieces (at most 2**30).
    """
    V = np.empty((m + 1, v.size), dtype=np.complex128)
    w = np.empty(v.size, dtype=np.complex128)
    for s in range(pts.size - 1):
        ta, tb = pts[s], pts[s + 1]
        amp = delta * np.cos(omega * 0.5 * (ta + tb))
        tau = tb - ta
        bound = tol * max(1.0, _cnorm(v))
        pieces = 1
        while True:
            u = v
            ok = True
            for _ in range(pieces):
                u, err = _lanczos(indptr, indices, data, drive, amp, u, tau / pieces, m, V, w)
                if err > bound and pieces < (1 << 30):
                    ok = False
                    break
            if ok:
                v = u
                break
            pieces *= 2
    return v
