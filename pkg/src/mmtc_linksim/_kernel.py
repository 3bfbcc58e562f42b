"""Compiled per-slot loop of the adaptive decision-feedback detectors.

One call processes one coherence block: training over the metadata columns,
then decision-directed detection over the data columns.  Each device owns a
filter of length ``M + N`` (feedforward taps followed by one feedback tap per
device) and an RLS inverse-correlation matrix.  Feedback inputs of devices not
yet detected (or decided as zero) are zero, so only the coordinates that have
ever been excited take part in the recursion; a coordinate excited for the
first time after ``c`` updates starts from ``P_uu = p0 / lambda**c``, which is
exactly what the full recursion would hold for it.

Devices whose training reference is identically zero keep ``w = 0``
throughout (every error is zero and the attraction term vanishes at zero),
so they are skipped and output zeros.
"""
import numpy as np
from numba import njit

ATTRACTOR_INTENT = 0
ATTRACTOR_PRINTED = 1

MOMENTS_FILTER = 0  # current filter evaluated on the stored correlations
MOMENTS_TRAINING = 1  # a-priori outputs over the training block
MOMENTS_APRIORI = 2  # a-priori outputs over training and decided data


@njit(cache=True)
def _attract(v, gamma, xi, mode):
    mag = abs(v)
    if mode == ATTRACTOR_PRINTED:
        if v >= -1.0 / xi and v < 0.0:
            f = xi * xi * v + xi
        elif v >= 0.0 and v <= 1.0 / xi:
            f = xi * xi * v - xi
        else:
            f = 0.0
        s = 0.0 if v == 0.0 else (1.0 if v > 0.0 else -1.0)
        return -gamma * xi * s * f
    if mag > 1.0 / xi or mag == 0.0:
        return 0.0
    step = gamma * xi * (xi - xi * xi * mag)
    if step > mag:
        step = mag
    return -step if v > 0.0 else step


@njit(cache=True)
def _nearest(ds, points):
    best = 0
    bd = np.inf
    for i in range(points.size):
        d = (ds.real - points[i].real) ** 2 + (ds.imag - points[i].imag) ** 2
        if d < bd:
            bd = d
            best = i
    return best, np.sqrt(bd)


@njit(cache=True)
def _quad(R, w, idx, na):
    # w^H R w over the active coordinates
    acc = 0.0
    for a in range(na):
        ia = idx[a]
        s = 0.0 + 0.0j
        for b in range(na):
            ib = idx[b]
            s += R[ia, ib] * w[ib]
        acc += (np.conj(w[ia]) * s).real
    return acc


@njit(cache=True)
def _inner(w, v, idx, na):
    # w^H v over the active coordinates
    s = 0.0 + 0.0j
    for a in range(na):
        s += np.conj(w[idx[a]]) * v[idx[a]]
    return s


@njit(cache=True)
def _moments(j, w, R, c, e, Wsum, idx, na, a_dx, a_dd, a_xx, a_w, mode):
    # equivalent-channel gain and noise variance; z2 = -1 flags "not available"
    if mode == MOMENTS_FILTER:
        ee, ww = e[j], Wsum[j]
        if ee <= 0 or ww <= 0:
            return 0.0 + 0.0j, -1.0
        m_hat = _inner(w[j], c[j], idx[j], na) / ee
        z2 = _quad(R[j], w[j], idx[j], na) / ww - (m_hat.real ** 2 + m_hat.imag ** 2) * ee / ww
    else:
        ee, ww = a_xx[j], a_w[j]
        if ee <= 0 or ww <= 0:
            return 0.0 + 0.0j, -1.0
        m_hat = a_dx[j] / ee
        z2 = a_dd[j] / ww - (m_hat.real ** 2 + m_hat.imag ** 2) * ee / ww
    if z2 < 0.0:
        z2 = 0.0
    return m_hat, z2


@njit(cache=True)
def detect_block(
    Y,
    D_train,
    G,
    p0,
    points,
    lam,
    gamma,
    xi,
    r_th,
    sigma_v2,
    feedback,
    internal_list,
    list_residual,
    external_list,
    ext_cap,
    attractor,
    priors,
    prior_mask,
    cost_window,
    moment_mode,
):
    M, tau = Y.shape
    N, tau_phi = D_train.shape
    tau_x = tau - tau_phi
    L = M + N if feedback else M
    r_th0 = 1.0 - r_th
    n_pts = points.size

    w = np.zeros((N, L), dtype=np.complex128)
    P = np.zeros((N, L, L), dtype=np.complex128)
    R = np.zeros((N, L, L), dtype=np.complex128)
    c = np.zeros((N, L), dtype=np.complex128)
    e = np.zeros(N)
    Wsum = np.zeros(N)
    Rs = np.zeros((N, L, L), dtype=np.complex128)
    cs = np.zeros((N, L), dtype=np.complex128)
    es = np.zeros(N)
    # a-priori output moments (soft estimate against the reference used for the update)
    a_dx = np.zeros(N, dtype=np.complex128)
    a_dd = np.zeros(N)
    a_xx = np.zeros(N)
    a_w = np.zeros(N)

    idx = np.zeros((N, L), dtype=np.int64)
    n_act = np.zeros(N, dtype=np.int64)
    excited = np.zeros((N, L), dtype=np.bool_)
    n_upd = np.zeros(N, dtype=np.int64)
    dormant = np.zeros(N, dtype=np.bool_)
    for j in range(N):
        dormant[j] = True
        for t in range(tau_phi):
            if D_train[j, t] != 0:
                dormant[j] = False
                break
        for m in range(M):
            idx[j, m] = m
            excited[j, m] = True
            P[j, m, m] = p0[j]
        n_act[j] = M

    d_soft = np.zeros((N, tau_x), dtype=np.complex128)
    d_hard = np.zeros((N, tau_x), dtype=np.complex128)
    theta = np.zeros((N, tau_x), dtype=np.int8)
    theta_ext = np.zeros((N, tau_x), dtype=np.int8)
    nu = np.zeros(tau_x, dtype=np.int64)
    order = np.zeros((tau, N), dtype=np.int64)
    mu = np.zeros((N, tau_x), dtype=np.complex128)
    zeta2 = np.zeros((N, tau_x))
    dist_out = np.zeros((N, tau_x))

    ycat = np.zeros(L, dtype=np.complex128)
    ybuf = np.zeros((N, L), dtype=np.complex128)
    ds_t = np.zeros(N, dtype=np.complex128)
    dh_t = np.zeros(N, dtype=np.complex128)
    dist_t = np.zeros(N)
    J = np.zeros(N)
    Py = np.zeros(L, dtype=np.complex128)
    kvec = np.zeros(L, dtype=np.complex128)
    resid = np.zeros(M, dtype=np.complex128)
    logp = np.zeros(n_pts)

    for t in range(tau):
        data = t >= tau_phi
        td = t - tau_phi
        # ordering cost on the statistics through t-1
        # data-mode costs restart at the first data symbol unless cost_window is 0
        decay = lam ** (t - tau_phi) if (data and cost_window) else 0.0
        for j in range(N):
            if dormant[j]:
                J[j] = 0.0
                continue
            na = n_act[j]
            nnz = 0
            for a in range(na):
                if w[j, idx[j, a]] != 0:
                    nnz += 1
            if decay > 0.0:
                ew = e[j] - decay * es[j]
                cw = _inner(w[j], c[j], idx[j], na) - decay * _inner(w[j], cs[j], idx[j], na)
                qw = _quad(R[j], w[j], idx[j], na) - decay * _quad(Rs[j], w[j], idx[j], na)
            else:
                ew = e[j]
                cw = _inner(w[j], c[j], idx[j], na)
                qw = _quad(R[j], w[j], idx[j], na)
            J[j] = ew - 2.0 * cw.real + qw + gamma * nnz
        perm = np.argsort(J, kind="mergesort")
        order[t] = perm

        for m in range(M):
            ycat[m] = Y[m, t]
            resid[m] = Y[m, t]
        for u in range(M, L):
            ycat[u] = 0.0

        for layer in range(N):
            j = perm[layer]
            if dormant[j]:
                ds_t[j] = 0.0
                dh_t[j] = 0.0
                dist_t[j] = 0.0
                continue
            # lazily admit feedback coordinates excited for the first time
            for u in range(M, L):
                if ycat[u] != 0 and not excited[j, u]:
                    excited[j, u] = True
                    idx[j, n_act[j]] = u
                    n_act[j] += 1
                    P[j, u, u] = p0[j] * lam ** (-n_upd[j])
            na = n_act[j]
            ds = _inner(w[j], ycat, idx[j], na)
            if not data:
                dh = D_train[j, t]
                dist_t[j] = 0.0
            else:
                r, dist = _nearest(ds, points)
                dist_t[j] = dist
                dh = points[r]
                limit = r_th0 if r == 0 else r_th
                if dist > limit:
                    theta[j, td] = 1
                    if internal_list:
                        gj = G[:, j]
                        best = 0
                        bm = np.inf
                        for i in range(n_pts):
                            acc = 0.0
                            for m in range(M):
                                base = resid[m] if list_residual else Y[m, t]
                                v = base - gj[m] * points[i]
                                acc += v.real * v.real + v.imag * v.imag
                            if acc < bm:
                                bm = acc
                                best = i
                        dh = points[best]
                if prior_mask[j]:
                    # MAP decision with decoder priors and the Gaussian output model
                    m_hat, z2 = _moments(j, w, R, c, e, Wsum, idx, na, a_dx, a_dd, a_xx, a_w, moment_mode)
                    if z2 >= 0.0:
                        if z2 < 1e-9:
                            z2 = 1e-9
                        if m_hat != 0:
                            best = 0
                            bm = -np.inf
                            for i in range(n_pts):
                                pr = priors[j, td, i]
                                lp = np.log(pr) if pr > 0 else -1e300
                                v = ds - m_hat * points[i]
                                lp -= (v.real * v.real + v.imag * v.imag) / z2
                                if lp > bm:
                                    bm = lp
                                    best = i
                            dh = points[best]
            err = dh - ds
            # l0-regularised RLS step on the active coordinates
            Pj = P[j]
            den = lam
            for a in range(na):
                ia = idx[j, a]
                s = 0.0 + 0.0j
                for b in range(na):
                    ib = idx[j, b]
                    s += Pj[ia, ib] * ycat[ib]
                Py[a] = s
                den += (np.conj(ycat[ia]) * s).real
            for a in range(na):
                kvec[a] = Py[a] / den
            for a in range(na):
                ia = idx[j, a]
                wp = w[j, ia]
                w[j, ia] = wp + kvec[a] * np.conj(err) + _attract(wp.real, gamma, xi, attractor) + 1j * _attract(wp.imag, gamma, xi, attractor)
            inv = 1.0 / lam
            for a in range(na):
                ia = idx[j, a]
                for b in range(na):
                    ib = idx[j, b]
                    Pj[ia, ib] = (Pj[ia, ib] - kvec[a] * np.conj(Py[b])) * inv
            n_upd[j] += 1

            for u in range(L):
                ybuf[j, u] = ycat[u]
            ds_t[j] = ds
            dh_t[j] = dh
            if moment_mode == MOMENTS_APRIORI or not data:
                if moment_mode != MOMENTS_FILTER:
                    a_dx[j] = lam * a_dx[j] + ds * np.conj(dh)
                    a_dd[j] = lam * a_dd[j] + ds.real * ds.real + ds.imag * ds.imag
                    a_xx[j] = lam * a_xx[j] + dh.real * dh.real + dh.imag * dh.imag
                    a_w[j] = lam * a_w[j] + 1.0
            if feedback:
                ycat[M + j] = dh
            if dh != 0:
                for m in range(M):
                    resid[m] -= G[m, j] * dh

        if data and external_list:
            K_hat = 0
            for j in range(N):
                if dh_t[j] != 0:
                    K_hat += 1
            if K_hat < 1:
                K_hat = 1
            if r_th == 0.0:
                r_ext = 0.0
            elif sigma_v2 == 0.0:
                r_ext = np.inf
            else:
                r_ext = r_th * (M / K_hat + N / sigma_v2)
            n_flag = 0
            for j in range(N):
                if dist_t[j] > r_ext:
                    theta_ext[j, td] = 1
                    n_flag += 1
            # keep the ext_cap worst positions (largest distance, lowest index on ties)
            while n_flag > ext_cap:
                worst_keep = -1
                wd = np.inf
                for j in range(N):
                    if theta_ext[j, td] == 1 and dist_t[j] < wd:
                        wd = dist_t[j]
                        worst_keep = j
                # drop the least unreliable; among equal distances drop the highest index
                for j in range(N - 1, -1, -1):
                    if theta_ext[j, td] == 1 and dist_t[j] == wd:
                        worst_keep = j
                        break
                theta_ext[worst_keep, td] = 0
                n_flag -= 1
            nu[td] = n_flag
            if n_flag > 0:
                pos = np.zeros(n_flag, dtype=np.int64)
                q = 0
                for j in range(N):
                    if theta_ext[j, td] == 1:
                        pos[q] = j
                        q += 1
                base = np.zeros(M, dtype=np.complex128)
                for m in range(M):
                    base[m] = Y[m, t]
                for j in range(N):
                    if theta_ext[j, td] == 0 and dh_t[j] != 0:
                        for m in range(M):
                            base[m] -= G[m, j] * dh_t[j]
                n_comb = n_pts ** n_flag
                digits = np.zeros(n_flag, dtype=np.int64)
                best_code = 0
                bm = np.inf
                for code in range(n_comb):
                    rem = code
                    for q in range(n_flag - 1, -1, -1):
                        digits[q] = rem % n_pts
                        rem //= n_pts
                    acc = 0.0
                    for m in range(M):
                        v = base[m]
                        for q in range(n_flag):
                            v -= G[m, pos[q]] * points[digits[q]]
                        acc += v.real * v.real + v.imag * v.imag
                    if acc < bm:
                        bm = acc
                        best_code = code
                rem = best_code
                for q in range(n_flag - 1, -1, -1):
                    dh_t[pos[q]] = points[rem % n_pts]
                    rem //= n_pts

        # sufficient statistics with the final decisions
        for j in range(N):
            if dormant[j]:
                continue
            na = n_act[j]
            dh = dh_t[j]
            Rj = R[j]
            for a in range(na):
                ia = idx[j, a]
                ya = ybuf[j, ia]
                c[j, ia] = lam * c[j, ia] + ya * np.conj(dh)
                for b in range(na):
                    ib = idx[j, b]
                    Rj[ia, ib] = lam * Rj[ia, ib] + ya * np.conj(ybuf[j, ib])
            e[j] = lam * e[j] + (dh.real * dh.real + dh.imag * dh.imag)
            Wsum[j] = lam * Wsum[j] + 1.0
        if t == tau_phi - 1:
            for j in range(N):
                es[j] = e[j]
                for u in range(L):
                    cs[j, u] = c[j, u]
                    for v in range(L):
                        Rs[j, u, v] = R[j, u, v]

        if data:
            for j in range(N):
                d_soft[j, td] = ds_t[j]
                d_hard[j, td] = dh_t[j]
                dist_out[j, td] = dist_t[j]
                if dormant[j]:
                    continue
                m_hat, z2 = _moments(j, w, R, c, e, Wsum, idx, n_act[j], a_dx, a_dd, a_xx, a_w, moment_mode)
                if z2 < 0.0:
                    continue
                mu[j, td] = m_hat
                zeta2[j, td] = z2

    return d_soft, d_hard, theta, theta_ext, nu, order, mu, zeta2, dist_out, w, P, dormant
