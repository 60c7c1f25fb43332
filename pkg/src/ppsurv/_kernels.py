"""Compiled Gibbs / slice kernels.

All arrays arrive already reduced to sufficient statistics (see
``CompressedRisk``): covariate patterns Z, per-pattern cell exposures E,
per-cell event counts D and the event-weighted covariate sum.  Historical
blocks are pre-multiplied by their a0 weights.  Randomness comes from
numba's internal generator, reseeded at kernel entry so that each call is
a pure function of its seed.
"""
import numpy as np
from numba import njit

CLAMP = 700.0
MAX_SHRINK = 200

OK = 0
NAN_BETA = 1
SHRINK_FAIL = 2
DEGENERATE_LAMBDA = 3
DEGENERATE_LAMBDA0 = 4
NAN_LAMBDA = 5


@njit(cache=True)
def _clamp(x):
    if x > CLAMP:
        return CLAMP
    if x < -CLAMP:
        return -CLAMP
    return x


@njit(cache=True)
def seed_numba(seed):
    np.random.seed(seed)


@njit
def slice1d(logf, x0, f0, args, width, max_steps):
    """Stepping-out / shrinkage update.  Returns (x1, f1, status)."""
    level = f0 - np.random.exponential(1.0)
    left = x0 - width * np.random.random()
    right = left + width
    j = int(np.floor(max_steps * np.random.random()))
    k = max_steps - 1 - j
    while j > 0 and logf(left, args) > level:
        left -= width
        j -= 1
    while k > 0 and logf(right, args) > level:
        right += width
        k -= 1
    for _ in range(MAX_SHRINK):
        x1 = left + np.random.random() * (right - left)
        f1 = logf(x1, args)
        if np.isnan(f1):
            return x1, f1, NAN_BETA
        if f1 > level:
            return x1, f1, OK
        if x1 < x0:
            left = x1
        else:
            right = x1
    return x0, f0, SHRINK_FAIL


@njit(cache=True)
def mix_logpdf(x, means, precs, logc):
    M = means.shape[0]
    P = means.shape[1]
    terms = np.empty(M)
    for m in range(M):
        q = 0.0
        for a in range(P):
            da = x[a] - means[m, a]
            for b in range(P):
                q += da * precs[m, a, b] * (x[b] - means[m, b])
        terms[m] = logc[m] - 0.5 * q
    top = terms.max()
    s = 0.0
    for m in range(M):
        s += np.exp(terms[m] - top)
    return top + np.log(s)


@njit(cache=True)
def beta_logpost(b, args):
    p, Z, w, em, csum_p, kind, mu, sd, beta, mm, mp, mlc = args
    val = csum_p * b
    for u in range(Z.shape[0]):
        if w[u] != 0.0:
            val -= w[u] * np.exp(_clamp(em[u] + Z[u, p] * b))
    if kind == 1:
        z = (b - mu[p]) / sd[p]
        val -= 0.5 * z * z
    elif kind == 2:
        old = beta[p]
        beta[p] = b
        val += mix_logpdf(beta, mm, mp, mlc)
        beta[p] = old
    return val


@njit(cache=True)
def loglam_logpost(x, args):
    D, R, mu, sd = args
    z = (x - mu) / sd
    return D * x - R * np.exp(_clamp(x)) - 0.5 * z * z


@njit(cache=True)
def npp_logkernel(b, args):
    p, Z, Ew, em, csum_p, pc, dc, mu, sd, q = args
    U, C = Ew.shape
    for c in range(C):
        q[c] = dc[c]
    for u in range(U):
        phi = np.exp(_clamp(em[u] + Z[u, p] * b))
        for c in range(C):
            q[c] += phi * Ew[u, c]
    val = csum_p * b
    for c in range(C):
        if q[c] <= 0.0:
            return -np.inf
        val -= pc[c] * np.log(q[c])
    z = (b - mu[p]) / sd[p]
    return val - 0.5 * z * z


@njit(cache=True)
def _eta(Z, beta, eta):
    clamps = 0
    for u in range(Z.shape[0]):
        s = 0.0
        for p in range(Z.shape[1]):
            s += Z[u, p] * beta[p]
        if s > CLAMP or s < -CLAMP:
            clamps += 1
        eta[u] = s
    return clamps


@njit
def gibbs(seed, n_mc, n_bi, w_beta, w_loglam, max_steps,
          beta_init, lam_init, lam0_init,
          Z, n_cur, Ec, Eh, csum, Dc, Dh,
          prior_kind, mu, sd, mm, mp, mlc,
          lam_kind, lam_a, lam_b, lam_mu, lam_sd,
          lam0_kind, lam0_a, lam0_b, lam0_mu, lam0_sd,
          shared, sample_lam0):
    """Slice-within-Gibbs sampler for (beta, lambda, lambda0).

    Z holds current patterns in rows [0, n_cur) and a0-weighted historical
    patterns after them.  Returns draws plus (status, where, clamp_count).
    """
    np.random.seed(seed)
    U, P = Z.shape
    C = lam_init.shape[0]
    beta = beta_init.copy()
    lam = lam_init.copy()
    lam0 = lam0_init.copy()
    eta = np.empty(U)
    em = np.empty(U)
    w = np.zeros(U)
    Rc = np.empty(C)
    Rh = np.empty(C)
    beta_out = np.empty((n_mc, P))
    lam_out = np.empty((n_mc, C))
    lam0_out = np.empty((n_mc, C))
    clamps = 0
    for it in range(n_bi + n_mc):
        clamps += _eta(Z, beta, eta)
        for u in range(U):
            s = 0.0
            if u < n_cur:
                for c in range(C):
                    s += Ec[u, c] * lam[c]
            else:
                for c in range(C):
                    s += Eh[u - n_cur, c] * (lam[c] if shared else lam0[c])
            w[u] = s
        for p in range(P):
            for u in range(U):
                em[u] = eta[u] - Z[u, p] * beta[p]
            args = (p, Z, w, em, csum[p], prior_kind, mu, sd, beta, mm, mp, mlc)
            f0 = beta_logpost(beta[p], args)
            x1, f1, status = slice1d(beta_logpost, beta[p], f0, args, w_beta, max_steps)
            if status != OK:
                return beta_out, lam_out, lam0_out, status, p, clamps
            beta[p] = x1
            for u in range(U):
                eta[u] = em[u] + Z[u, p] * x1
        for c in range(C):
            Rc[c] = 0.0
            Rh[c] = 0.0
        for u in range(U):
            phi = np.exp(_clamp(eta[u]))
            if u < n_cur:
                for c in range(C):
                    Rc[c] += phi * Ec[u, c]
            else:
                for c in range(C):
                    Rh[c] += phi * Eh[u - n_cur, c]
        for c in range(C):
            D = Dc[c]
            R = Rc[c]
            if shared:
                D += Dh[c]
                R += Rh[c]
            if lam_kind == 1:
                args2 = (D, R, lam_mu[c], lam_sd[c])
                x0 = np.log(lam[c])
                x1, f1, status = slice1d(loglam_logpost, x0, loglam_logpost(x0, args2), args2, w_loglam, max_steps)
                if status != OK:
                    return beta_out, lam_out, lam0_out, NAN_LAMBDA, c, clamps
                lam[c] = np.exp(x1)
            else:
                shape = lam_a[c] + D
                rate = lam_b[c] + R
                if shape <= 0.0 or rate <= 0.0:
                    return beta_out, lam_out, lam0_out, DEGENERATE_LAMBDA, c, clamps
                lam[c] = np.random.gamma(shape, 1.0 / rate)
        if sample_lam0:
            for c in range(C):
                if lam0_kind == 1:
                    args2 = (Dh[c], Rh[c], lam0_mu[c], lam0_sd[c])
                    x0 = np.log(lam0[c])
                    x1, f1, status = slice1d(loglam_logpost, x0, loglam_logpost(x0, args2), args2, w_loglam, max_steps)
                    if status != OK:
                        return beta_out, lam_out, lam0_out, NAN_LAMBDA, C + c, clamps
                    lam0[c] = np.exp(x1)
                else:
                    shape = lam0_a[c] + Dh[c]
                    rate = lam0_b[c] + Rh[c]
                    if shape <= 0.0 or rate <= 0.0:
                        return beta_out, lam_out, lam0_out, DEGENERATE_LAMBDA0, c, clamps
                    lam0[c] = np.random.gamma(shape, 1.0 / rate)
        if it >= n_bi:
            i = it - n_bi
            for p in range(P):
                beta_out[i, p] = beta[p]
            for c in range(C):
                lam_out[i, c] = lam[c]
                lam0_out[i, c] = lam0[c]
    return beta_out, lam_out, lam0_out, OK, -1, clamps


@njit
def npp_prior_draws(seed, L, n_bi, w_beta, max_steps, beta_init,
                    Z, E, ds, Dj, Xj, c0, d0, mu, sd, u_shape, v_shape):
    """Draw a0 ~ Beta per outer step, then n_bi + 1 slice sweeps of beta on the
    lambda0-integrated kernel; the final state of each step is kept."""
    np.random.seed(seed)
    U, C = E.shape
    P = beta_init.shape[0]
    J = Dj.shape[0]
    beta = beta_init.copy()
    out = np.empty((L, P))
    a0_out = np.empty((L, J))
    a0 = np.empty(J)
    Ew = np.empty((U, C))
    pc = np.empty(C)
    csum = np.empty(P)
    q = np.empty(C)
    eta = np.empty(U)
    em = np.empty(U)
    for l in range(L):
        for j in range(J):
            a0[j] = np.random.beta(u_shape[j], v_shape[j])
        for uu in range(U):
            for c in range(C):
                Ew[uu, c] = a0[ds[uu]] * E[uu, c]
        for c in range(C):
            s = c0[c]
            for j in range(J):
                s += a0[j] * Dj[j, c]
            pc[c] = s
        for p in range(P):
            s = 0.0
            for j in range(J):
                s += a0[j] * Xj[j, p]
            csum[p] = s
        _eta(Z, beta, eta)
        for sweep in range(n_bi + 1):
            for p in range(P):
                for uu in range(U):
                    em[uu] = eta[uu] - Z[uu, p] * beta[p]
                args = (p, Z, Ew, em, csum[p], pc, d0, mu, sd, q)
                f0 = npp_logkernel(beta[p], args)
                x1, f1, status = slice1d(npp_logkernel, beta[p], f0, args, w_beta, max_steps)
                if status != OK:
                    return out, a0_out, status, l
                beta[p] = x1
                for uu in range(U):
                    eta[uu] = em[uu] + Z[uu, p] * x1
        for p in range(P):
            out[l, p] = beta[p]
        for j in range(J):
            a0_out[l, j] = a0[j]
    return out, a0_out, OK, -1
