# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampler hot loop. Same contract as ``_kernel_py``."""
from libc.math cimport exp, log, log1p, INFINITY
from libc.stdint cimport uint64_t, int64_t, uint8_t

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil
    int __builtin_ctzll(unsigned long long) nogil

NAME = "compiled"

cdef enum:
    MAX_N = 64


cdef inline double _log_sig(double x) noexcept nogil:
    if x >= 0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (exp(-x) + 1.0)
    e = exp(x)
    return e / (1.0 + e)


cdef inline int _popcount(uint64_t x) noexcept nogil:
    return __builtin_popcountll(x)


cdef double _log_norm(const double[::1] log_binom, double log_lam, double log_1m) noexcept nogil:
    cdef Py_ssize_t e, ne = log_binom.shape[0]
    cdef double v, mx = -INFINITY, acc = 0.0
    for e in range(ne):
        v = log_binom[e] + log_lam + (e - 1) * log_1m
        if v > mx:
            mx = v
    for e in range(ne):
        acc += exp(log_binom[e] + log_lam + (e - 1) * log_1m - mx)
    return mx + log(acc)


cdef double _emission(const uint64_t* rows, int n, int m, const double* base, const double* delta,
                      const int64_t* attach, bint marginal, double log_norm,
                      uint64_t* reach, double* sc) noexcept nogil:
    # delta is row-major (m, n)
    cdef int i, j, k, c
    cdef uint64_t bk, rk
    cdef double s, mx, acc, total = 0.0
    for j in range(n):
        reach[j] = rows[j]
    for k in range(n):
        bk = (<uint64_t>1) << k
        rk = reach[k]
        for i in range(n):
            if reach[i] & bk:
                reach[i] |= rk
    for c in range(n):
        reach[c] |= (<uint64_t>1) << c
    for i in range(m):
        if marginal:
            mx = -INFINITY
            for j in range(n):
                s = 0.0
                for c in range(n):
                    if (reach[c] >> j) & 1:
                        s += delta[i * n + c]
                s = s + base[i]
                sc[j] = s
                if s > mx:
                    mx = s
            acc = 0.0
            for j in range(n):
                acc += exp(sc[j] - mx)
            total += log(acc) + mx
        else:
            j = <int>attach[i]
            s = 0.0
            for c in range(n):
                if (reach[c] >> j) & 1:
                    s += delta[i * n + c]
            total += s + base[i]
    return total - log_norm


def log_emission(const uint64_t[::1] rows, const double[::1] base, const double[:, ::1] delta,
                 const int64_t[::1] attach, bint marginal, double log_norm):
    """Log emission probability of one network given its row bitsets."""
    cdef int n = rows.shape[0]
    cdef uint64_t reach[MAX_N]
    cdef double sc[MAX_N]
    if n > MAX_N:
        raise ValueError(f"compiled kernel supports n <= {MAX_N}")
    if base.shape[0] < 1:
        raise ValueError("need at least one reporter")
    if base.shape[0] != delta.shape[0] or delta.shape[1] != n or attach.shape[0] != base.shape[0]:
        raise ValueError("inconsistent emission table shapes")
    return _emission(&rows[0], n, <int>base.shape[0], &base[0], &delta[0, 0], &attach[0],
                     marginal, log_norm, reach, sc)


def run_sweeps(uint64_t[:, ::1] path, double kappa, double[::1] emissions,
               const double[:, ::1] base, const double[:, :, ::1] delta, const int64_t[::1] attach,
               bint marginal, double log_norm, const double[::1] log_binom,
               const int64_t[:, ::1] edge_idx, const double[:, ::1] u_state,
               const double[::1] z, const double[::1] u_kappa,
               double sigma, bint update_kappa, Py_ssize_t iter_offset, Py_ssize_t burn_in,
               double[::1] out_lambda, double[::1] out_loglik, uint8_t[::1] out_kacc,
               int64_t[::1] state_acc, int64_t[:, :, ::1] edge_sums,
               Py_ssize_t thin, uint64_t[:, :, ::1] snaps, Py_ssize_t snap_offset):
    """Run ``len(z)`` Gibbs sweeps in place; returns the final ``kappa``."""
    cdef Py_ssize_t T = path.shape[0], n = path.shape[1], n_iter = z.shape[0]
    cdef int m = <int>base.shape[1]
    cdef Py_ssize_t i, t, r, c, g, k
    cdef uint64_t bit, here
    cdef uint64_t reach[MAX_N]
    cdef uint64_t newrow[MAX_N]
    cdef double sc[MAX_N]
    cdef long total = 0
    cdef int d_eps, d_next, accepted
    cdef double log_lam, log_1m, log_z, e_new, log_a, kp, lp_l, lp_1m, lz_p, cur_f, new_f, em
    if n > MAX_N:
        raise ValueError(f"compiled kernel supports n <= {MAX_N}")
    if m < 1 or n < 2:
        raise ValueError("need at least one reporter and two components")
    if delta.shape[0] != T or delta.shape[1] != m or delta.shape[2] != n or attach.shape[0] != m:
        raise ValueError("inconsistent emission table shapes")
    if n_iter == 0:
        return kappa

    with nogil:
        for t in range(1, T):
            for r in range(n):
                total += _popcount(path[t, r] ^ path[t - 1, r])

        log_lam = _log_sig(kappa)
        log_1m = _log_sig(-kappa)
        log_z = _log_norm(log_binom, log_lam, log_1m)

        for i in range(n_iter):
            for t in range(T):
                r = edge_idx[i, t] // (n - 1)
                c = edge_idx[i, t] % (n - 1)
                if c >= r:
                    c += 1
                bit = (<uint64_t>1) << c
                here = path[t, r] & bit
                for k in range(n):
                    newrow[k] = path[t, k]
                newrow[r] ^= bit
                e_new = _emission(newrow, <int>n, m, &base[t, 0], &delta[t, 0, 0], &attach[0],
                                  marginal, log_norm, reach, sc)
                d_eps = 0
                if t > 0:
                    d_eps = 1 if (path[t - 1, r] & bit) == here else -1
                d_next = 0
                if t < T - 1:
                    d_next = 1 if (path[t + 1, r] & bit) == here else -1
                log_a = (e_new - emissions[t]) + (d_eps + d_next) * log_1m
                if log_a >= 0.0 or u_state[i, t] < exp(log_a):
                    path[t, r] = newrow[r]
                    emissions[t] = e_new
                    total += d_eps + d_next
                    state_acc[t] += 1

            accepted = 0
            if update_kappa:
                kp = kappa + sigma * z[i]
                lp_l = _log_sig(kp)
                lp_1m = _log_sig(-kp)
                lz_p = _log_norm(log_binom, lp_l, lp_1m)
                cur_f = (T - 1) * (log_lam - log_1m - log_z) + total * log_1m + log_lam + log_1m
                new_f = (T - 1) * (lp_l - lp_1m - lz_p) + total * lp_1m + lp_l + lp_1m
                log_a = new_f - cur_f
                if log_a >= 0.0 or u_kappa[i] < exp(log_a):
                    kappa = kp
                    log_lam = lp_l
                    log_1m = lp_1m
                    log_z = lz_p
                    accepted = 1
            out_kacc[i] = accepted
            out_lambda[i] = _sigmoid(kappa)
            em = 0.0
            for t in range(T):
                em += emissions[t]
            out_loglik[i] = em + (T - 1) * (log_lam - log_1m - log_z) + total * log_1m

            g = iter_offset + i
            if g >= burn_in:
                for t in range(T):
                    for r in range(n):
                        bit = path[t, r]
                        while bit:
                            c = __builtin_ctzll(bit)
                            edge_sums[t, r, c] += 1
                            bit &= bit - 1
            if thin > 0 and (g + 1) % thin == 0:
                k = (g + 1) // thin - 1 - snap_offset
                for t in range(T):
                    for r in range(n):
                        snaps[k, t, r] = path[t, r]
    return kappa

