"""Pure-Python/NumPy fallback for the sampler hot loop.

Mirrors ``_kernel.pyx`` call for call. Networks are passed as ``(T, n)``
``uint64`` arrays of adjacency row bitsets; emissions use the reduced form
``score[i, j] = base[i] + sum_c delta[i, c] * reach[c, j]`` where ``reach[c, j]``
is 1 when ``j`` is reachable from ``c`` (or ``j == c``).
"""
import math

import numpy as np

NAME = "python"


def _log_sig(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (math.exp(-x) + 1.0)
    e = math.exp(x)
    return e / (1.0 + e)


def _log_norm(log_binom, log_lam, log_1m):
    mx = -math.inf
    for e in range(len(log_binom)):
        v = log_binom[e] + log_lam + (e - 1) * log_1m
        if v > mx:
            mx = v
    acc = 0.0
    for e in range(len(log_binom)):
        acc += math.exp(log_binom[e] + log_lam + (e - 1) * log_1m - mx)
    return mx + math.log(acc)


def _reach_matrix(rows, n):
    reach = list(rows)
    for k in range(n):
        bk = 1 << k
        rk = reach[k]
        for i in range(n):
            if reach[i] & bk:
                reach[i] |= rk
    out = np.zeros((n, n))
    for c in range(n):
        bits = reach[c] | (1 << c)
        for j in range(n):
            if bits >> j & 1:
                out[c, j] = 1.0
    return out


def _emission(rows, n, base, delta, attach, marginal, log_norm):
    score = delta @ _reach_matrix(rows, n) + base[:, None]
    if marginal:
        mx = score.max(axis=1)
        per = np.log(np.exp(score - mx[:, None]).sum(axis=1)) + mx
    else:
        per = score[np.arange(score.shape[0]), attach]
    total = 0.0
    for v in per.tolist():
        total += v
    return total - log_norm


def log_emission(rows, base, delta, attach, marginal, log_norm):
    """Log emission probability of one network given its row bitsets."""
    rows = [int(x) for x in rows]
    return _emission(rows, len(rows), np.asarray(base), np.asarray(delta), np.asarray(attach),
                     bool(marginal), float(log_norm))


def run_sweeps(path, kappa, emissions, base, delta, attach, marginal, log_norm, log_binom,
               edge_idx, u_state, z, u_kappa, sigma, update_kappa, iter_offset, burn_in,
               out_lambda, out_loglik, out_kacc, state_acc, edge_sums, thin, snaps, snap_offset):
    """Run ``len(z)`` Gibbs sweeps in place; returns the final ``kappa``."""
    T, n = path.shape
    n_iter = z.shape[0]
    rows = [[int(x) for x in path[t]] for t in range(T)]
    log_binom = [float(x) for x in log_binom]
    marginal = bool(marginal)

    total = 0
    for t in range(1, T):
        for r in range(n):
            total += (rows[t][r] ^ rows[t - 1][r]).bit_count()

    log_lam, log_1m = _log_sig(kappa), _log_sig(-kappa)
    log_z = _log_norm(log_binom, log_lam, log_1m)
    bit_w = np.array([1 << c for c in range(n)], dtype=np.uint64)

    for i in range(n_iter):
        for t in range(T):
            r, c = divmod(int(edge_idx[i, t]), n - 1)
            if c >= r:
                c += 1
            bit = 1 << c
            cur = rows[t]
            here = cur[r] & bit
            new = list(cur)
            new[r] ^= bit
            e_new = _emission(new, n, base[t], delta[t], attach, marginal, log_norm)
            d_eps = 0
            if t > 0:
                d_eps += 1 if (rows[t - 1][r] & bit) == here else -1
            d_next = 0
            if t < T - 1:
                d_next = 1 if (rows[t + 1][r] & bit) == here else -1
            log_a = (e_new - emissions[t]) + (d_eps + d_next) * log_1m
            if log_a >= 0.0 or u_state[i, t] < math.exp(log_a):
                rows[t] = new
                emissions[t] = e_new
                total += d_eps + d_next
                state_acc[t] += 1

        accepted = 0
        if update_kappa:
            kp = kappa + sigma * z[i]
            lp_l, lp_1m = _log_sig(kp), _log_sig(-kp)
            lz_p = _log_norm(log_binom, lp_l, lp_1m)
            cur_f = (T - 1) * (log_lam - log_1m - log_z) + total * log_1m + log_lam + log_1m
            new_f = (T - 1) * (lp_l - lp_1m - lz_p) + total * lp_1m + lp_l + lp_1m
            log_a = new_f - cur_f
            if log_a >= 0.0 or u_kappa[i] < math.exp(log_a):
                kappa, log_lam, log_1m, log_z = kp, lp_l, lp_1m, lz_p
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
                arr = np.array(rows[t], dtype=np.uint64)
                edge_sums[t] += ((arr[:, None] & bit_w[None, :]) != 0)
        if thin > 0 and (g + 1) % thin == 0:
            k = (g + 1) // thin - 1 - snap_offset
            for t in range(T):
                for r in range(n):
                    snaps[k, t, r] = rows[t][r]

    for t in range(T):
        for r in range(n):
            path[t, r] = rows[t][r]
    return kappa
