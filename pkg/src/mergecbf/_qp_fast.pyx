# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dual active-set core; iteration logic mirrors ``_qp_py`` exactly.

The per-iteration work is assembling and factoring the k x k Gram matrix of
active-constraint normals in the inverse-Hessian metric (k <= n <= 64), so
plain Cholesky with C loops is all that is needed.
"""

import numpy as np

cdef int _OPTIMAL = 0
cdef int _INFEASIBLE = 1
cdef int _ITERATION_LIMIT = 2

cdef double _DEP_TOL = 1e-12
cdef double _DUAL_TOL = 1e-12


cdef bint _cholesky(double[:, ::1] K, int k) noexcept nogil:
    """In-place lower Cholesky; returns False on a nonpositive pivot."""
    cdef int i, j, t
    cdef double acc
    for j in range(k):
        acc = K[j, j]
        for t in range(j):
            acc -= K[j, t] * K[j, t]
        if acc <= 0.0:
            return False
        K[j, j] = acc ** 0.5
        for i in range(j + 1, k):
            acc = K[i, j]
            for t in range(j):
                acc -= K[i, t] * K[j, t]
            K[i, j] = acc / K[j, j]
    return True


cdef void _cho_solve(double[:, ::1] L, double[::1] x, int k) noexcept nogil:
    cdef int i, t
    cdef double acc
    for i in range(k):
        acc = x[i]
        for t in range(i):
            acc -= L[i, t] * x[t]
        x[i] = acc / L[i, i]
    for i in range(k - 1, -1, -1):
        acc = x[i]
        for t in range(i + 1, k):
            acc -= L[t, i] * x[t]
        x[i] = acc / L[i, i]


cdef bint _build_and_factor(double[:, ::1] G, double[::1] inv_h, int[::1] active,
                            int k, double[:, ::1] K) noexcept nogil:
    """K = Ga diag(inv_h) Ga' for the active rows, then Cholesky in place."""
    cdef int a, b, t, ra, rb
    cdef int n = inv_h.shape[0]
    cdef double acc, ridge
    for a in range(k):
        ra = active[a]
        for b in range(a + 1):
            rb = active[b]
            acc = 0.0
            for t in range(n):
                acc += G[ra, t] * inv_h[t] * G[rb, t]
            K[a, b] = acc
            K[b, a] = acc
    if _cholesky(K, k):
        return True
    # nearly dependent active set: retry with a tiny ridge
    ridge = 0.0
    for a in range(k):
        ra = active[a]
        for b in range(a + 1):
            rb = active[b]
            acc = 0.0
            for t in range(n):
                acc += G[ra, t] * inv_h[t] * G[rb, t]
            K[a, b] = acc
            K[b, a] = acc
        if K[a, a] > ridge:
            ridge = K[a, a]
    ridge = _DEP_TOL * (1.0 if ridge < 1.0 else ridge)
    for a in range(k):
        K[a, a] += ridge
    return _cholesky(K, k)


def solve_core(h, c, G, g, warm=None, int max_iter=200, double feas_tol=1e-9):
    """Returns (u, multipliers, active_indices, status, iterations)."""
    h_arr = np.ascontiguousarray(h, dtype=np.float64)
    c_arr = np.ascontiguousarray(c, dtype=np.float64)
    g_arr = np.ascontiguousarray(g, dtype=np.float64)
    cdef int n = h_arr.shape[0]
    cdef int m = g_arr.shape[0]
    G_arr = np.ascontiguousarray(G, dtype=np.float64).reshape(m, n) if m else np.empty((0, n))

    cdef double[::1] hv = h_arr
    cdef double[::1] cv = c_arr
    cdef double[::1] gv = g_arr
    cdef double[:, ::1] Gv = G_arr

    u_arr = np.empty(n)
    cdef double[::1] u = u_arr
    inv_arr = np.empty(n)
    cdef double[::1] inv_h = inv_arr
    tol_arr = np.empty(m if m else 1)
    cdef double[::1] row_tol = tol_arr
    K_arr = np.empty((n, n))
    cdef double[:, ::1] K = K_arr
    act_arr = np.empty(n, dtype=np.int32)
    cdef int[::1] active = act_arr
    lam_arr = np.empty(n)
    cdef double[::1] lam = lam_arr
    r_arr = np.empty(n)
    cdef double[::1] r = r_arr
    z_arr = np.empty(n)
    cdef double[::1] z = z_arr

    cdef int i, j, t, k = 0, p, j_block, iters = 0, status = _OPTIMAL
    cdef double acc, best, val, t1, t2, tstep, denom, base, lam_p, sp

    for i in range(n):
        inv_h[i] = 1.0 / hv[i]
        u[i] = -cv[i] * inv_h[i]
    for i in range(m):
        row_tol[i] = feas_tol * (1.0 + abs(gv[i]))

    # ---- warm start: equality-solve the given set, dropping negative multipliers
    if warm is not None and len(warm) > 0:
        seen = np.zeros(m, dtype=np.uint8)
        for idx in warm:
            i = <int> idx
            if 0 <= i < m and not seen[i] and k < n:
                seen[i] = 1
                active[k] = i
                k += 1
        while k > 0:
            if not _build_and_factor(Gv, inv_h, active, k, K):
                k -= 1
                continue
            for j in range(k):
                acc = gv[active[j]]
                for t in range(n):
                    acc += Gv[active[j], t] * inv_h[t] * cv[t]
                lam[j] = acc
            _cho_solve(K, lam, k)
            j_block = -1
            for j in range(k):
                if lam[j] < 0.0:
                    j_block = j
                    break
            if j_block < 0:
                break
            for j in range(j_block, k - 1):
                active[j] = active[j + 1]
            k -= 1
        for t in range(n):
            acc = -cv[t]
            for j in range(k):
                acc += lam[j] * Gv[active[j], t]
            u[t] = acc * inv_h[t]

    # ---- main dual iteration
    while m > 0:
        p = -1
        best = 0.0
        for i in range(m):
            acc = -gv[i]
            for t in range(n):
                acc += Gv[i, t] * u[t]
            val = acc + row_tol[i]
            if val < best:
                best = val
                p = i
        if p < 0:
            break  # primal feasible

        lam_p = 0.0
        base = 0.0
        for t in range(n):
            base += Gv[p, t] * Gv[p, t] * inv_h[t]
        while True:
            iters += 1
            if iters > max_iter:
                status = _ITERATION_LIMIT
                break

            if k > 0:
                _build_and_factor(Gv, inv_h, active, k, K)
                for j in range(k):
                    acc = 0.0
                    for t in range(n):
                        acc += Gv[active[j], t] * inv_h[t] * Gv[p, t]
                    r[j] = acc
                _cho_solve(K, r, k)
                for t in range(n):
                    acc = Gv[p, t]
                    for j in range(k):
                        acc -= r[j] * Gv[active[j], t]
                    z[t] = acc * inv_h[t]
            else:
                for t in range(n):
                    z[t] = Gv[p, t] * inv_h[t]

            t1 = np.inf
            j_block = -1
            for j in range(k):
                if r[j] > _DUAL_TOL:
                    val = lam[j] / r[j]
                    if val < t1:
                        t1 = val
                        j_block = j

            # a full-rank active set makes any further normal dependent; force
            # the drop/infeasible branch even if roundoff leaves denom positive
            denom = 0.0
            for t in range(n):
                denom += Gv[p, t] * z[t]
            if denom <= _DEP_TOL * (1.0 if base < 1.0 else base) or k >= n:
                if j_block < 0:
                    status = _INFEASIBLE
                    break
                for j in range(k):
                    lam[j] -= t1 * r[j]
                lam_p += t1
                for j in range(j_block, k - 1):
                    active[j] = active[j + 1]
                    lam[j] = lam[j + 1]
                k -= 1
                continue

            sp = gv[p]
            for t in range(n):
                sp -= Gv[p, t] * u[t]
            t2 = sp / denom
            tstep = t1 if t1 < t2 else t2
            for t in range(n):
                u[t] += tstep * z[t]
            for j in range(k):
                lam[j] -= tstep * r[j]
            lam_p += tstep
            if t2 <= t1:
                active[k] = p
                lam[k] = lam_p
                k += 1
                break
            for j in range(j_block, k - 1):
                active[j] = active[j + 1]
                lam[j] = lam[j + 1]
            k -= 1
        if status != _OPTIMAL:
            break

    # polish: re-solve the final active set as equalities to shed the drift
    # accumulated over partial steps (keeps KKT residuals near machine level)
    if status == _OPTIMAL:
        while k > 0:
            if not _build_and_factor(Gv, inv_h, active, k, K):
                k -= 1
                continue
            for j in range(k):
                acc = gv[active[j]]
                for t in range(n):
                    acc += Gv[active[j], t] * inv_h[t] * cv[t]
                lam[j] = acc
            _cho_solve(K, lam, k)
            j_block = -1
            for j in range(k):
                if lam[j] < 0.0:
                    j_block = j
                    break
            if j_block < 0:
                break
            for j in range(j_block, k - 1):
                active[j] = active[j + 1]
            k -= 1
        for t in range(n):
            acc = -cv[t]
            for j in range(k):
                acc += lam[j] * Gv[active[j], t]
            u[t] = acc * inv_h[t]

    lam_full = np.zeros(m)
    for j in range(k):
        lam_full[active[j]] = lam[j]
    return u_arr, lam_full, act_arr[:k].copy(), status, iters
