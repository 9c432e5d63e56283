"""Pure-numpy dual active-set core for strictly convex diagonal-Hessian QPs.

Solves  min  0.5 * u' diag(h) u + c' u   s.t.  G u >= g
starting from the unconstrained minimum and adding one violated constraint at
a time (Goldfarb-Idnani style dual iteration), so no feasibility phase is
needed and infeasibility is detected when a violated constraint's normal lies
in the span of the active normals with no droppable multiplier. Ties in the
blocking-constraint ratio test are broken by lowest index, which also rules
out cycling on degenerate problems.

This module is the reference implementation; `_qp_fast` is the compiled
mirror with identical iteration logic. Keep the two in sync.
"""

from __future__ import annotations

import numpy as np

OPTIMAL = 0
INFEASIBLE = 1
ITERATION_LIMIT = 2

_DEP_TOL = 1e-12  # relative threshold declaring a normal dependent on the active set
_DUAL_TOL = 1e-12  # multiplier direction entries below this cannot block


def _equality_solve(G, g, c, inv_h, active):
    """Optimum of the subproblem with `active` rows at equality.

    Drops rows with negative multipliers (lowest index first) until the
    remaining multipliers are all nonnegative, so the result is a valid
    dual-feasible starting state. Returns (u, lam_list, active_list).
    """
    active = list(active)
    while active:
        Ga = G[active]
        W = Ga * inv_h
        K = W @ Ga.T
        rhs = g[active] + W @ c
        try:
            lam = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            active.pop()  # dependent row picked up by a stale warm start
            continue
        neg = np.flatnonzero(lam < 0.0)
        if neg.size == 0:
            u = (lam @ Ga - c) * inv_h
            return u, list(lam), active
        del active[neg[0]]
    return -c * inv_h, [], []


def solve_core(h, c, G, g, warm=None, max_iter=200, feas_tol=1e-9):
    """Returns (u, multipliers, active_indices, status, iterations)."""
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    g = np.asarray(g, dtype=float)
    n = h.shape[0]
    m = g.shape[0]
    inv_h = 1.0 / h

    # per-row violation tolerance, absolute + relative in the rhs
    row_tol = feas_tol * (1.0 + np.abs(g)) if m else np.empty(0)

    if warm is not None and len(warm) > 0:
        seen: set[int] = set()
        init = [int(i) for i in warm if 0 <= int(i) < m and not (int(i) in seen or seen.add(int(i)))]
        u, lam, active = _equality_solve(G, g, c, inv_h, init)
    else:
        u = -c * inv_h
        lam = []
        active = []

    iters = 0
    while True:
        if m == 0:
            break
        slack = G @ u - g
        p = int(np.argmin(slack + row_tol))
        if slack[p] >= -row_tol[p]:
            break  # primal feasible: done

        lam_p = 0.0
        n_p = G[p]
        base = float(n_p @ (n_p * inv_h))
        while True:
            iters += 1
            if iters > max_iter:
                lam_full = np.zeros(m)
                lam_full[active] = lam
                return u, lam_full, np.asarray(active, dtype=np.int32), ITERATION_LIMIT, iters

            if active:
                Ga = G[active]
                W = Ga * inv_h
                K = W @ Ga.T
                rhs = W @ n_p
                try:
                    r = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    K = K + (_DEP_TOL * max(1.0, float(np.max(np.diag(K))))) * np.eye(K.shape[0])
                    r = np.linalg.solve(K, rhs)
                z = (n_p - r @ Ga) * inv_h
            else:
                r = np.empty(0)
                z = n_p * inv_h

            # blocking constraint in the dual direction (lowest index on ties)
            t1 = np.inf
            j_block = -1
            for j in range(len(active)):
                rj = r[j]
                if rj > _DUAL_TOL:
                    ratio = lam[j] / rj
                    if ratio < t1:
                        t1 = ratio
                        j_block = j

            # a full-rank active set makes any further normal dependent; force
            # the drop/infeasible branch even if roundoff leaves denom positive
            denom = float(n_p @ z)
            if denom <= _DEP_TOL * max(1.0, base) or len(active) >= n:
                if j_block < 0:
                    lam_full = np.zeros(m)
                    lam_full[active] = lam
                    return u, lam_full, np.asarray(active, dtype=np.int32), INFEASIBLE, iters
                # dual-only step: drop the blocker, primal point unchanged
                for j in range(len(active)):
                    lam[j] -= t1 * r[j]
                lam_p += t1
                del active[j_block]
                del lam[j_block]
                continue

            t2 = (g[p] - float(n_p @ u)) / denom
            t = min(t1, t2)
            u = u + t * z
            for j in range(len(active)):
                lam[j] -= t * r[j]
            lam_p += t
            if t2 <= t1:
                active.append(p)
                lam.append(lam_p)
                break
            del active[j_block]
            del lam[j_block]

    # polish: re-solve the final active set as equalities to shed the drift
    # accumulated over partial steps (keeps KKT residuals near machine level)
    if active:
        u, lam, active = _equality_solve(G, g, c, inv_h, active)
    lam_full = np.zeros(m)
    if active:
        lam_full[active] = lam
    return u, lam_full, np.asarray(active, dtype=np.int32), OPTIMAL, iters
