"""Exact two-marginal optimal transport for costs ``||x - y||^p``, ``p in {1, 2}``.

The solver is a primal network simplex on the bipartite transportation graph.
The basis is a spanning tree kept in parent/thread form, so a pivot only
touches the re-hung subtree.  It starts from a northwest-corner basis built
after sorting both supports along their principal direction, which is close
to optimal for elongated data, and it prices arcs by block search.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .measures import DiscreteMeasure, Problem, check_p

BALANCE_TOL = 1e-9


class SolverError(RuntimeError):
    """The transportation simplex failed to terminate within its pivot budget."""


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse coupling stored as ``(rows[t], cols[t], masses[t])`` triplets.

    ``u`` and ``v`` hold the dual potentials when the plan comes from the
    network simplex (``u_k + v_l <= c_kl`` with equality on the support).
    """

    source_size: int
    target_size: int
    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    p: int
    cost: float = float("nan")
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    @property
    def nnz(self) -> int:
        return len(self.masses)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.source_size, self.target_size))
        np.add.at(out, (self.rows, self.cols), self.masses)
        return out

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, self.masses, minlength=self.source_size)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, self.masses, minlength=self.target_size)

    def transpose(self) -> "TransportPlan":
        return transpose_plan(self)

    def to_dict(self) -> dict:
        entries = [[int(k), int(l), float(m)] for k, l, m in zip(self.rows, self.cols, self.masses)]
        return {"entries": entries, "cost": float(self.cost)}

    @classmethod
    def from_dense(cls, matrix, p: int, cost: float = float("nan")) -> "TransportPlan":
        matrix = np.asarray(matrix, dtype=float)
        rows, cols = np.nonzero(matrix > 0)
        return cls(matrix.shape[0], matrix.shape[1], rows, cols, matrix[rows, cols], p, cost)


def diagonal_plan(measure: DiscreteMeasure, p: int) -> TransportPlan:
    """The identity coupling ``diag(weights)`` of a measure with itself."""
    idx = np.arange(measure.n)
    return TransportPlan(measure.n, measure.n, idx, idx, measure.weights.copy(), p, 0.0)


def transpose_plan(plan: TransportPlan) -> TransportPlan:
    return TransportPlan(
        plan.target_size, plan.source_size, plan.cols, plan.rows, plan.masses,
        plan.p, plan.cost, plan.v, plan.u,
    )


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, p) -> np.ndarray:
    """Pairwise costs ``||x_k - y_l||^p`` computed from explicit differences."""
    p = check_p(p)
    if mu.d != nu.d:
        raise ValueError(f"dimension mismatch: {mu.d} vs {nu.d}")
    X, Y = mu.points, nu.points
    out = np.empty((len(X), len(Y)))
    chunk = max(1, 2_000_000 // max(1, len(Y) * X.shape[1]))
    for s in range(0, len(X), chunk):
        diff = X[s:s + chunk, None, :] - Y[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        out[s:s + chunk] = sq if p == 2 else np.sqrt(sq)
    return out


DIR_UP = 1     # tree arc points from the node to its parent
DIR_DOWN = -1  # tree arc points from the parent to the node


@numba.njit(cache=True, nogil=True)
def _arc_ends(e, n1, n2, art):
    # arcs 0 .. n1*n2-1 are (row k -> column l); arc n1*n2 links row 0 to the root
    if e == art:
        return 0, n1 + n2
    k = e // n2
    return k, n1 + (e - k * n2)


@numba.njit(cache=True, nogil=True)
def _initial_tree(a, b, n1, n2):
    """Northwest-corner basis; ties advance the row so zero-flow arcs point rootwards."""
    m = n1 + n2 - 1
    arcs = np.empty(m, np.int64)
    flows = np.empty(m, np.float64)
    sa = a.copy()
    sb = b.copy()
    i = 0
    j = 0
    for t in range(m):
        q = min(sa[i], sb[j])
        arcs[t] = i * n2 + j
        flows[t] = max(q, 0.0)
        sa[i] -= q
        sb[j] -= q
        if i == n1 - 1:
            j += 1
        elif j == n2 - 1:
            i += 1
        elif sa[i] <= sb[j]:
            i += 1
        else:
            j += 1
    return arcs, flows


@numba.njit(cache=True, nogil=True)
def _network_simplex(a, b, C, max_iter, check):
    n1, n2 = C.shape
    cost = C.ravel()
    node_num = n1 + n2
    root = node_num
    all_node = node_num + 1
    arc_num = n1 * n2
    art = arc_num

    flow = np.zeros(arc_num + 1)
    state = np.ones(arc_num + 1, np.int8)  # 1: nonbasic at zero, 0: basic
    parent = np.full(all_node, -1, np.int64)
    pred = np.full(all_node, -1, np.int64)
    pred_dir = np.zeros(all_node, np.int64)
    thread = np.empty(all_node, np.int64)
    rev_thread = np.empty(all_node, np.int64)
    succ_num = np.ones(all_node, np.int64)
    last_succ = np.empty(all_node, np.int64)
    pi = np.zeros(all_node)

    # ---- initial spanning tree and its traversal order
    tarcs, tflows = _initial_tree(a, b, n1, n2)
    m = len(tarcs)
    deg = np.zeros(all_node + 1, np.int64)
    for t in range(m + 1):
        e = tarcs[t] if t < m else art
        s, g = _arc_ends(e, n1, n2, art)
        deg[s + 1] += 1
        deg[g + 1] += 1
    for v in range(all_node):
        deg[v + 1] += deg[v]
    fill = deg[:all_node].copy()
    adj = np.empty(2 * (m + 1), np.int64)
    for t in range(m + 1):
        e = tarcs[t] if t < m else art
        if t < m:
            flow[e] = tflows[t]
        state[e] = 0
        s, g = _arc_ends(e, n1, n2, art)
        adj[fill[s]] = e
        fill[s] += 1
        adj[fill[g]] = e
        fill[g] += 1
    order = np.empty(all_node, np.int64)
    stack = np.empty(all_node, np.int64)
    top = 0
    stack[0] = root
    cnt = 0
    seen = np.zeros(all_node, np.bool_)
    seen[root] = True
    while top >= 0:
        x = stack[top]
        top -= 1
        order[cnt] = x
        cnt += 1
        for q in range(deg[x + 1] - 1, deg[x] - 1, -1):
            e = adj[q]
            s, g = _arc_ends(e, n1, n2, art)
            y = g if s == x else s
            if not seen[y]:
                seen[y] = True
                parent[y] = x
                pred[y] = e
                c = cost[e] if e != art else 0.0
                if y == s:
                    pred_dir[y] = DIR_UP
                    pi[y] = pi[x] - c
                else:
                    pred_dir[y] = DIR_DOWN
                    pi[y] = pi[x] + c
                top += 1
                stack[top] = y
    pos = np.empty(all_node, np.int64)
    for t in range(all_node):
        u = order[t]
        pos[u] = t
        nxt = order[t + 1] if t + 1 < all_node else root
        thread[u] = nxt
        rev_thread[nxt] = u
    for t in range(all_node - 1, 0, -1):
        u = order[t]
        succ_num[parent[u]] += succ_num[u]
    for u in range(all_node):
        last_succ[u] = order[pos[u] + succ_num[u] - 1]

    cmax = 0.0
    for e in range(arc_num):
        if cost[e] > cmax:
            cmax = cost[e]
    tol = 1e-13 * max(cmax, 1.0)
    block = min(max(int(np.sqrt(arc_num)), 16), arc_num)

    next_arc = 0
    it = 0
    status = 0
    dirty = np.empty(all_node, np.int64)
    while True:
        # ---- block search for the entering arc
        best = -tol
        in_arc = -1
        scanned = 0
        c_blk = 0
        e = next_arc
        while scanned < arc_num:
            if state[e] != 0:
                k = e // n2
                rc = cost[e] + pi[k] - pi[n1 + e - k * n2]
                if rc < best:
                    best = rc
                    in_arc = e
            e += 1
            if e == arc_num:
                e = 0
            scanned += 1
            c_blk += 1
            if c_blk == block:
                if in_arc >= 0:
                    break
                c_blk = 0
        next_arc = e
        if in_arc < 0:
            break
        if it >= max_iter:
            status = 1
            break
        it += 1

        # ---- join node of the cycle
        first, second = _arc_ends(in_arc, n1, n2, art)
        u = first
        v = second
        while u != v:
            if succ_num[u] < succ_num[v]:
                u = parent[u]
            else:
                v = parent[v]
        join = u

        # ---- leaving arc, strongly feasible tie rule
        delta = np.inf
        u_out = -1
        result = 0
        u = first
        while u != join:
            if pred_dir[u] == DIR_UP and flow[pred[u]] < delta:
                delta = flow[pred[u]]
                u_out = u
                result = 1
            u = parent[u]
        u = second
        while u != join:
            if pred_dir[u] == DIR_DOWN and flow[pred[u]] <= delta:
                delta = flow[pred[u]]
                u_out = u
                result = 2
            u = parent[u]
        if result == 1:
            u_in = first
            v_in = second
        else:
            u_in = second
            v_in = first
        if delta < 0.0:
            delta = 0.0

        # ---- augment
        if delta > 0.0:
            flow[in_arc] += delta
            u = first
            while u != join:
                flow[pred[u]] -= pred_dir[u] * delta
                u = parent[u]
            u = second
            while u != join:
                flow[pred[u]] += pred_dir[u] * delta
                u = parent[u]
        out_arc = pred[u_out]
        state[in_arc] = 0
        state[out_arc] = 1
        flow[out_arc] = 0.0

        # ---- re-hang the subtree below the leaving arc
        old_rev_thread = rev_thread[u_out]
        old_succ_num = succ_num[u_out]
        old_last_succ = last_succ[u_out]
        v_out = parent[u_out]

        if u_in == u_out:
            parent[u_in] = v_in
            pred[u_in] = in_arc
            pred_dir[u_in] = DIR_UP if u_in == first else DIR_DOWN
            if thread[v_in] != u_out:
                after = thread[old_last_succ]
                thread[old_rev_thread] = after
                rev_thread[after] = old_rev_thread
                after = thread[v_in]
                thread[v_in] = u_out
                rev_thread[u_out] = v_in
                thread[old_last_succ] = after
                rev_thread[after] = old_last_succ
        else:
            thread_continue = thread[old_last_succ] if old_rev_thread == v_in else thread[v_in]
            stem = u_in
            par_stem = v_in
            last = last_succ[u_in]
            after = thread[last]
            thread[v_in] = u_in
            nd = 0
            dirty[nd] = v_in
            nd += 1
            while stem != u_out:
                next_stem = parent[stem]
                thread[last] = next_stem
                dirty[nd] = last
                nd += 1
                before = rev_thread[stem]
                thread[before] = after
                rev_thread[after] = before
                parent[stem] = par_stem
                par_stem = stem
                stem = next_stem
                if last_succ[stem] == last_succ[par_stem]:
                    last = rev_thread[par_stem]
                else:
                    last = last_succ[stem]
                after = thread[last]
            parent[u_out] = par_stem
            thread[last] = thread_continue
            rev_thread[thread_continue] = last
            last_succ[u_out] = last
            if old_rev_thread != v_in:
                thread[old_rev_thread] = after
                rev_thread[after] = old_rev_thread
            for q in range(nd):
                w = dirty[q]
                rev_thread[thread[w]] = w
            tmp_sc = 0
            tmp_ls = last_succ[u_out]
            u = u_out
            while u != u_in:
                pp = parent[u]
                pred[u] = pred[pp]
                pred_dir[u] = -pred_dir[pp]
                tmp_sc += succ_num[u] - succ_num[pp]
                succ_num[u] = tmp_sc
                last_succ[pp] = tmp_ls
                u = pp
            pred[u_in] = in_arc
            pred_dir[u_in] = DIR_UP if u_in == first else DIR_DOWN
            succ_num[u_in] = old_succ_num

        up_limit_out = join if last_succ[join] == v_in else -1
        last_succ_out = last_succ[u_out]
        u = v_in
        while u != -1 and last_succ[u] == v_in:
            last_succ[u] = last_succ_out
            u = parent[u]
        if join != old_rev_thread and v_in != old_rev_thread:
            u = v_out
            while u != up_limit_out and last_succ[u] == old_last_succ:
                last_succ[u] = old_rev_thread
                u = parent[u]
        elif last_succ_out != old_last_succ:
            u = v_out
            while u != up_limit_out and last_succ[u] == old_last_succ:
                last_succ[u] = last_succ_out
                u = parent[u]
        u = v_in
        while u != join:
            succ_num[u] += old_succ_num
            u = parent[u]
        u = v_out
        while u != join:
            succ_num[u] -= old_succ_num
            u = parent[u]

        # ---- shift potentials of the moved subtree
        sigma = pi[v_in] - pi[u_in] - pred_dir[u_in] * cost[in_arc]
        end = thread[last_succ[u_in]]
        u = u_in
        while u != end:
            pi[u] += sigma
            u = thread[u]

        if check and not _tree_ok(parent, pred, pred_dir, thread, succ_num, last_succ,
                                  pi, state, cost, n1, n2, art, root):
            status = 2
            break

    for e in range(arc_num):
        if flow[e] < 0.0:
            flow[e] = 0.0
    u_pot = -pi[:n1]
    v_pot = pi[n1:node_num].copy()
    return flow[:arc_num], u_pot, v_pot, it, status


@numba.njit(cache=True)
def _tree_ok(parent, pred, pred_dir, thread, succ_num, last_succ, pi, state, cost,
             n1, n2, art, root):
    """Consistency of the tree bookkeeping; used by the test-suite only."""
    all_node = len(parent)
    # thread must be a preorder: every subtree occupies a contiguous run
    u = root
    for t in range(all_node):
        run = u
        for _ in range(succ_num[u] - 1):
            run = thread[run]
            w = run
            while w != u and w != -1:
                w = parent[w]
            if w != u:
                return False
        if run != last_succ[u]:
            return False
        u = thread[u]
    if u != root:
        return False
    count = 0
    for e in range(len(state)):
        if state[e] == 0:
            count += 1
    if count != all_node - 1:
        return False
    for u in range(all_node):
        if u == root:
            continue
        e = pred[u]
        if state[e] != 0:
            return False
        s, g = _arc_ends(e, n1, n2, art)
        if pred_dir[u] == DIR_UP:
            if s != u or g != parent[u]:
                return False
        elif g != u or s != parent[u]:
            return False
        c = cost[e] if e != art else 0.0
        if abs(c + pi[s] - pi[g]) > 1e-9 * (1.0 + abs(c)):
            return False
    return True


def _projection_order(mu: DiscreteMeasure, nu: DiscreteMeasure):
    # sorting both sides along a common direction makes the NW corner start
    # close to the monotone (1-D optimal) coupling
    pts = np.vstack([mu.points, nu.points])
    centered = pts - pts.mean(axis=0)
    if mu.d == 1:
        direction = np.ones(1)
    else:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        direction = vt[0]
    return (np.argsort(mu.points @ direction, kind="stable"),
            np.argsort(nu.points @ direction, kind="stable"))


def solve_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, p=2, max_iter: int | None = None,
             check: bool = False):
    """Optimal plan between two measures and its cost ``W_p^p(mu, nu)``.

    Returns ``(plan, cost)``.  The plan is a basic solution with at most
    ``n1 + n2 - 1`` atoms and carries the dual potentials of the final basis.
    Raises :class:`SolverError` if the pivot budget is exhausted.  ``check``
    validates the spanning-tree bookkeeping after every pivot (slow).
    """
    p = check_p(p)
    C = cost_matrix(mu, nu, p)
    a, b = mu.weights, nu.weights
    sa, sb = a.sum(), b.sum()
    if abs(sa - sb) > BALANCE_TOL:
        raise ValueError(f"marginal masses differ: {sa!r} vs {sb!r}")
    b = b * (sa / sb)
    ro, co = _projection_order(mu, nu)
    Cp = np.ascontiguousarray(C[np.ix_(ro, co)])
    if max_iter is None:
        max_iter = 1000 * (mu.n + nu.n) + 10 * mu.n * nu.n
    flow, u, v, iters, status = _network_simplex(
        np.ascontiguousarray(a[ro]), np.ascontiguousarray(b[co]), Cp, max_iter, check)
    if status == 1:
        raise SolverError(f"network simplex exceeded {iters} pivots on a {mu.n}x{nu.n} problem")
    if status == 2:
        raise SolverError(f"spanning tree bookkeeping broke at pivot {iters}")
    nz = np.nonzero(flow > 0)[0]
    rows, cols, masses = ro[nz // nu.n], co[nz % nu.n], flow[nz]
    order = np.lexsort((cols, rows))
    rows, cols, masses = rows[order], cols[order], masses[order]
    cost = float(np.dot(C[rows, cols], masses))
    uu = np.empty(mu.n)
    vv = np.empty(nu.n)
    uu[ro] = u
    vv[co] = v
    return TransportPlan(mu.n, nu.n, rows, cols, masses, p, cost, uu, vv), cost


def plan_cost(plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure, p=None) -> float:
    p = plan.p if p is None else check_p(p)
    diff = mu.points[plan.rows] - nu.points[plan.cols]
    sq = np.einsum("ij,ij->i", diff, diff)
    return float(np.dot(sq if p == 2 else np.sqrt(sq), plan.masses))


def warm_up() -> None:
    """Load (or compile) the solver kernels so later timings exclude it."""
    point = DiscreteMeasure([[0.0]], [1.0])
    solve_ot(point, point, 2)


def thread_count() -> int:
    env = os.environ.get("WBARY_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def solve_many(pairs, p) -> list:
    """Solve independent OT problems, possibly in parallel; results keep input order."""
    pairs = list(pairs)
    workers = min(thread_count(), len(pairs))
    if workers <= 1:
        return [solve_ot(mu, nu, p) for mu, nu in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda pr: solve_ot(pr[0], pr[1], p), pairs))


def wasserstein_objective(nu: DiscreteMeasure, problem: Problem) -> float:
    """Barycenter objective ``sum_i lambda_i W_p^p(nu, mu^i)`` with exact OT."""
    if nu.d != problem.d:
        raise ValueError(f"candidate has dimension {nu.d}, problem has {problem.d}")
    results = solve_many([(nu, mu) for mu in problem.measures], problem.p)
    return float(sum(lam * cost for lam, (_, cost) in zip(problem.weights, results)))
