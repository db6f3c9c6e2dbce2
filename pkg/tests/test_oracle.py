import numpy as np
import pytest

from conftest import random_measure, random_problem
from wbary.barycenter import compute_pairwise
from wbary.bounds import pairwise_lower_bound
from wbary.measures import DiscreteMeasure, Problem, gen_sharpness_instance
from wbary.oracle import (
    LPTableau,
    OracleError,
    OracleSizeError,
    exact_barycenter,
    exact_barycenter_result,
    solve_ot_lp,
    tuple_barycenter,
)
from wbary.ot import solve_ot, wasserstein_objective


# ------------------------------------------------------------------ tableau

def test_tableau_small_lp():
    # min -x - y  s.t.  x + 2y + s1 = 4, 3x + y + s2 = 6
    A = [[1, 2, 1, 0], [3, 1, 0, 1]]
    x, val = LPTableau(A, [4, 6], [-1, -1, 0, 0]).solve()
    np.testing.assert_allclose(x[:2], [1.6, 1.2], atol=1e-12)
    assert val == pytest.approx(-2.8)


def test_tableau_negative_rhs():
    x, val = LPTableau([[-1, -1]], [-2], [1, 3]).solve()
    np.testing.assert_allclose(x, [2, 0])
    assert val == 2


def test_tableau_infeasible():
    with pytest.raises(OracleError, match="infeasible"):
        LPTableau([[1, 1], [1, 1]], [1, 2], [0, 0]).solve()


def test_tableau_unbounded():
    with pytest.raises(OracleError, match="unbounded"):
        LPTableau([[1, -1]], [1], [-1, 0]).solve()


def test_tableau_redundant_rows():
    A = [[1, 1, 0], [0, 1, 1], [1, 2, 1]]
    x, val = LPTableau(A, [1, 1, 2], [1, 2, 1]).solve()
    np.testing.assert_allclose(np.array(A) @ x, [1, 1, 2], atol=1e-12)
    assert val == pytest.approx(2.0)


def test_tableau_dimension_check():
    with pytest.raises(ValueError):
        LPTableau([[1, 1]], [1, 2], [0, 0])


# ------------------------------------------------------------------ OT LP

def test_ot_lp_sharpness_pair():
    pr = gen_sharpness_instance(2, 2)
    _, cost = solve_ot_lp(*pr.measures, 2)
    assert cost == pytest.approx(1.0, abs=1e-15)


def test_ot_lp_identical():
    rng = np.random.default_rng(1)
    mu = random_measure(rng, 5, 2)
    assert solve_ot_lp(mu, mu, 1)[1] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_ot_lp_random_6x6(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, 6, 2), random_measure(rng, 6, 2)
    for p in (1, 2):
        plan, cost = solve_ot_lp(mu, nu, p)
        assert abs(cost - solve_ot(mu, nu, p)[1]) <= 1e-9
        np.testing.assert_allclose(plan.row_sums(), mu.weights, atol=1e-12)
        np.testing.assert_allclose(plan.col_sums(), nu.weights, atol=1e-12)


def test_ot_lp_size_guard():
    mu = DiscreteMeasure.from_masses(np.arange(101.0)[:, None], np.ones(101))
    nu = DiscreteMeasure.from_masses(np.arange(100.0)[:, None], np.ones(100))
    with pytest.raises(OracleSizeError):
        solve_ot_lp(mu, nu)


# ------------------------------------------------------------ barycenter LP

@pytest.mark.parametrize("N", range(2, 7))
def test_exact_sharpness_p2(N):
    pr = gen_sharpness_instance(N, 2)
    nu, value = exact_barycenter(pr)
    assert value == pytest.approx((N - 1) / N**2, abs=1e-12)
    # the optimum is not unique for larger N; both the vertex returned and
    # the symmetric two-point measure attain the optimal value
    a = (N - 1) / N
    two_point = DiscreteMeasure([[-a], [a]], [0.5, 0.5])
    assert wasserstein_objective(two_point, pr) == pytest.approx(value, abs=1e-12)
    assert wasserstein_objective(nu, pr) == pytest.approx(value, abs=1e-12)


@pytest.mark.parametrize("N", range(2, 7))
def test_exact_sharpness_p1(N):
    pr = gen_sharpness_instance(N, 1)
    _, value = exact_barycenter(pr)
    assert value == pytest.approx(1 / N, abs=1e-9)
    assert wasserstein_objective(pr.measures[1], pr) == pytest.approx(1 / N, abs=1e-12)


def test_exact_identical_pair():
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 0.5]], [0.3, 0.7])
    nu, value = exact_barycenter(Problem((mu, mu), None, 2))
    assert value == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(nu.sorted().points, mu.sorted().points)


@pytest.mark.parametrize("seed", range(10))
def test_exact_sparsity_and_lower_bound(seed):
    rng = np.random.default_rng(seed)
    for p in (1, 2):
        pr = random_problem(rng, 3, 4, 2, p)
        nu, value = exact_barycenter(pr)
        assert nu.n <= sum(m.n for m in pr.measures) - pr.N + 1
        lb = pairwise_lower_bound(compute_pairwise(pr).costs, pr.weights)
        assert value >= lb - 1e-9
        # the LP value is the objective of the returned measure
        assert wasserstein_objective(nu, pr) == pytest.approx(value, abs=1e-9)


def test_exact_size_guard():
    rng = np.random.default_rng(0)
    pr = random_problem(rng, 4, 1, 2, 2)
    big = Problem([random_measure(rng, 10, 2) for _ in range(4)], None, 2)
    with pytest.raises(OracleSizeError):
        exact_barycenter(big)
    exact_barycenter(pr)


def test_exact_p1_dimension_guard():
    pr = Problem([DiscreteMeasure([[0.0, 0.0, 0.0]], [1.0])] * 2, None, 1)
    with pytest.raises(OracleSizeError):
        exact_barycenter(pr)


def test_tuple_barycenter():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    s, c = tuple_barycenter(pts, np.array([0.5, 0.5]), 2)
    np.testing.assert_allclose(s, [1.0, 0.0])
    assert c == pytest.approx(1.0)
    s, c = tuple_barycenter(pts, np.array([0.75, 0.25]), 1)
    np.testing.assert_allclose(s, [0.0, 0.0])
    assert c == pytest.approx(0.5)


def _fixed_grid_barycenter(problem, grid):
    """Exact barycenter restricted to ``grid`` support, by scipy's HiGHS LP."""
    linprog = pytest.importorskip("scipy.optimize").linprog
    sparse = pytest.importorskip("scipy.sparse")
    G = len(grid)
    nvar = G + sum(G * m.n for m in problem.measures)
    rows, cols, vals, b = [], [], [], []
    c = np.zeros(nvar)
    r = 0
    off = G
    for lam, mu in zip(problem.weights, problem.measures):
        D = np.linalg.norm(grid[:, None, :] - mu.points[None, :, :], axis=2) ** problem.p
        c[off:off + G * mu.n] = lam * D.ravel()
        for g in range(G):  # sum_l pi_gl - nu_g = 0
            rows += [r] * (mu.n + 1)
            cols += list(range(off + g * mu.n, off + (g + 1) * mu.n)) + [g]
            vals += [1.0] * mu.n + [-1.0]
            b.append(0.0)
            r += 1
        for l in range(mu.n):  # sum_g pi_gl = mu_l
            rows += [r] * G
            cols += list(range(off + l, off + G * mu.n, mu.n))
            vals += [1.0] * G
            b.append(mu.weights[l])
            r += 1
        off += G * mu.n
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(r, nvar))
    res = linprog(c, A_eq=A, b_eq=b, method="highs")
    assert res.status == 0
    return res.fun


@pytest.mark.parametrize("seed", range(3))
def test_exact_p1_against_grid_1d(seed):
    rng = np.random.default_rng(seed)
    ms = [DiscreteMeasure.from_masses(rng.integers(0, 9, (3, 1)).astype(float) / 8,
                                      rng.random(3) + 0.1) for _ in range(3)]
    pr = Problem(ms, None, 1)
    _, value = exact_barycenter(pr)
    grid = np.linspace(0, 1, 241)[:, None]
    ref = _fixed_grid_barycenter(pr, grid)
    # every input atom and every median lies on the 1/240 grid, so the grid LP is exact
    assert value == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("seed", range(2))
def test_exact_p1_against_grid_2d(seed):
    rng = np.random.default_rng(seed)
    ms = [random_measure(rng, 2, 2) for _ in range(3)]
    pr = Problem(ms, None, 1)
    _, value = exact_barycenter(pr)
    lo = np.min([m.points.min(axis=0) for m in ms], axis=0)
    hi = np.max([m.points.max(axis=0) for m in ms], axis=0)
    xs, ys = np.linspace(lo[0], hi[0], 31), np.linspace(lo[1], hi[1], 31)
    grid = np.array([[x, y] for x in xs for y in ys])
    ref = _fixed_grid_barycenter(pr, grid)
    # a grid restriction can only be worse; it should be close for a 31 x 31 grid
    assert value <= ref + 1e-9
    assert ref - value <= 0.02 * ref


def test_exact_result_packaging():
    res = exact_barycenter_result(gen_sharpness_instance(3, 2))
    assert res.method == "exact_oracle"
    assert res.eta == 1.0
    assert res.objective == pytest.approx(2 / 9, abs=1e-12)
    assert res.lower_bound == pytest.approx(2 / 9, abs=1e-12)
