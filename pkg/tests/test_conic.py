import numpy as np
import pytest

from cranbf.conic import (ConeProgram, NonNeg, SecondOrder, Status, embed_functional,
                          embed_linear_map, embed_vector, solve, unembed_vector)

cvxopt = pytest.importorskip("cvxopt")
cvxopt.solvers.options["show_progress"] = False


def random_program(rng, n_lin=None, socs=None):
    """Strictly feasible primal and dual by construction."""
    n_lin = int(rng.integers(1, 4)) if n_lin is None else n_lin
    socs = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(1, 4)))] if socs is None else socs
    cones = [NonNeg(n_lin)] + [SecondOrder(d) for d in socs]
    n = sum(c.dim for c in cones)
    m = int(rng.integers(1, n))

    def interior():
        parts = [rng.uniform(0.1, 2.0, n_lin)]
        for d in socs:
            u = rng.standard_normal(d - 1)
            parts.append(np.r_[np.linalg.norm(u) + rng.uniform(0.1, 1.0), u])
        return np.concatenate(parts)

    A = rng.standard_normal((m, n))
    b = A @ interior()
    c = A.T @ rng.standard_normal(m) + interior()
    return ConeProgram(c, A, b, cones)


def cvxopt_optimum(p: ConeProgram) -> float:
    n = p.c.size
    dims = {"l": p.cones[0].dim, "q": [c.dim for c in p.cones[1:]], "s": []}
    sol = cvxopt.solvers.conelp(cvxopt.matrix(p.c), cvxopt.matrix(-np.eye(n)),
                                cvxopt.matrix(np.zeros(n)), dims, cvxopt.matrix(p.A),
                                cvxopt.matrix(p.b))
    assert sol["status"] == "optimal"
    return sol["primal objective"]


def in_cone(x, cones, tol=1e-9):
    i = 0
    for cone in cones:
        blk = x[i:i + cone.dim]
        i += cone.dim
        if isinstance(cone, NonNeg):
            if blk.min() < -tol:
                return False
        elif blk[0] < np.linalg.norm(blk[1:]) - tol:
            return False
    return True


def test_norm_epigraph():
    # minimize t  s.t.  (t, 3, 4) in SOC(3)
    sol = solve(ConeProgram([1, 0, 0], [[0, 1, 0], [0, 0, 1]], [3, 4], [SecondOrder(3)]))
    assert sol.status is Status.OPTIMAL
    assert sol.primal_obj == pytest.approx(5.0, abs=1e-6)
    assert sol.x == pytest.approx([5, 3, 4], abs=1e-6)


def test_lp_optimum():
    # minimize x1 + 2 x2  s.t.  x1 + x2 = 1, x >= 0  ->  x = (1, 0)
    sol = solve(ConeProgram([1, 2], [[1, 1]], [1], [NonNeg(2)]))
    assert sol.optimal
    assert sol.x == pytest.approx([1, 0], abs=1e-6)
    assert sol.dual_obj == pytest.approx(1.0, abs=1e-6)


def test_primal_infeasible_certificate():
    # x >= 0 and x = -1
    p = ConeProgram([0], [[1]], [-1], [NonNeg(1)])
    sol = solve(p)
    assert sol.status is Status.PRIMAL_INFEASIBLE
    y = sol.y
    assert p.b @ y == pytest.approx(1.0)
    assert in_cone(-p.A.T @ y, p.cones)


def test_dual_infeasible_certificate():
    # minimize -x1  s.t.  x2 = 1, x >= 0  is unbounded
    p = ConeProgram([-1, 0], [[0, 1]], [1], [NonNeg(2)])
    sol = solve(p)
    assert sol.status is Status.DUAL_INFEASIBLE
    assert p.c @ sol.x == pytest.approx(-1.0)
    assert np.linalg.norm(p.A @ sol.x) < 1e-8
    assert in_cone(sol.x, p.cones)


def test_soc_infeasible():
    # (t, u) in SOC with t = 1, u = 2 is impossible
    p = ConeProgram([0, 0], [[1, 0], [0, 1]], [1, 2], [SecondOrder(2)])
    sol = solve(p)
    assert sol.status is Status.PRIMAL_INFEASIBLE
    assert p.b @ sol.y == pytest.approx(1.0)
    assert in_cone(-p.A.T @ sol.y, p.cones)


def test_rejects_malformed_programs():
    with pytest.raises(ValueError):
        ConeProgram([1, 2], [[1, 1, 1]], [1], [NonNeg(2)])
    with pytest.raises(ValueError):
        ConeProgram([1], [[1]], [1], [SecondOrder(0), NonNeg(1)])


def test_random_programs_match_cvxopt():
    rng = np.random.default_rng(7)
    for _ in range(25):
        p = random_program(rng)
        sol = solve(p)
        assert sol.optimal
        ref = cvxopt_optimum(p)
        assert abs(sol.primal_obj - ref) <= 1e-6 * (1 + abs(ref))
        # weak duality and certified residuals
        assert sol.primal_obj >= sol.dual_obj - 1e-8 * (1 + abs(sol.primal_obj))
        assert np.linalg.norm(p.A @ sol.x - p.b) <= 1e-8 * (1 + np.linalg.norm(p.b)) * 10
        assert in_cone(sol.x, p.cones, 1e-8) and in_cone(sol.s, p.cones, 1e-8)


def test_grid_oracle_two_dimensional_feasible_set():
    # 10 variables, 3 cones, 8 equalities: the feasible set is a 2-D slice
    rng = np.random.default_rng(3)
    p = random_program(rng, n_lin=2, socs=[3, 3, 2])
    while p.A.shape[0] != 8:
        p = random_program(rng, n_lin=2, socs=[3, 3, 2])
    sol = solve(p)
    assert sol.optimal
    x0 = np.linalg.lstsq(p.A, p.b, rcond=None)[0]
    null = np.linalg.svd(p.A)[2][8:].T
    z = null.T @ (sol.x - x0)
    best = np.inf
    for span in (4.0, 0.1, 0.002):  # zoom in around the best grid point
        g = np.linspace(-span, span, 201)
        Z1, Z2 = np.meshgrid(g + z[0], g + z[1])
        pts = x0[:, None] + null @ np.vstack([Z1.ravel(), Z2.ravel()])
        ok = np.array([in_cone(pts[:, j], p.cones, 0.0) for j in range(pts.shape[1])])
        vals = p.c @ pts[:, ok]
        best = min(best, vals.min())
    assert best >= sol.primal_obj - 1e-7
    assert best <= sol.primal_obj + 1e-3


def _scaled_solutions(p, rng):
    base = solve(p)
    scaled_c = solve(ConeProgram(7.5 * p.c, p.A, p.b, p.cones))
    D = np.diag(rng.uniform(0.2, 5.0, p.b.size))
    scaled_rows = solve(ConeProgram(p.c, D @ p.A, D @ p.b, p.cones))
    return base, scaled_c, scaled_rows


def test_scaling_robustness_polyhedral():
    # vertex optima are computed to full accuracy, so x itself must not move
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = random_program(rng, n_lin=int(rng.integers(3, 8)), socs=[])
        base, scaled_c, scaled_rows = _scaled_solutions(p, rng)
        assert scaled_c.x == pytest.approx(base.x, abs=1e-6)
        assert scaled_rows.x == pytest.approx(base.x, abs=1e-6)


def test_scaling_robustness_with_cones():
    # On a curved boundary the objective is quadratic in tangential error, so
    # x is only resolved to about sqrt(tol); the optimal value is sharp.
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = random_program(rng)
        base, scaled_c, scaled_rows = _scaled_solutions(p, rng)
        assert scaled_c.primal_obj == pytest.approx(7.5 * base.primal_obj, rel=1e-8, abs=1e-8)
        assert scaled_rows.primal_obj == pytest.approx(base.primal_obj, rel=1e-8, abs=1e-8)
        assert scaled_c.x == pytest.approx(base.x, abs=1e-3)
        assert scaled_rows.x == pytest.approx(base.x, abs=1e-3)


def test_deterministic():
    p = random_program(np.random.default_rng(5))
    assert np.array_equal(solve(p).x, solve(p).x)


def test_embedding_examples():
    assert embed_functional([1]) @ embed_vector([1 + 2j]) == pytest.approx(1.0)
    assert np.linalg.norm(embed_vector([1 + 1j, 1 - 1j])) == pytest.approx(2.0)


def test_embedding_random(rng):
    a = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    w = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    T = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    assert embed_functional(a) @ embed_vector(w) == pytest.approx(np.real(np.vdot(a, w)), abs=1e-12)
    assert unembed_vector(embed_vector(w)) == pytest.approx(w)
    assert embed_linear_map(T) @ embed_vector(w) == pytest.approx(embed_vector(T @ w), abs=1e-12)
