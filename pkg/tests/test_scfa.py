import csv

import numpy as np
import pytest

from cranbf import _kernels_py, scfa
from cranbf.core import LinkMatrix, rho_all, solve_p2
from cranbf.scfa import ScfaConfig, ScfaTrace, bb_step, gradient, run, smooth_objective, write_trace

from conftest import make_problem, model_problems, random_w, unit_problem

try:
    from cranbf import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def reference_q(w, a, p, eta1, eta2, clamp=60.0):
    """Surrogate written term by term from its definition."""
    x = np.sum(np.abs(w) ** 2, axis=-1)
    q = p.eps1 * sum(p.rate[k] * (1 - np.exp(-x[k, n] / a)) for k in range(p.K) for n in range(p.N))
    q += p.eps2 * x.sum()
    q += eta1 * sum(np.exp(min((x[:, n].sum() - p.pt_watt) / a, clamp)) for n in range(p.N))
    q += eta2 * sum(np.exp(min(r * r / a, clamp)) - 1 for r in rho_all(p, w))
    return q


def fd_gradient(p, w, a, h=1e-6):
    """Conjugate-coordinate gradient ``dQ/dRe + i dQ/dIm`` by central differences."""
    g = np.zeros(w.shape, dtype=complex)
    for idx in np.ndindex(w.shape):
        for unit in (1.0, 1j):
            e = np.zeros(w.shape, dtype=complex)
            e[idx] = unit * h
            d = (smooth_objective(w + e, a, p) - smooth_objective(w - e, a, p)) / (2 * h)
            g[idx] += unit * d
    return g


# -- surrogate ------------------------------------------------------------------

def test_objective_at_zero(rng):
    p = unit_problem(rng, 2, 3, 2, gamma=2.0)
    a = 10.0
    eta = 0.5 * (p.eps1 + p.eps2)
    expect = eta * 3 * np.exp(-p.pt_watt / a) + eta * 2 * (np.exp(4.0 / a) - 1)
    assert smooth_objective(np.zeros((2, 3, 2)), a, p) == pytest.approx(expect, rel=1e-13)


def test_objective_matches_term_by_term_reference(rng):
    p = unit_problem(rng, 3, 3, 2)
    eta = 0.5 * (p.eps1 + p.eps2)
    for a in (0.5, 3.0, 40.0):
        w = random_w(rng, 3, 3, 2, 0.4)
        assert smooth_objective(w, a, p) == pytest.approx(reference_q(w, a, p, eta, eta), rel=1e-12)


def test_objective_dominates_radiated_power(rng):
    p = unit_problem(rng, 2, 2, 2)
    for _ in range(20):
        w = random_w(rng, 2, 2, 2, rng.uniform(0.01, 3))
        a = 10 ** rng.uniform(-2, 2)
        assert smooth_objective(w, a, p) >= p.eps2 * np.sum(np.abs(w) ** 2)


def test_small_a_recovers_network_power(rng):
    # optimal fixed-pattern beamformers meet every SINR with equality
    p = unit_problem(rng, 2, 3, 2, pt=100.0)
    links = LinkMatrix(np.array([[0, 1, 0], [1, 0, 0]]))
    rep = solve_p2(p, links)
    w = rep.beamformers.w
    scale = np.min(rep.beamformers.link_norms()[links.active] ** 2)
    assert smooth_objective(w, 1e-6 * scale, p) == pytest.approx(rep.p_total, rel=1e-3)


def test_large_a_series_expansion(rng):
    p = unit_problem(rng, 2, 2, 2)
    w = random_w(rng, 2, 2, 2, 0.5)
    a = 1e6
    eta = 0.5 * (p.eps1 + p.eps2)
    x = np.sum(np.abs(w) ** 2, axis=-1)
    s = x.sum(axis=0) - p.pt_watt
    r = rho_all(p, w)
    series = (p.eps1 * np.sum(p.rate[:, None] * (x / a - x ** 2 / (2 * a * a)))
              + p.eps2 * x.sum()
              + eta * np.sum(1 + s / a + s ** 2 / (2 * a * a))
              + eta * np.sum(r ** 2 / a + r ** 4 / (2 * a * a)))
    assert smooth_objective(w, a, p) == pytest.approx(series, rel=1e-12)


def test_clamping_prevents_overflow(rng):
    p = unit_problem(rng, 2, 2, 2)
    w = random_w(rng, 2, 2, 2, 50.0)
    q = smooth_objective(w, 1e-8, p)
    g = gradient(w, 1e-8, p)
    assert np.isfinite(q) and np.all(np.isfinite(g))


def test_nonpositive_a_rejected(rng):
    p = unit_problem(rng, 1, 1, 1)
    with pytest.raises(ValueError):
        smooth_objective(np.zeros((1, 1, 1)), 0.0, p)
    with pytest.raises(ValueError):
        gradient(np.zeros((1, 1, 1)), -1.0, p)


# -- gradient -------------------------------------------------------------------

def test_gradient_at_zero(rng):
    p = unit_problem(rng, 3, 2, 2)
    assert np.all(gradient(np.zeros((3, 2, 2)), 1.0, p) == 0)


def test_gradient_radiated_term_only(rng):
    h = rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2))
    p = make_problem(h, eps1=0.0, eps2=2.0)
    cfg = ScfaConfig(eta1=0.0, eta2=0.0)
    w = random_w(rng, 2, 2, 2)
    assert gradient(w, 0.3, p, cfg) == pytest.approx(2 * p.eps2 * w, rel=1e-14)


def test_gradient_finite_differences(rng):
    for K, N, L in ((1, 1, 1), (2, 2, 1), (2, 3, 2)):
        p = unit_problem(rng, K, N, L, gamma=2.0)
        full = solve_p2(p, LinkMatrix.full(K, N))
        w = full.beamformers.w + random_w(rng, K, N, L, 0.01)
        for a in (1.0, 0.1):
            g = gradient(w, a, p)
            ref = fd_gradient(p, w, a)
            assert np.linalg.norm(g - ref) <= 1e-5 * np.linalg.norm(ref)


def test_gradient_model_scale_fourth_order_differences(rng):
    # large normalized channels make the h^2 error of central differences
    # visible, so this check uses a fourth-order stencil
    def fd4(p, w, a, h=1e-6):
        g = np.zeros(w.shape, dtype=complex)
        for idx in np.ndindex(w.shape):
            for unit in (1.0, 1j):
                e = np.zeros(w.shape, dtype=complex)
                e[idx] = unit * h
                f = [smooth_objective(w + s * e, a, p) for s in (-2, -1, 1, 2)]
                g[idx] += unit * (8 * (f[2] - f[1]) - (f[3] - f[0])) / (12 * h)
        return g

    for p in model_problems(3, seed=17, K=3, N=3, L=2):
        base = solve_p2(p, LinkMatrix.full(p.K, p.N)).beamformers.w
        for a in (1.0, 0.1, 0.01):
            scale = 0.05 * np.max(np.abs(base))
            while True:
                w = base + random_w(rng, p.K, p.N, p.L, scale)
                if np.max(rho_all(p, w) ** 2) / a < 20:
                    break
                scale /= 2
            ref = fd4(p, w, a)
            assert np.linalg.norm(gradient(w, a, p) - ref) <= 1e-5 * np.linalg.norm(ref)


# -- Barzilai-Borwein step ------------------------------------------------------

def test_bb_identity_and_curvature(rng):
    w0, w1 = random_w(rng, 1, 2, 2), random_w(rng, 1, 2, 2)
    g0 = random_w(rng, 1, 2, 2)
    assert bb_step(g0 + (w1 - w0), g0, w1, w0) == pytest.approx(1.0, rel=1e-14)
    assert bb_step(g0 + 2 * (w1 - w0), g0, w1, w0) == pytest.approx(0.5, rel=1e-14)


def test_bb_random_complex(rng):
    for _ in range(10):
        g1, g0, w1, w0 = (random_w(rng, 2, 2, 2) for _ in range(4))
        dg, dw = (g1 - g0).ravel(), (w1 - w0).ravel()
        num = np.sum(dg.real * dw.real + dg.imag * dw.imag)
        den = np.sum(dg.real ** 2 + dg.imag ** 2)
        mu = bb_step(g1, g0, w1, w0, fallback=0.123)
        assert isinstance(mu, float)
        assert mu == pytest.approx(num / den if num > 0 else 0.123, rel=1e-12)


def test_bb_fallbacks(rng):
    w0, w1 = random_w(rng, 1, 1, 2), random_w(rng, 1, 1, 2)
    g = random_w(rng, 1, 1, 2)
    assert bb_step(g, g, w1, w0, fallback=0.7) == 0.7  # zero denominator
    assert bb_step(g - (w1 - w0), g, w1, w0, fallback=0.7) == 0.7  # negative curvature


# -- backends -------------------------------------------------------------------

@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
def test_compiled_kernels_match_numpy():
    p = model_problems(1, seed=8)[0]
    cfg = ScfaConfig()
    args = scfa._args(p, cfg)
    W = solve_p2(p, LinkMatrix.full(p.K, p.N)).beamformers.w.reshape(p.K, -1)
    for a in (10.0, 1.0, 0.01):
        assert _ckernels.objective(W, a, *args) == pytest.approx(_kernels_py.objective(W, a, *args),
                                                                 rel=1e-12)
        gp = _kernels_py.gradient(W, a, *args)
        # model-scale channels cancel a few digits in the QoS term
        assert np.max(np.abs(_ckernels.gradient(W, a, *args) - gp)) <= 1e-9 * np.max(np.abs(gp))
    desc = (cfg.a0, cfg.mu1, 30, cfg.tau, cfg.xi, 0.0, cfg.delta_win, True)
    Wp, ap, ip, tp = _kernels_py.descend(W, *args, *desc)
    Wc, ac, ic, tc = _ckernels.descend(W, *args, *desc)
    assert ip == ic == 30 and ap == ac
    assert np.max(np.abs(Wp - Wc)) <= 1e-6 * np.max(np.abs(Wp))
    assert tc[:, 0] == pytest.approx(tp[:, 0], rel=1e-7)
    assert np.array_equal(tc[:, 1], tp[:, 1])
    # BB steps are ratios of tiny differences and carry fewer digits
    assert tc[:, 2] == pytest.approx(tp[:, 2], rel=1e-4)


def test_pure_python_fallback_selected_by_environment(monkeypatch):
    import importlib

    from cranbf import kernels
    monkeypatch.setenv("CRANBF_PURE_PYTHON", "1")
    try:
        assert importlib.reload(kernels).IMPLEMENTATION == "python"
    finally:
        monkeypatch.delenv("CRANBF_PURE_PYTHON")
        importlib.reload(kernels)


# -- full run -------------------------------------------------------------------

def test_scalar_instance_equals_full_cooperation():
    p = make_problem(np.array([[[0.8 + 0.3j]]]), err_var=[[0.01]])
    rep, _ = run(p)
    full = solve_p2(p, LinkMatrix.full(1, 1))
    assert rep.feasible
    assert rep.p_total == pytest.approx(full.p_total, rel=1e-9)


def test_run_is_certified_and_traced():
    cfg = ScfaConfig()
    for p in model_problems(3, seed=12, K=3, N=3, L=2):
        rep, tr = run(p, cfg, trace=True)
        assert rep.feasible
        assert rep.sinr_min_ratio(p.gamma) >= 1 - 1e-6
        assert np.all(rep.p_per_rrh <= p.pt_watt + 1e-6)
        full = solve_p2(p, LinkMatrix.full(p.K, p.N))
        assert rep.p_total <= full.p_total + 1e-6 or rep.links == full.links
        assert len(tr) == len(tr.a) == len(tr.step) == len(tr.grad_norm) == rep.gradient_iters
        assert np.all(np.diff(tr.a) <= 0)
        assert tr.a.min() >= cfg.xi ** len(tr) * cfg.a0
        # the link pattern repair never needs more than K N solves on top of the initial one
        assert 2 <= rep.convex_solves <= 2 + p.K * p.N


def test_run_infeasible_problem():
    p = make_problem(np.full((2, 1, 1), 0.1), gamma=1e3)
    rep, tr = run(p, trace=True)
    assert not rep.feasible and rep.convex_solves == 1 and tr is None


def test_write_trace(tmp_path):
    tr = ScfaTrace.from_array(np.array([[5.0, 1.0, 1e-4, 2.0], [4.0, 0.1, 3e-3, 1.0]]))
    path = tmp_path / "trace.csv"
    write_trace(path, tr)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iter", "Q", "a", "step", "grad_norm"]
    assert [float(v) for v in rows[2]] == [2, 4.0, 0.1, 3e-3, 1.0]


def test_config_validation():
    for bad in (dict(xi=1.0), dict(xi=0.0), dict(tau=0.0), dict(delta_win=0), dict(a0=-1.0),
                dict(t_max=0)):
        with pytest.raises(ValueError):
            ScfaConfig(**bad)
    p = make_problem(np.ones((1, 1, 1)), eps1=5.0, eps2=2.0)
    assert ScfaConfig().weights(p) == (3.5, 3.5)
    assert ScfaConfig(eta1=1.0).weights(p) == (1.0, 3.5)
