"""Shared builders for small, hand-controlled design problems."""

from __future__ import annotations

import numpy as np
import pytest

from cranbf.model import DesignProblem, SystemParams, sample_feasible_problem


def make_problem(h_hat, err_var=None, gamma=10 ** 0.5, pt=10.0, eps1=5.0, eps2=2.0):
    """Direct construction of a normalized problem from ``(K, N, L)`` estimates."""
    h_hat = np.asarray(h_hat, dtype=complex)
    if h_hat.ndim == 1:
        h_hat = h_hat.reshape(1, 1, -1)
    K, N, _ = h_hat.shape
    err_var = np.zeros((K, N)) if err_var is None else np.asarray(err_var, dtype=float)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,)).copy()
    return DesignProblem(h_hat=h_hat, err_var=err_var, gamma=gamma, sigma_sq=np.ones(K),
                         rate=np.log2(1.0 + gamma), pt_watt=float(pt), eps1=eps1, eps2=eps2)


def unit_problem(rng, K, N, L, gamma=10 ** 0.5, err=0.01, pt=10.0):
    """``h_hat ~ CN(0, I)`` with error variance ``err`` per component."""
    h = (rng.standard_normal((K, N, L)) + 1j * rng.standard_normal((K, N, L))) / np.sqrt(2)
    return make_problem(h, np.full((K, N), err), gamma=gamma, pt=pt)


def model_problems(count, seed, **params):
    """Feasible draws from the simulation model."""
    rng = np.random.default_rng(seed)
    p = SystemParams(**params)
    return [sample_feasible_problem(p, rng)[1] for _ in range(count)]


def random_w(rng, K, N, L, scale=1.0):
    return scale * (rng.standard_normal((K, N, L)) + 1j * rng.standard_normal((K, N, L)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criteria verdicts collected by ``test_acceptance``."""
    import sys
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(report):
        lines = report[criterion]
        verdict = "PASS" if all(ok for ok, _ in lines) else "FAIL"
        terminalreporter.write_line(f"criterion {criterion}: {verdict}")
        for ok, detail in lines:
            terminalreporter.write_line(f"    [{'ok' if ok else 'FAIL'}] {detail}")
