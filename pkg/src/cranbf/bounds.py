"""Lower and upper bounds on the optimal total network power.

The lower bound drops inter-user interference and the per-RRH limits: for
each user and each nonempty serving set ``S`` the single-user minimum
radiated power is ``gamma sigma^2 / lambda_max(h_S h_S^H - gamma D_S)``, and
the bound keeps the cheapest set per user. The upper bound charges every
user on every RRH at full transmit power.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import DesignProblem, SystemParams

__all__ = [
    "BoundReport",
    "eigmax",
    "jacobi_eigenvalues",
    "lower_bound",
    "upper_bound",
    "compute_bounds",
    "necessary_condition_holds",
]

SUBSET_GUARD_N = 20


def _round_robin(n: int):
    """Pairings covering every index pair once per sweep (circle method)."""
    m = n + (n % 2)
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(idx[: m // 2])
        q = np.array(idx[m // 2:][::-1])
        keep = (p < n) & (q < n)
        lo, hi = np.minimum(p, q)[keep], np.maximum(p, q)[keep]
        rounds.append((lo, hi))
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]
    return rounds


def jacobi_eigenvalues(S: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Each round applies a set of disjoint rotations at once, which commute,
    so a sweep costs ``n - 1`` vectorised row/column updates.
    """
    A = np.array(S, dtype=float)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 1:
        return A.diagonal().copy()
    rounds = _round_robin(n)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(A.diagonal() ** 2), 0.0))
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            rot = np.abs(apq) > 1e-300
            if not rot.any():
                continue
            p, q, apq = p[rot], q[rot], apq[rot]
            with np.errstate(over="ignore"):
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- J' A J with J[p,p] = J[q,q] = c, J[p,q] = s, J[q,p] = -s
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
    return np.sort(A.diagonal())


def eigmax(M: np.ndarray) -> float:
    """Largest eigenvalue of a Hermitian matrix.

    Works on the real symmetric embedding ``[[Re M, -Im M], [Im M, Re M]]``,
    whose spectrum is that of ``M`` with every eigenvalue doubled.
    """
    M = np.atleast_2d(np.asarray(M))
    M = 0.5 * (M + M.conj().T)
    if np.iscomplexobj(M) and np.any(M.imag):
        S = np.block([[M.real, -M.imag], [M.imag, M.real]])
    else:
        S = M.real
    return float(jacobi_eigenvalues(S)[-1])


@dataclass
class BoundReport:
    p_lower: float
    p_upper: float
    per_user: np.ndarray
    subsets: list
    infeasible_flag: bool


def _margin_matrix(problem: DesignProblem, k: int, rrhs) -> np.ndarray:
    h = problem.h_hat[k, list(rrhs)].reshape(-1)
    d = np.repeat(problem.err_var[k, list(rrhs)], problem.L)
    return np.outer(h, h.conj()) - problem.gamma[k] * np.diag(d)


def necessary_condition_holds(problem: DesignProblem) -> bool:
    """Every user has a positive eigen-margin when served by all RRHs."""
    allr = range(problem.N)
    return all(eigmax(_margin_matrix(problem, k, allr)) > 0 for k in range(problem.K))


def lower_bound(problem: DesignProblem):
    """Per-user minimum over serving sets; returns ``(p_lower, per_user, subsets, flag)``."""
    N = problem.N
    if N > SUBSET_GUARD_N:
        raise ValueError(f"subset enumeration refused for N = {N} > {SUBSET_GUARD_N}")
    subsets = [s for r in range(1, N + 1) for s in itertools.combinations(range(N), r)]
    per_user = np.full(problem.K, np.inf)
    best = [None] * problem.K
    for k in range(problem.K):
        for S in subsets:
            lam = eigmax(_margin_matrix(problem, k, S))
            if lam <= 0:
                continue
            val = (problem.eps1 * problem.rate[k] * len(S)
                   + problem.eps2 * problem.gamma[k] * problem.sigma_sq[k] / lam)
            if val < per_user[k]:
                per_user[k], best[k] = val, S
    flag = bool(np.any(~np.isfinite(per_user)))
    p_lower = np.inf if flag else float(per_user.sum())
    return p_lower, per_user, best, flag


def upper_bound(source) -> float:
    """``eps1 N sum_k log2(1 + gamma_k) + eps2 N P_t``."""
    if isinstance(source, SystemParams):
        rate = source.K * np.log2(1.0 + source.gamma)
        N, eps1, eps2, pt = source.N, source.eps1, source.eps2, source.pt_watt
    else:
        rate = float(np.sum(source.rate))
        N, eps1, eps2, pt = source.N, source.eps1, source.eps2, source.pt_watt
    return eps1 * N * rate + eps2 * N * pt


def compute_bounds(problem: DesignProblem) -> BoundReport:
    p_lower, per_user, subsets, flag = lower_bound(problem)
    return BoundReport(p_lower, upper_bound(problem), per_user, subsets, flag)
