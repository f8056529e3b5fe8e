"""Smooth constraint-free approximation (SCFA).

The discontinuous fronthaul cost is replaced by ``1 - exp(-||w_kn||^2 / a)``
and both constraint families are moved into exponential penalties, giving a
smooth surrogate ``Q(w; a)``. It is minimised by gradient descent with
Barzilai-Borwein steps while ``a`` is annealed, then a link pattern is read
off the beamformer norms and certified by a convex solve.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (LinkMatrix, SolveReport, infeasible_report, links_from_beamformers,
                   repair_links, solve_p2)
from .model import DesignProblem

__all__ = [
    "ScfaConfig",
    "ScfaTrace",
    "smooth_objective",
    "gradient",
    "bb_step",
    "run",
    "write_trace",
]


@dataclass(frozen=True)
class ScfaConfig:
    """Algorithm constants; ``eta1``/``eta2`` default to ``(eps1 + eps2) / 2``."""

    mu1: float = 1e-4
    t_max: int = 100_000
    tau: float = 1e-6
    xi: float = 0.1
    q_t: float = 1e-6
    kappa: float = 1e-2
    delta_win: int = 5
    eta1: float | None = None
    eta2: float | None = None
    a0: float = 1.0
    exp_clamp: float = 60.0

    def __post_init__(self):
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")
        if min(self.mu1, self.tau, self.q_t, self.kappa, self.a0, self.exp_clamp) <= 0:
            raise ValueError("step, tolerances, kappa, a0 and exp_clamp must be positive")
        if self.delta_win < 1 or self.t_max < 1:
            raise ValueError("delta_win and t_max must be at least 1")

    def weights(self, problem: DesignProblem) -> tuple[float, float]:
        default = 0.5 * (problem.eps1 + problem.eps2)
        return (default if self.eta1 is None else self.eta1,
                default if self.eta2 is None else self.eta2)


@dataclass
class ScfaTrace:
    """Per-iteration surrogate value, smoothing parameter, step and gradient norm."""

    q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grad_norm: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ScfaTrace":
        arr = np.asarray(arr).reshape(-1, 4)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy())

    def __len__(self):
        return len(self.q)


def _args(problem: DesignProblem, config: ScfaConfig):
    eta1, eta2 = config.weights(problem)
    return (problem.h_stacked, problem.d_diag, problem.gamma, problem.d_k_const, problem.rate,
            problem.N, problem.L, problem.pt_watt, problem.eps1, problem.eps2, eta1, eta2,
            config.exp_clamp)


def _matrix(problem: DesignProblem, w) -> np.ndarray:
    if hasattr(w, "w"):
        w = w.w
    return np.asarray(w, dtype=complex).reshape(problem.K, problem.N * problem.L)


def smooth_objective(w, a: float, problem: DesignProblem, config: ScfaConfig = ScfaConfig()) -> float:
    """Surrogate ``Q(w; a)`` with clamped exponents."""
    if a <= 0:
        raise ValueError("a must be positive")
    return kernels.objective(_matrix(problem, w), a, *_args(problem, config))


def gradient(w, a: float, problem: DesignProblem, config: ScfaConfig = ScfaConfig()) -> np.ndarray:
    """Conjugate-coordinate gradient ``2 dQ/dw*``, shaped like ``w``."""
    if a <= 0:
        raise ValueError("a must be positive")
    shape = np.shape(w.w if hasattr(w, "w") else w)
    g = kernels.gradient(_matrix(problem, w), a, *_args(problem, config))
    return g.reshape(shape)


def bb_step(grad_now, grad_prev, w_now, w_prev, fallback: float = np.nan) -> float:
    """Barzilai-Borwein step ``Re(dg^H dw) / ||dg||^2`` with a positive fallback."""
    return kernels.bb_step(np.asarray(grad_now), np.asarray(grad_prev),
                           np.asarray(w_now), np.asarray(w_prev), fallback)


def run(problem: DesignProblem, config: ScfaConfig = ScfaConfig(),
        trace: bool = False) -> tuple[SolveReport, ScfaTrace | None]:
    """Run SCFA; the reported power always comes from a convex solve."""
    start = time.perf_counter()
    K, N = problem.K, problem.N
    full = solve_p2(problem, LinkMatrix.full(K, N))
    if not full.feasible:
        rep = infeasible_report(full.links, convex_solves=1)
        rep.wall_time = time.perf_counter() - start
        return rep, None

    W0 = full.beamformers.w.reshape(K, -1)
    W, a, iters, tr = kernels.descend(
        W0, *_args(problem, config), config.a0, config.mu1, int(config.t_max), config.tau,
        config.xi, config.q_t, int(config.delta_win), bool(trace))
    norms = np.linalg.norm(W.reshape(K, N, problem.L), axis=-1)
    if not np.all(np.isfinite(norms)):
        # the descent diverged; fall back to full-cooperation priorities
        norms = full.beamformers.link_norms()

    links = links_from_beamformers(norms[:, :, None], config.kappa * problem.pt_watt)
    rep = repair_links(problem, links, norms, fallback=full)
    rep.convex_solves += 1
    rep.gradient_iters = int(iters)
    rep.wall_time = time.perf_counter() - start
    rep.info.update(final_a=float(a), backend=kernels.IMPLEMENTATION)
    return rep, ScfaTrace.from_array(tr) if trace else None


def write_trace(path, tr: ScfaTrace) -> None:
    """Dump a trace as CSV with columns ``iter,Q,a,step,grad_norm``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["iter", "Q", "a", "step", "grad_norm"])
        for i in range(len(tr)):
            out.writerow([i + 1, repr(float(tr.q[i])), repr(float(tr.a[i])),
                          repr(float(tr.step[i])), repr(float(tr.grad_norm[i]))])
