"""Comparison algorithms: full cooperation, ILR, ES, MM, SCA and GSB."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import (LinkMatrix, SolveReport, count_link_matrices, enumerate_link_matrices,
                   infeasible_report, links_from_beamformers, repair_links, solve_group_sparse,
                   solve_p2, solve_weighted)
from .model import DesignProblem

__all__ = [
    "ReweightConfig",
    "SurrogateState",
    "run_full_cooperation",
    "run_ilr",
    "run_es",
    "run_mm",
    "run_sca",
    "run_gsb",
    "mm_weights",
    "sca_weights",
    "ALGORITHMS",
]


@dataclass(frozen=True)
class ReweightConfig:
    """Constants of the reweighted (MM / SCA) schemes."""

    theta: float = 1e-5
    t_max: int = 1000
    delta: float = 1e-5
    kappa: float = 1e-3

    @property
    def c_theta(self) -> float:
        return 1.0 / np.log1p(1.0 / self.theta)


@dataclass
class SurrogateState:
    """Per-link squared norms of the previous iterate and bookkeeping."""

    x: np.ndarray
    iteration: int = 0
    objective: float = np.nan


def _timed(fn):
    def wrapper(problem, *args, **kwargs):
        start = time.perf_counter()
        rep = fn(problem, *args, **kwargs)
        rep.wall_time = time.perf_counter() - start
        return rep
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def run_full_cooperation(problem: DesignProblem) -> SolveReport:
    """Every RRH serves every user."""
    return solve_p2(problem, LinkMatrix.full(problem.K, problem.N))


def _remove_by_priority(problem: DesignProblem, start: SolveReport, priority: np.ndarray,
                        solves: int) -> SolveReport:
    """Drop links in ascending priority until the first infeasible solve.

    Removals that would leave a user without any RRH are skipped. The
    cheapest feasible configuration visited is returned.
    """
    c = np.zeros((problem.K, problem.N), dtype=np.int8)
    best = start
    for i in np.argsort(priority, axis=None, kind="stable"):
        k, n = np.unravel_index(i, c.shape)
        if np.sum(c[k] == 0) <= 1:
            continue
        c[k, n] = 1
        rep = solve_p2(problem, LinkMatrix(c))
        solves += 1
        if not rep.feasible:
            break
        if rep.p_total < best.p_total:
            best = rep
    out = SolveReport(**best.__dict__)
    out.convex_solves = solves
    return out


@_timed
def run_ilr(problem: DesignProblem) -> SolveReport:
    """Iterative link removal prioritised by the full-cooperation beamformer norms."""
    full = run_full_cooperation(problem)
    if not full.feasible:
        return full
    return _remove_by_priority(problem, full, full.beamformers.link_norms(), 1)


@_timed
def run_es(problem: DesignProblem) -> SolveReport:
    """Exhaustive search over every valid link matrix."""
    best = None
    solves = 0
    for links in enumerate_link_matrices(problem.K, problem.N):
        rep = solve_p2(problem, links)
        solves += 1
        if rep.feasible and (best is None or rep.p_total < best.p_total):
            best = rep
    if best is None:
        return infeasible_report(convex_solves=solves)
    out = SolveReport(**best.__dict__)
    out.convex_solves = solves
    assert solves == count_link_matrices(problem.K, problem.N)
    return out


def mm_weights(problem: DesignProblem, x: np.ndarray, config: ReweightConfig) -> np.ndarray:
    """Weights on ``||w_kn||^2`` of the log-surrogate majorizer."""
    return problem.eps1 * config.c_theta * problem.rate[:, None] / (x + config.theta) + problem.eps2


def sca_weights(problem: DesignProblem, x: np.ndarray, config: ReweightConfig) -> np.ndarray:
    """Weights on ``||w_kn||^2`` of the linearised ``x / (x + theta)`` surrogate."""
    th = config.theta
    return problem.eps1 * problem.rate[:, None] * th / (x + th) ** 2 + problem.eps2


def mm_approx_power(problem, x, config):
    """Smoothed power the MM termination test tracks."""
    th = config.theta
    return float(problem.eps1 * config.c_theta * np.sum(problem.rate[:, None] * x / (x + th))
                 + problem.eps2 * x.sum())


def sca_approx_power(problem, x, config):
    th = config.theta
    return float(problem.eps1 * np.sum(problem.rate[:, None] * x / (x + th)) + problem.eps2 * x.sum())


def mm_merit(problem, x, config):
    """Concave objective the MM iterations decrease monotonically."""
    th = config.theta
    return float(problem.eps1 * config.c_theta * np.sum(problem.rate[:, None] * np.log1p(x / th))
                 + problem.eps2 * x.sum())


def sca_constant(problem, x, config):
    """Constant part of the linearised surrogate at the expansion point."""
    th = config.theta
    return float(problem.eps1 * np.sum(problem.rate[:, None] * x ** 2 / (x + th) ** 2))


def _reweighted(problem: DesignProblem, config: ReweightConfig, weight_fn, approx_fn, merit_fn):
    full = run_full_cooperation(problem)
    if not full.feasible:
        return full
    links = LinkMatrix.full(problem.K, problem.N)
    state = SurrogateState(full.beamformers.link_norms() ** 2)
    p_prev = approx_fn(problem, state.x, config)
    merits = [merit_fn(problem, state.x, config)]
    surrogates = []
    solves = 1
    w = full.beamformers
    for t in range(1, config.t_max + 1):
        weights = weight_fn(problem, state.x, config)
        rep, obj = solve_weighted(problem, links, weights)
        solves += 1
        if not rep.feasible:  # cannot happen for a feasible full-cooperation start
            break
        w = rep.beamformers
        state = SurrogateState(w.link_norms() ** 2, t, obj)
        surrogates.append(obj)
        merits.append(merit_fn(problem, state.x, config))
        p_now = approx_fn(problem, state.x, config)
        if abs(p_now - p_prev) / p_now < config.delta:
            break
        p_prev = p_now
    norms = w.link_norms()
    thresholded = links_from_beamformers(norms[:, :, None], config.kappa * problem.pt_watt)
    out = repair_links(problem, thresholded, norms, fallback=full)
    out.convex_solves += solves
    out.info.update(iterations=state.iteration, merit_trace=merits, surrogate_trace=surrogates)
    return out


@_timed
def run_mm(problem: DesignProblem, config: ReweightConfig = ReweightConfig()) -> SolveReport:
    """Majorization-minimization of the log-sum sparsity surrogate."""
    return _reweighted(problem, config, mm_weights, mm_approx_power, mm_merit)


@_timed
def run_sca(problem: DesignProblem, config: ReweightConfig = ReweightConfig()) -> SolveReport:
    """Successive convex approximation of the ``x / (x + theta)`` surrogate."""
    return _reweighted(problem, config, sca_weights, sca_approx_power, sca_approx_power)


def gsb_weights(problem: DesignProblem) -> np.ndarray:
    return np.broadcast_to(2.0 * np.sqrt(problem.eps1 * problem.eps2 * problem.rate)[:, None],
                           (problem.K, problem.N))


@_timed
def run_gsb(problem: DesignProblem) -> SolveReport:
    """Group-sparse relaxation, then removal by channel-weighted beamformer norms."""
    K, N = problem.K, problem.N
    relaxed, _ = solve_group_sparse(problem, LinkMatrix.full(K, N), gsb_weights(problem))
    if not relaxed.feasible:
        return relaxed
    priority = np.linalg.norm(problem.h_hat, axis=-1) * relaxed.beamformers.link_norms()
    full = run_full_cooperation(problem)
    out = _remove_by_priority(problem, full, priority, 2)
    out.info["priority"] = priority
    return out


def _scfa(problem: DesignProblem) -> SolveReport:
    from .scfa import run
    return run(problem)[0]


ALGORITHMS = {
    "full": run_full_cooperation,
    "ilr": run_ilr,
    "es": run_es,
    "mm": run_mm,
    "sca": run_sca,
    "gsb": run_gsb,
    "scfa": _scfa,
}
