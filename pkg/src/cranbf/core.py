"""SINR and power accounting, link matrices and the fixed-pattern convex solves.

Every convex subproblem is posed as a second-order cone program over the
real embedding of the *active* beamformer coordinates (links with
``c_kn = 0``); inactive coordinates are eliminated, so they are exactly zero.
The programs are handed to :mod:`cranbf.conic` in its dual form

    maximize  b'y   subject to  c - A'y in K,

with ``y`` holding epigraph variables followed by the embedded beamformer.
That keeps the normal-equation matrix of the interior-point method at the
size of the beamformer, which is small.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .model import DesignProblem

__all__ = [
    "LinkMatrix",
    "BeamformerSet",
    "SolveReport",
    "SolverError",
    "sinr",
    "sinr_all",
    "rho",
    "rho_all",
    "power_report",
    "infeasible_report",
    "solve_p2",
    "solve_weighted",
    "solve_group_sparse",
    "links_from_beamformers",
    "enumerate_link_matrices",
    "count_link_matrices",
    "repair_links",
]

ENUMERATION_GUARD = 10**6
_LINK_ZERO_TOL = 1e-9
# stalled solves are still accepted when the best iterate is this accurate
_ACCEPT_TOL = 1e-6


class SolverError(RuntimeError):
    """The cone solver neither converged nor certified infeasibility."""


@dataclass(frozen=True)
class LinkMatrix:
    """Binary ``K x N`` cooperation pattern; ``c[k, n] == 0`` means RRH n serves user k."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c).astype(np.int8)
        if c.ndim != 2 or not np.all((c == 0) | (c == 1)):
            raise ValueError("link matrix must be a binary 2-D array")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def full(cls, K: int, N: int) -> "LinkMatrix":
        """Full cooperation: every RRH serves every user."""
        return cls(np.zeros((K, N), dtype=np.int8))

    @classmethod
    def from_active(cls, active) -> "LinkMatrix":
        return cls(1 - np.asarray(active, dtype=np.int8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape

    @property
    def active(self) -> np.ndarray:
        return self.c == 0

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def is_valid(self) -> bool:
        """Every user is served by at least one RRH."""
        return bool(np.all(self.active.any(axis=1)))

    def empty_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.active.any(axis=1))

    def with_link(self, k: int, n: int, value: int) -> "LinkMatrix":
        c = self.c.copy()
        c[k, n] = value
        return LinkMatrix(c)

    def key(self) -> bytes:
        return self.c.tobytes()

    def __eq__(self, other):
        return isinstance(other, LinkMatrix) and np.array_equal(self.c, other.c)

    def __hash__(self):
        return hash((self.c.shape, self.key()))


@dataclass(frozen=True)
class BeamformerSet:
    """Beamformers ``w[k, n]`` (length ``L``); ``flat`` is the stacked user-major vector."""

    w: np.ndarray

    @classmethod
    def zeros(cls, K: int, N: int, L: int) -> "BeamformerSet":
        return cls(np.zeros((K, N, L), dtype=complex))

    @classmethod
    def from_flat(cls, flat, K: int, N: int, L: int) -> "BeamformerSet":
        return cls(np.asarray(flat, dtype=complex).reshape(K, N, L))

    @property
    def flat(self) -> np.ndarray:
        return self.w.reshape(-1)

    def user(self, k: int) -> np.ndarray:
        """``w_k``, length ``N*L``."""
        return self.w[k].reshape(-1)

    def block(self, k: int, n: int) -> np.ndarray:
        return self.w[k, n]

    def link_norms(self) -> np.ndarray:
        """``||w_kn||``, shape ``(K, N)``."""
        return np.linalg.norm(self.w, axis=-1)


@dataclass
class SolveReport:
    feasible: bool
    p_total: float = np.nan
    p_cp: float = np.nan
    p_rrh: float = np.nan
    p_per_rrh: np.ndarray | None = None
    sinr: np.ndarray | None = None
    links: LinkMatrix | None = None
    beamformers: BeamformerSet | None = None
    convex_solves: int = 0
    gradient_iters: int = 0
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)

    def sinr_min_ratio(self, gamma) -> float:
        if self.sinr is None:
            return np.nan
        return float(np.min(self.sinr / np.asarray(gamma)))


# -- SINR and power -----------------------------------------------------------

def _as_array(problem: DesignProblem, w) -> np.ndarray:
    if isinstance(w, BeamformerSet):
        w = w.w
    return np.asarray(w, dtype=complex).reshape(problem.K, problem.N * problem.L)


def _gains(problem: DesignProblem, W: np.ndarray):
    """``G[k, l] = h_k^H w_l`` and ``E[k, l] = w_l^H D_k w_l``."""
    G = problem.h_stacked.conj() @ W.T
    E = problem.d_diag @ (np.abs(W) ** 2).T
    return G, E


def sinr_all(problem: DesignProblem, w) -> np.ndarray:
    W = _as_array(problem, w)
    G, E = _gains(problem, W)
    P = np.abs(G) ** 2
    signal = np.diag(P).copy()
    interference = (P + E).sum(axis=1) - np.diag(P)
    return signal / (interference + problem.sigma_sq)


def sinr(problem: DesignProblem, w, k: int) -> float:
    """SINR of user ``k`` under the imperfect-CSI model."""
    return float(sinr_all(problem, w)[k])


def rho_all(problem: DesignProblem, w) -> np.ndarray:
    W = _as_array(problem, w)
    G, E = _gains(problem, W)
    P = np.abs(G) ** 2
    g = problem.gamma
    own = np.diag(P) - g * np.diag(E)
    other = (P + E).sum(axis=1) - np.diag(P) - np.diag(E)
    return own - g * other - g * problem.sigma_sq


def rho(problem: DesignProblem, w, k: int) -> float:
    """SINR margin; zero exactly when ``sinr(k) == gamma_k``."""
    return float(rho_all(problem, w)[k])


def power_report(problem: DesignProblem, w, links: LinkMatrix, **counters) -> SolveReport:
    """Power breakdown of a beamformer that respects ``links``."""
    if not isinstance(w, BeamformerSet):
        w = BeamformerSet(np.asarray(w, dtype=complex).reshape(problem.K, problem.N, problem.L))
    norms = w.link_norms()
    bad = np.argwhere((links.c == 1) & (norms > _LINK_ZERO_TOL))
    if bad.size:
        k, n = bad[0]
        raise ValueError(f"beamformer block ({k}, {n}) is nonzero on a removed link")
    per_rrh = (norms ** 2).sum(axis=0)
    p_cp = problem.eps1 * float(problem.rate @ links.active.sum(axis=1))
    p_rrh = problem.eps2 * float(per_rrh.sum())
    return SolveReport(True, p_cp + p_rrh, p_cp, p_rrh, per_rrh, sinr_all(problem, w),
                       links, w, **counters)


def infeasible_report(links: LinkMatrix | None = None, **counters) -> SolveReport:
    return SolveReport(False, links=links, **counters)


# -- link matrices ------------------------------------------------------------

def links_from_beamformers(w, threshold: float) -> LinkMatrix:
    """``c_kn = 1`` exactly where ``||w_kn|| < threshold`` (rows may become empty)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if not isinstance(w, BeamformerSet):
        w = BeamformerSet(np.asarray(w))
    return LinkMatrix((w.link_norms() < threshold).astype(np.int8))


def count_link_matrices(K: int, N: int) -> int:
    return (2 ** N - 1) ** K


def enumerate_link_matrices(K: int, N: int):
    """Yield every valid ``K x N`` link matrix."""
    total = count_link_matrices(K, N)
    if total > ENUMERATION_GUARD:
        raise ValueError(f"{total} link matrices exceed the enumeration guard {ENUMERATION_GUARD}")
    bits = (np.arange(1, 2 ** N)[:, None] >> np.arange(N)) & 1
    rows = (1 - bits).astype(np.int8)
    for choice in itertools.product(range(len(rows)), repeat=K):
        yield LinkMatrix(rows[list(choice)])


# -- SOCP assembly ------------------------------------------------------------

class _Layout:
    """Maps active complex coordinates to the real embedding inside ``y``."""

    def __init__(self, problem: DesignProblem, links: LinkMatrix, n_epi: int):
        K, N, L = problem.K, problem.N, problem.L
        mask = np.repeat(links.active, L, axis=1)  # (K, N*L)
        self.mask = mask
        self.index = -np.ones((K, N * L), dtype=int)
        self.index[mask] = np.arange(int(mask.sum()))
        self.nv = int(mask.sum())
        self.n_epi = n_epi
        self.ny = n_epi + 2 * self.nv

    def re(self, idx):
        return self.n_epi + np.asarray(idx)

    def im(self, idx):
        return self.n_epi + self.nv + np.asarray(idx)

    def decode(self, y, problem: DesignProblem) -> BeamformerSet:
        v = y[self.n_epi:self.n_epi + self.nv] + 1j * y[self.n_epi + self.nv:]
        w = np.zeros(self.mask.shape, dtype=complex)
        w[self.mask] = v
        return BeamformerSet(w.reshape(problem.K, problem.N, problem.L))


class _SocAssembler:
    """Collects affine cone constraints ``F y + f in K``."""

    def __init__(self, ny: int):
        self.ny = ny
        self.rows: list[np.ndarray] = []
        self.consts: list[np.ndarray] = []
        self.cones: list = []

    def add(self, F: np.ndarray, f: np.ndarray, cone):
        self.rows.append(F)
        self.consts.append(f)
        self.cones.append(cone)

    def program(self, cost: np.ndarray) -> conic.ConeProgram:
        """``minimize cost'y`` over the collected constraints."""
        F = np.vstack(self.rows)
        return conic.ConeProgram(c=np.concatenate(self.consts), A=-F.T, b=-cost, cones=self.cones)


def _add_qos_constraints(asm: _SocAssembler, lay: _Layout, problem: DesignProblem):
    K = problem.K
    h = problem.h_stacked
    dsq = np.sqrt(problem.d_diag)
    ny = lay.ny
    users = [np.flatnonzero(lay.mask[l]) for l in range(K)]
    for k in range(K):
        # rows: head, (Re, Im) of h_k^H w_l for every l, D_k^{1/2} w (real and
        # imaginary parts), constant sigma_k. Scaled by 1/||h_k||.
        scale = 1.0 / max(np.linalg.norm(h[k]), 1e-300)
        dcoords = [(l, c) for l in range(K) for c in users[l] if dsq[k, c] > 0]
        rows = 1 + 2 * K + 2 * len(dcoords) + 1
        F = np.zeros((rows, ny))
        f = np.zeros(rows)
        # head: sqrt(1 + 1/gamma) Re(h_k^H w_k)
        a = np.sqrt(1.0 + 1.0 / problem.gamma[k])
        idx = lay.index[k, users[k]]
        hk = h[k, users[k]]
        F[0, lay.re(idx)] = a * hk.real
        F[0, lay.im(idx)] = a * hk.imag
        r = 1
        for l in range(K):
            idx = lay.index[l, users[l]]
            hl = h[k, users[l]]
            # Re(h^H w) = Re(h) Re(w) + Im(h) Im(w); Im(h^H w) = Re(h) Im(w) - Im(h) Re(w)
            F[r, lay.re(idx)] = hl.real
            F[r, lay.im(idx)] = hl.imag
            F[r + 1, lay.re(idx)] = -hl.imag
            F[r + 1, lay.im(idx)] = hl.real
            r += 2
        for l, c in dcoords:
            j = lay.index[l, c]
            F[r, lay.re(j)] = dsq[k, c]
            F[r + 1, lay.im(j)] = dsq[k, c]
            r += 2
        f[r] = np.sqrt(problem.sigma_sq[k])
        asm.add(F * scale, f * scale, conic.SecondOrder(rows))


def _add_power_constraints(asm: _SocAssembler, lay: _Layout, problem: DesignProblem):
    K, N, L = problem.K, problem.N, problem.L
    for n in range(N):
        cols = np.arange(n * L, (n + 1) * L)
        idx = np.concatenate([lay.index[k, cols][lay.mask[k, cols]] for k in range(K)])
        if idx.size == 0:
            continue
        rows = 1 + 2 * idx.size
        F = np.zeros((rows, lay.ny))
        f = np.zeros(rows)
        f[0] = np.sqrt(problem.pt_watt)
        F[1 + np.arange(idx.size), lay.re(idx)] = -1.0
        F[1 + idx.size + np.arange(idx.size), lay.im(idx)] = -1.0
        asm.add(F, f, conic.SecondOrder(rows))


def _epigraph_block(lay: _Layout, t_index: int, idx: np.ndarray, weight: float):
    """Rows of ``(t, sqrt(weight) w_idx)`` in the real embedding."""
    rows = 1 + 2 * idx.size
    F = np.zeros((rows, lay.ny))
    F[0, t_index] = 1.0
    sw = np.sqrt(weight)
    F[1 + np.arange(idx.size), lay.re(idx)] = sw
    F[1 + idx.size + np.arange(idx.size), lay.im(idx)] = sw
    return F, np.zeros(rows), conic.SecondOrder(rows)


def _link_indices(lay: _Layout, problem: DesignProblem, k: int, n: int) -> np.ndarray:
    L = problem.L
    return lay.index[k, n * L:(n + 1) * L]


def _solve(problem: DesignProblem, links: LinkMatrix, lay: _Layout, asm: _SocAssembler,
           cost: np.ndarray, tol: float):
    """Run the solver; return (beamformer or None, solution)."""
    sol = conic.solve(asm.program(cost), tol=tol)
    if sol.status is conic.Status.DUAL_INFEASIBLE:
        return None, sol
    if sol.status is not conic.Status.OPTIMAL:
        if max(sol.pres, sol.dres, sol.gap) > _ACCEPT_TOL:
            raise SolverError(f"cone solver stopped with {sol.status.value} "
                              f"(pres={sol.pres:.2e}, dres={sol.dres:.2e}, gap={sol.gap:.2e})")
    # the program variable of interest is the conic dual vector
    return lay.decode(sol.y, problem), sol


def _check_links(problem: DesignProblem, links: LinkMatrix):
    if links.shape != (problem.K, problem.N):
        raise ValueError(f"link matrix shape {links.shape} does not match ({problem.K}, {problem.N})")
    if not links.is_valid():
        raise ValueError(f"users {list(links.empty_rows())} are served by no RRH")


def _finish(problem, links, w, sol, start, convex_solves=1):
    if w is None:
        return infeasible_report(links, convex_solves=convex_solves,
                                 wall_time=time.perf_counter() - start,
                                 info={"status": sol.status.value})
    rep = power_report(problem, w, links, convex_solves=convex_solves,
                       wall_time=time.perf_counter() - start)
    rep.info["status"] = sol.status.value
    return rep


def solve_p2(problem: DesignProblem, links: LinkMatrix, tol: float = 1e-8) -> SolveReport:
    """Minimum radiated power for a fixed link pattern.

    Minimizes ``sum_k ||w_k||^2`` under the QoS and per-RRH power
    constraints, with removed links eliminated. Returns an infeasible report
    when the solver certifies that the constraints cannot be met.
    """
    start = time.perf_counter()
    _check_links(problem, links)
    lay = _Layout(problem, links, n_epi=1)
    asm = _SocAssembler(lay.ny)
    allv = np.arange(lay.nv)
    asm.add(*_epigraph_block(lay, 0, allv, 1.0))
    _add_qos_constraints(asm, lay, problem)
    _add_power_constraints(asm, lay, problem)
    cost = np.zeros(lay.ny)
    cost[0] = 1.0
    w, sol = _solve(problem, links, lay, asm, cost, tol)
    return _finish(problem, links, w, sol, start)


def solve_weighted(problem: DesignProblem, links: LinkMatrix, weights: np.ndarray,
                   tol: float = 1e-8):
    """Minimize ``sum_kn weights[k, n] ||w_kn||^2`` under the QoS and power constraints.

    Returns ``(report, objective)``; ``objective`` is the weighted sum at the
    solution (``nan`` when infeasible).
    """
    start = time.perf_counter()
    _check_links(problem, links)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    lay = _Layout(problem, links, n_epi=1)
    asm = _SocAssembler(lay.ny)
    parts = []
    for k, n in zip(*np.nonzero(links.active)):
        idx = _link_indices(lay, problem, k, n)
        parts.append((idx, weights[k, n]))
    idx = np.concatenate([p[0] for p in parts])
    sw = np.concatenate([np.full(p[0].size, np.sqrt(p[1])) for p in parts])
    rows = 1 + 2 * idx.size
    F = np.zeros((rows, lay.ny))
    F[0, 0] = 1.0
    F[1 + np.arange(idx.size), lay.re(idx)] = sw
    F[1 + idx.size + np.arange(idx.size), lay.im(idx)] = sw
    asm.add(F, np.zeros(rows), conic.SecondOrder(rows))
    _add_qos_constraints(asm, lay, problem)
    _add_power_constraints(asm, lay, problem)
    cost = np.zeros(lay.ny)
    cost[0] = 1.0
    w, sol = _solve(problem, links, lay, asm, cost, tol)
    rep = _finish(problem, links, w, sol, start)
    obj = float(np.sum(weights * w.link_norms() ** 2)) if w is not None else np.nan
    return rep, obj


def solve_group_sparse(problem: DesignProblem, links: LinkMatrix, weights: np.ndarray,
                       tol: float = 1e-8):
    """Minimize ``sum_kn weights[k, n] ||w_kn||`` under the QoS and power constraints."""
    start = time.perf_counter()
    _check_links(problem, links)
    weights = np.asarray(weights, dtype=float)
    pairs = list(zip(*np.nonzero(links.active)))
    lay = _Layout(problem, links, n_epi=len(pairs))
    asm = _SocAssembler(lay.ny)
    cost = np.zeros(lay.ny)
    for j, (k, n) in enumerate(pairs):
        asm.add(*_epigraph_block(lay, j, _link_indices(lay, problem, k, n), 1.0))
        cost[j] = weights[k, n]
    _add_qos_constraints(asm, lay, problem)
    _add_power_constraints(asm, lay, problem)
    w, sol = _solve(problem, links, lay, asm, cost, tol)
    rep = _finish(problem, links, w, sol, start)
    obj = float(np.sum(weights * w.link_norms())) if w is not None else np.nan
    return rep, obj


# -- priority repair ----------------------------------------------------------

def repair_links(problem: DesignProblem, links: LinkMatrix, priority: np.ndarray,
                 fallback: SolveReport | None = None) -> SolveReport:
    """Make a thresholded pattern feasible by restoring high-priority links.

    Rows left without any link first get their top-priority RRH back. Then,
    while the fixed-pattern solve is infeasible, the highest-priority removed
    link is restored. ``fallback`` (normally full cooperation) is returned if
    every link has been restored without success.
    """
    c = links.c.copy()
    for k in np.flatnonzero(~(c == 0).any(axis=1)):
        c[k, int(np.argmax(priority[k]))] = 0
    solves = 0
    order = np.argsort(-priority, axis=None, kind="stable")
    while True:
        rep = solve_p2(problem, LinkMatrix(c))
        solves += 1
        if rep.feasible:
            rep.convex_solves = solves
            return rep
        removed = [i for i in order if c.flat[i] == 1]
        if not removed:
            break
        c.flat[removed[0]] = 0
    if fallback is None:
        rep.convex_solves = solves
        return rep
    out = SolveReport(**{**fallback.__dict__})
    out.convex_solves = solves
    return out
