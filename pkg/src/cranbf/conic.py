"""Dense second-order cone interior-point solver.

Solves the standard-form pair

    primal:  minimize c'x  subject to  A x = b,  x in K
    dual:    maximize b'y  subject to  A'y + s = c,  s in K

where K is a product of nonnegative orthants and Lorentz (second-order)
cones. The method is a homogeneous self-dual path-following algorithm with
Nesterov-Todd scaling and Mehrotra predictor-corrector steps, so primal or
dual infeasibility is detected through certificates instead of a phase-one
problem.

Second-order cone blocks are processed in a vectorised way: all of them are
stored back to back and per-cone reductions use ``np.add.reduceat``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

_REFINE_STEPS = 1

__all__ = [
    "NonNeg",
    "SecondOrder",
    "ConeProgram",
    "ConeSolution",
    "Status",
    "solve",
    "embed_vector",
    "unembed_vector",
    "embed_functional",
    "embed_linear_map",
]


@dataclass(frozen=True)
class NonNeg:
    dim: int


@dataclass(frozen=True)
class SecondOrder:
    """Lorentz cone ``{(t, u) : t >= ||u||}``; the first coordinate is the head."""

    dim: int


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class ConeProgram:
    """``minimize c'x  s.t.  A x = b,  x in K`` with ``K`` given by ``cones``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: Sequence[NonNeg | SecondOrder]

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        n = sum(cone.dim for cone in self.cones)
        if any(cone.dim < 1 for cone in self.cones):
            raise ValueError("every cone block needs dim >= 1")
        if self.c.shape != (n,):
            raise ValueError(f"cost has length {self.c.size}, cones cover {n}")
        if self.A.shape != (self.b.size, n):
            raise ValueError(f"A has shape {self.A.shape}, expected ({self.b.size}, {n})")


@dataclass
class ConeSolution:
    status: Status
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    primal_obj: float
    dual_obj: float
    iterations: int
    # relative residuals of the returned point (scaled by 1 + norm)
    pres: float = np.inf
    dres: float = np.inf
    gap: float = np.inf
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Cones:
    """Index bookkeeping and Jordan-algebra helpers for a permuted layout.

    Internally every vector is reordered as ``[orthant part | soc part]``.
    """

    def __init__(self, cones):
        offsets = np.cumsum([0] + [c.dim for c in cones])
        lp, soc, qdims = [], [], []
        for cone, start in zip(cones, offsets[:-1]):
            idx = np.arange(start, start + cone.dim)
            if isinstance(cone, NonNeg):
                lp.append(idx)
            else:
                soc.append(idx)
                qdims.append(cone.dim)
        self.n = int(offsets[-1])
        self.nl = int(sum(len(i) for i in lp))
        self.perm = np.concatenate(lp + soc) if self.n else np.zeros(0, int)
        self.qd = np.asarray(qdims, dtype=int)
        self.nq = int(self.qd.sum()) if self.qd.size else 0
        self.qs = np.concatenate([[0], np.cumsum(self.qd)[:-1]]).astype(int) if self.qd.size else np.zeros(0, int)
        self.jsign = np.ones(self.nq)
        self.jsign[np.setdiff1d(np.arange(self.nq), self.qs)] = -1.0
        self.head = np.zeros(self.nq, dtype=bool)
        self.head[self.qs] = True
        # cone id of every soc coordinate, for broadcasting per-cone values
        self.seg = np.repeat(np.arange(self.qd.size), self.qd)
        self.degree = self.nl + self.qd.size

    # -- per-cone reductions on the soc part --------------------------------
    def qsum(self, u):
        return np.add.reduceat(u, self.qs) if self.nq else np.zeros(0)

    def rep(self, v):
        return v[self.seg]

    def identity(self):
        e = np.ones(self.n)
        e[self.nl:] = self.head.astype(float)
        return e

    def inner(self, u, v):
        return float(u @ v)

    def prod(self, u, v):
        """Jordan product ``u o v``."""
        out = np.empty_like(u)
        nl = self.nl
        out[:nl] = u[:nl] * v[:nl]
        uq, vq = u[nl:], v[nl:]
        if self.nq:
            oq = self.rep(uq[self.qs]) * vq + self.rep(vq[self.qs]) * uq
            oq[self.qs] = self.qsum(uq * vq)
            out[nl:] = oq
        return out

    def div(self, lam, v):
        """Solve ``lam o u = v`` for u."""
        out = np.empty_like(v)
        nl = self.nl
        out[:nl] = v[:nl] / lam[:nl]
        if self.nq:
            lq, vq = lam[nl:], v[nl:]
            l0, v0 = lq[self.qs], vq[self.qs]
            det = self.qsum(lq * lq * self.jsign)
            tail_dot = self.qsum(lq * vq) - l0 * v0
            u0 = (l0 * v0 - tail_dot) / det
            uq = (vq - self.rep(u0) * lq) / self.rep(l0)
            uq[self.qs] = u0
            out[nl:] = uq
        return out

    def tail_norm(self, u):
        return np.sqrt(self.qsum(np.where(self.head, 0.0, u * u)))

    def jnorm2(self, u):
        """``u'Ju`` per second-order cone, factored to limit cancellation."""
        h = u[self.qs]
        t = self.tail_norm(u)
        return (h - t) * (h + t)

    def max_step(self, u, du):
        """Largest alpha with ``u + alpha du`` in the cone (may be inf)."""
        alpha = np.inf
        nl = self.nl
        if nl:
            neg = du[:nl] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-u[:nl][neg] / du[:nl][neg])))
        if self.nq:
            uq, dq = u[nl:], du[nl:]
            a = self.jnorm2(dq)
            b = 2.0 * self.qsum(uq * dq * self.jsign)
            c = np.maximum(self.jnorm2(uq), 0.0)
            disc = b * b - 4.0 * a * c
            with np.errstate(divide="ignore", invalid="ignore"):
                sq = np.sqrt(np.maximum(disc, 0.0))
                qv = -0.5 * (b + np.where(b >= 0, sq, -sq))
                r1 = np.where(qv != 0, c / qv, np.inf)
                r2 = np.where(a != 0, qv / a, np.inf)
            roots = np.stack([r1, r2])
            roots = np.where((roots > 0) & np.isfinite(roots), roots, np.inf)
            cand = roots.min(axis=0)
            # no real crossing: the head decides whether we stay in the cone
            no_cross = (disc < 0) | ((a >= 0) & (b >= 0))
            cand = np.where(no_cross, np.inf, cand)
            # a purely linear boundary (a == 0)
            lin = (a == 0) & (b < 0)
            cand = np.where(lin, -c / np.where(b == 0, -1.0, b), cand)
            if cand.size:
                alpha = min(alpha, float(cand.min()))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W x = W^{-1} s = lam``."""

    def __init__(self, cones: _Cones, x, s):
        self.cones = cones
        nl = cones.nl
        self.dl = np.sqrt(x[:nl] / s[:nl])  # W^{-1} on the orthant part
        if cones.nq:
            xq, sq = x[nl:], s[nl:]
            xn = np.sqrt(np.maximum(cones.jnorm2(xq), 1e-300))
            sn = np.sqrt(np.maximum(cones.jnorm2(sq), 1e-300))
            self.eta = np.sqrt(sn / xn)
            xb = xq / cones.rep(xn)
            sb = sq / cones.rep(sn)
            gamma = np.sqrt(np.maximum((1.0 + cones.qsum(xb * sb)) / 2.0, 1e-300))
            v = (sb + cones.jsign * xb) / cones.rep(2.0 * gamma)
            v0 = v[cones.qs]
            e = cones.head.astype(float)
            self.u = (v + e) / cones.rep(np.sqrt(2.0 * (v0 + 1.0)))
            self.ju = cones.jsign * self.u
            self.eta_rep = cones.rep(self.eta)

    def apply(self, z):
        """``W z``"""
        c = self.cones
        nl = c.nl
        out = np.empty_like(z)
        out[:nl] = z[:nl] / self.dl
        if c.nq:
            zq = z[nl:]
            dot = c.qsum(self.u * zq)
            out[nl:] = self.eta_rep * (2.0 * self.u * c.rep(dot) - c.jsign * zq)
        return out

    def apply_inv(self, z):
        """``W^{-1} z``"""
        c = self.cones
        nl = c.nl
        out = np.empty_like(z)
        out[:nl] = z[:nl] * self.dl
        if c.nq:
            zq = z[nl:]
            ju = self.ju
            dot = c.qsum(ju * zq)
            out[nl:] = (2.0 * ju * c.rep(dot) - c.jsign * zq) / self.eta_rep
        return out

    def rows_inv(self, R):
        """``R W^{-1}`` for a matrix R whose columns follow the cone layout."""
        c = self.cones
        nl = c.nl
        out = np.empty_like(R)
        out[:, :nl] = R[:, :nl] * self.dl
        if c.nq:
            Rq = R[:, nl:]
            ju = self.ju
            dots = np.add.reduceat(Rq * ju, c.qs, axis=1)
            out[:, nl:] = (2.0 * dots[:, c.seg] * ju - Rq * c.jsign) / self.eta_rep
        return out


def solve(program: ConeProgram, tol: float = 1e-8, max_iter: int = 200,
          step_fraction: float = 0.99) -> ConeSolution:
    """Solve a cone program with the homogeneous self-dual embedding.

    Returns an ``Optimal`` solution when primal/dual residuals and the duality
    gap are within ``tol`` (relative to ``1 + norm``), or an infeasibility
    certificate:

    * ``PrimalInfeasible``: ``y`` with ``b'y = 1`` and ``-A'y`` in K.
    * ``DualInfeasible``: ``x`` in K with ``c'x = -1`` and ``A x = 0``.
    """
    cones = _Cones(program.cones)
    perm = cones.perm
    A = program.A[:, perm]
    b = program.b
    c = program.c[perm]
    m, n = A.shape
    nb, nc = np.linalg.norm(b), np.linalg.norm(c)

    e = cones.identity()
    x, s = e.copy(), e.copy()
    y = np.zeros(m)
    tau = kappa = 1.0
    nu = cones.degree + 1

    def finish(status, x, y, s, tau, it, info=None, pres=np.inf, dres=np.inf, gap=np.inf):
        xo = np.empty(n)
        so = np.empty(n)
        xo[perm] = x
        so[perm] = s
        return ConeSolution(status, xo, y, so, float(c @ x) / tau if tau else np.nan,
                            float(b @ y) / tau if tau else np.nan, it,
                            pres, dres, gap, info or {})

    best = None
    for it in range(max_iter + 1):
        rp = b * tau - A @ x
        rd = c * tau - A.T @ y - s
        cx, by = float(c @ x), float(b @ y)
        rg = kappa + cx - by
        mu = (x @ s + tau * kappa) / nu

        pres = np.linalg.norm(rp) / tau / (1.0 + nb)
        dres = np.linalg.norm(rd) / tau / (1.0 + nc)
        pobj, dobj = cx / tau, by / tau
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        if pres <= tol and dres <= tol and gap <= tol:
            return finish(Status.OPTIMAL, x / tau, y / tau, s / tau, 1.0, it,
                          pres=pres, dres=dres, gap=gap)
        merit = max(pres, dres, gap)
        if best is None or merit < best[0]:
            best = (merit, x / tau, y / tau, s / tau, pres, dres, gap)
        if by > 0:
            r = np.linalg.norm(A.T @ y + s) / by
            if r <= tol * max(1.0, nc / max(1.0, nb)):
                return finish(Status.PRIMAL_INFEASIBLE, x, y / by, s / by, 1.0, it,
                              info={"residual": r})
        if cx < 0:
            r = np.linalg.norm(A @ x) / -cx
            if r <= tol * max(1.0, nb / max(1.0, nc)):
                return finish(Status.DUAL_INFEASIBLE, x / -cx, y, s, 1.0, it,
                              info={"residual": r})
        if it == max_iter:
            break

        W = _Scaling(cones, x, s)
        lam = W.apply(x)
        G = W.rows_inv(A)
        M = G @ G.T
        try:
            factor = scipy.linalg.cho_factor(M, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            reg = 1e-12 * max(1.0, np.trace(M) / max(m, 1))
            try:
                factor = scipy.linalg.cho_factor(M + reg * np.eye(m), check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                break
        # Directions are computed in the scaled space (dx~ = W dx). The tau
        # pivot is assembled from nonnegative pieces to avoid cancellation.
        ct = W.apply_inv(c)
        g = G @ ct
        z = scipy.linalg.cho_solve(factor, g, check_finite=False)
        mb = scipy.linalg.cho_solve(factor, b, check_finite=False)
        rc = ct - G.T @ z
        q = z + mb
        denom_tau = kappa / tau + float(b @ mb) + float(rc @ rc)

        def kkt(r1, r2, r3, r4, r5):
            # A dx - b dtau = r1;  A'dy + ds - c dtau = r2;  -c'dx + b'dy - dkappa = r3
            # W dx + W^{-1} ds = r4;  kappa dtau + tau dkappa = r5
            f = r4 - W.apply_inv(r2)
            p = scipy.linalg.cho_solve(factor, r1 - G @ f, check_finite=False)
            dtau = (r3 + float(z @ r1) + float(rc @ f) - float(b @ p) + r5 / tau) / denom_tau
            dy = p + q * dtau
            dxt = G.T @ dy - ct * dtau + f
            dx = W.apply_inv(dxt)
            ds = W.apply(r4 - dxt)
            dkappa = (r5 - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        def direction(eta_, rxs, rtk):
            rhs = (eta_ * rp, eta_ * rd, eta_ * rg, cones.div(lam, rxs), rtk)
            d = kkt(*rhs)
            for _ in range(_REFINE_STEPS):
                dx, dy, ds, dtau, dkappa = d
                res = (rhs[0] - (A @ dx - b * dtau),
                       rhs[1] - (A.T @ dy + ds - c * dtau),
                       rhs[2] - (-float(c @ dx) + float(b @ dy) - dkappa),
                       rhs[3] - (W.apply(dx) + W.apply_inv(ds)),
                       rhs[4] - (kappa * dtau + tau * dkappa))
                corr = kkt(*res)
                d = tuple(u + v for u, v in zip(d, corr))
            return d

        def step_length(dx, ds, dtau, dkappa):
            # measured in the scaled space, where lam is well centred
            alpha = min(cones.max_step(lam, W.apply(dx)), cones.max_step(lam, W.apply_inv(ds)))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        # predictor
        lam2 = cones.prod(lam, lam)
        dxa, dya, dsa, dta, dka = direction(1.0, -lam2, -tau * kappa)
        alpha_a = min(1.0, step_length(dxa, dsa, dta, dka))
        sigma = (1.0 - alpha_a) ** 3
        # corrector
        corr = cones.prod(W.apply_inv(dsa), W.apply(dxa))
        rxs = -lam2 - corr + sigma * mu * e
        rtk = -tau * kappa - dta * dka + sigma * mu
        dx, dy, ds, dt, dk = direction(1.0 - sigma, rxs, rtk)
        alpha = min(1.0, step_fraction * step_length(dx, ds, dt, dk))
        if not np.isfinite(alpha) or alpha < 1e-12:
            break
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        tau += alpha * dt
        kappa += alpha * dk
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s))) or tau <= 0 or kappa <= 0:
            break

    status = Status.MAX_ITERATIONS if it == max_iter else Status.NUMERICAL_FAILURE
    _, xb, yb, sb, pres, dres, gap = best
    return finish(status, xb, yb, sb, 1.0, it, pres=pres, dres=dres, gap=gap)


# -- complex embedding ------------------------------------------------------

def embed_vector(w) -> np.ndarray:
    """Stack a complex vector as ``[Re w; Im w]``; norms are preserved."""
    w = np.asarray(w, dtype=complex)
    return np.concatenate([w.real, w.imag])


def unembed_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def embed_functional(a) -> np.ndarray:
    """Row ``r`` with ``r @ embed_vector(w) == Re(a^H w)``."""
    a = np.asarray(a, dtype=complex)
    return np.concatenate([a.real, a.imag])


def embed_linear_map(T) -> np.ndarray:
    """Real matrix ``R`` with ``R @ embed_vector(w) == embed_vector(T @ w)``."""
    T = np.asarray(T, dtype=complex)
    return np.block([[T.real, -T.imag], [T.imag, T.real]])
