"""Pure numpy implementation of the smooth-surrogate kernels.

Shapes: ``W`` and ``H`` are ``(K, N*L)`` complex (row k is user k's stacked
beamformer / channel estimate), ``dd`` is the ``(K, N*L)`` diagonal of the
error covariances. ``dk`` holds ``sigma_k^2 gamma_k``.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "python"
_MAX_HALVINGS = 60


def _parts(W, a, H, dd, gamma, dk, N, L, pt, clamp):
    K = W.shape[0]
    x = (np.abs(W) ** 2).reshape(K, N, L).sum(axis=2)
    G = H.conj() @ W.T
    E = dd @ (np.abs(W) ** 2).T
    P = np.abs(G) ** 2
    own = np.diag(P) - gamma * np.diag(E)
    other = (P + E).sum(axis=1) - np.diag(P) - np.diag(E)
    rho = own - gamma * other - dk
    e_link = np.exp(-x / a)
    e_rrh = np.exp(np.minimum((x.sum(axis=0) - pt) / a, clamp))
    e_qos = np.exp(np.minimum(rho * rho / a, clamp))
    return x, G, rho, e_link, e_rrh, e_qos


def objective(W, a, H, dd, gamma, dk, rate, N, L, pt, eps1, eps2, eta1, eta2, clamp):
    x, _, _, e_link, e_rrh, e_qos = _parts(W, a, H, dd, gamma, dk, N, L, pt, clamp)
    return float(eps1 * np.sum(rate[:, None] * (1.0 - e_link)) + eps2 * x.sum()
                 + eta1 * e_rrh.sum() + eta2 * np.sum(e_qos - 1.0))


def gradient(W, a, H, dd, gamma, dk, rate, N, L, pt, eps1, eps2, eta1, eta2, clamp):
    """Conjugate-coordinate gradient ``2 dQ/dw*``."""
    K = W.shape[0]
    _, G, rho, e_link, e_rrh, e_qos = _parts(W, a, H, dd, gamma, dk, N, L, pt, clamp)
    # per-link scalar multiplying w_kn
    link = (eps1 * rate[:, None] / a) * e_link + (eta1 / a) * e_rrh[None, :]
    g = np.repeat(link, L, axis=1) * W + eps2 * W
    beta = (4.0 * eta2 / a) * rho * e_qos
    coef = -np.outer(gamma, np.ones(K))
    np.fill_diagonal(coef, 1.0)
    M1 = (beta[:, None] * coef) * G
    g = 2.0 * g + M1.T @ H - W * ((beta * gamma) @ dd)[None, :]
    return g


def bb_step(g, g_prev, w, w_prev, fallback):
    dg = (g - g_prev).ravel()
    dw = (w - w_prev).ravel()
    den = float(np.vdot(dg, dg).real)
    if den < 1e-30:
        return fallback
    mu = float(np.vdot(dg, dw).real) / den
    if not np.isfinite(mu) or mu <= 0:
        return fallback
    return mu


def descend(W0, H, dd, gamma, dk, rate, N, L, pt, eps1, eps2, eta1, eta2, clamp,
            a0, mu1, t_max, tau, xi, q_t, delta_win, record_trace=False):
    """Gradient descent with BB steps and annealed smoothing.

    Returns ``(W, a, iterations, trace)``; ``trace`` is a ``(iters, 4)`` array
    of (Q, a, step, gradient norm) rows, empty unless requested.
    """
    args = (H, dd, gamma, dk, rate, N, L, pt, eps1, eps2, eta1, eta2, clamp)
    W = np.array(W0, dtype=complex)
    a = float(a0)
    Q = objective(W, a, *args)
    hist = [Q]
    trace = []
    mu = float(mu1)
    g_prev = W_prev = None
    it = 0
    for it in range(1, int(t_max) + 1):
        g = gradient(W, a, *args)
        if g_prev is not None:
            mu = bb_step(g, g_prev, W, W_prev, mu)
        W_prev, g_prev = W, g
        W = W_prev - mu * g
        Q_new = objective(W, a, *args)
        # reject steps that blow the surrogate up (e.g. into the clamped region)
        halvings = 0
        while not Q_new <= Q + max(1.0, abs(Q)) and halvings < _MAX_HALVINGS:
            mu *= 0.5
            halvings += 1
            W = W_prev - mu * g
            Q_new = objective(W, a, *args)
        if abs(Q_new - Q) < tau * a and a * xi > 0:
            a *= xi
            Q_new = objective(W, a, *args)
        if record_trace:
            trace.append((Q_new, a, mu, float(np.linalg.norm(g))))
        window = hist[-(delta_win + 1):]
        hist.append(Q_new)
        Q = Q_new
        if len(window) == delta_win + 1 and max(abs(Q_new - q) for q in window) < q_t:
            break
        if not np.isfinite(Q_new):
            break
    trace = np.asarray(trace, dtype=float).reshape(-1, 4)
    return W, a, it, trace
