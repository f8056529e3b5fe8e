# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled smooth-surrogate kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, fmax, sqrt, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

IMPLEMENTATION = "cython"
DEF MAX_HALVINGS = 60

ctypedef double complex cplx


cdef struct Ctx:
    const cplx* H
    const double* dd
    const double* gamma
    const double* dk
    const double* rate
    int K, N, L, M
    double pt, eps1, eps2, eta1, eta2, clamp
    cplx* G
    double* E
    double* x
    double* rho
    double* eq
    double* er
    double* bg


cdef inline double _abs2(cplx z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double _cexp(double v, double clamp) nogil:
    return exp(v if v < clamp else clamp)


cdef double _evaluate(Ctx* c, const cplx* W, double a, cplx* g) nogil:
    """Return Q at W; when g is not NULL also write the gradient into g."""
    cdef int K = c.K, N = c.N, L = c.L, M = c.M
    cdef int k, l, m, n, i
    cdef cplx s, hk
    cdef double e, q, other, beta, lk, coef
    cdef double Q = 0.0
    for k in range(K):
        for l in range(K):
            s = 0.0
            e = 0.0
            for m in range(M):
                hk = c.H[k * M + m]
                s = s + (hk.real - 1j * hk.imag) * W[l * M + m]
                e = e + c.dd[k * M + m] * _abs2(W[l * M + m])
            c.G[k * K + l] = s
            c.E[k * K + l] = e
    for n in range(N):
        c.er[n] = -c.pt
    for k in range(K):
        for n in range(N):
            q = 0.0
            for i in range(L):
                q = q + _abs2(W[k * M + n * L + i])
            c.x[k * N + n] = q
            c.er[n] += q
            Q += c.eps1 * c.rate[k] * (1.0 - exp(-q / a)) + c.eps2 * q
    for n in range(N):
        c.er[n] = _cexp(c.er[n] / a, c.clamp)
        Q += c.eta1 * c.er[n]
    for k in range(K):
        other = 0.0
        for l in range(K):
            if l != k:
                other += _abs2(c.G[k * K + l]) + c.E[k * K + l]
        c.rho[k] = _abs2(c.G[k * K + k]) - c.gamma[k] * c.E[k * K + k] - c.gamma[k] * other - c.dk[k]
        c.eq[k] = _cexp(c.rho[k] * c.rho[k] / a, c.clamp)
        Q += c.eta2 * (c.eq[k] - 1.0)
    if g == NULL:
        return Q
    # reuse rho as beta_k = (4 eta2 / a) rho_k exp(.)
    for k in range(K):
        c.rho[k] = (4.0 * c.eta2 / a) * c.rho[k] * c.eq[k]
    for m in range(M):
        e = 0.0
        for k in range(K):
            e += c.rho[k] * c.gamma[k] * c.dd[k * M + m]
        c.bg[m] = e
    for l in range(K):
        for n in range(N):
            lk = 2.0 * (c.eps1 * c.rate[l] / a * exp(-c.x[l * N + n] / a)
                        + c.eta1 / a * c.er[n] + c.eps2)
            for i in range(L):
                m = n * L + i
                s = (lk - c.bg[m]) * W[l * M + m]
                for k in range(K):
                    beta = c.rho[k]
                    if beta == 0.0:
                        continue
                    coef = 1.0 if k == l else -c.gamma[k]
                    s = s + beta * coef * c.G[k * K + l] * c.H[k * M + m]
                g[l * M + m] = s
    return Q


cdef class _Context:
    cdef Ctx c
    cdef object keep

    def __cinit__(self, H, dd, gamma, dk, rate, int N, int L, double pt, double eps1,
                  double eps2, double eta1, double eta2, double clamp):
        cdef cnp.ndarray[cplx, ndim=2, mode="c"] Hc = np.ascontiguousarray(H, dtype=np.complex128)
        cdef cnp.ndarray[double, ndim=2, mode="c"] ddc = np.ascontiguousarray(dd, dtype=np.float64)
        cdef cnp.ndarray[double, ndim=1, mode="c"] gc = np.ascontiguousarray(gamma, dtype=np.float64)
        cdef cnp.ndarray[double, ndim=1, mode="c"] dkc = np.ascontiguousarray(dk, dtype=np.float64)
        cdef cnp.ndarray[double, ndim=1, mode="c"] rc = np.ascontiguousarray(rate, dtype=np.float64)
        K = Hc.shape[0]
        M = Hc.shape[1]
        if M != N * L:
            raise ValueError("channel rows must have length N*L")
        self.keep = (Hc, ddc, gc, dkc, rc)
        self.c.H = <const cplx*> Hc.data
        self.c.dd = <const double*> ddc.data
        self.c.gamma = <const double*> gc.data
        self.c.dk = <const double*> dkc.data
        self.c.rate = <const double*> rc.data
        self.c.K, self.c.N, self.c.L, self.c.M = K, N, L, M
        self.c.pt, self.c.eps1, self.c.eps2 = pt, eps1, eps2
        self.c.eta1, self.c.eta2, self.c.clamp = eta1, eta2, clamp
        self.c.G = <cplx*> malloc(K * K * sizeof(cplx))
        self.c.E = <double*> malloc(K * K * sizeof(double))
        self.c.x = <double*> malloc(K * N * sizeof(double))
        self.c.rho = <double*> malloc(K * sizeof(double))
        self.c.eq = <double*> malloc(K * sizeof(double))
        self.c.er = <double*> malloc(N * sizeof(double))
        self.c.bg = <double*> malloc(M * sizeof(double))
        if (self.c.G == NULL or self.c.E == NULL or self.c.x == NULL or self.c.rho == NULL
                or self.c.eq == NULL or self.c.er == NULL or self.c.bg == NULL):
            raise MemoryError()

    def __dealloc__(self):
        free(self.c.G)
        free(self.c.E)
        free(self.c.x)
        free(self.c.rho)
        free(self.c.eq)
        free(self.c.er)
        free(self.c.bg)


def objective(W, double a, H, dd, gamma, dk, rate, int N, int L, double pt, double eps1,
              double eps2, double eta1, double eta2, double clamp):
    cdef _Context ctx = _Context(H, dd, gamma, dk, rate, N, L, pt, eps1, eps2, eta1, eta2, clamp)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Wc = np.ascontiguousarray(W, dtype=np.complex128)
    return _evaluate(&ctx.c, <const cplx*> Wc.data, a, NULL)


def gradient(W, double a, H, dd, gamma, dk, rate, int N, int L, double pt, double eps1,
             double eps2, double eta1, double eta2, double clamp):
    cdef _Context ctx = _Context(H, dd, gamma, dk, rate, N, L, pt, eps1, eps2, eta1, eta2, clamp)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Wc = np.ascontiguousarray(W, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] g = np.empty_like(Wc)
    _evaluate(&ctx.c, <const cplx*> Wc.data, a, <cplx*> g.data)
    return g


def descend(W0, H, dd, gamma, dk, rate, int N, int L, double pt, double eps1, double eps2,
            double eta1, double eta2, double clamp, double a0, double mu1, long t_max,
            double tau, double xi, double q_t, int delta_win, bint record_trace=False):
    """Gradient descent with BB steps and annealed smoothing (see ``_kernels_py.descend``)."""
    cdef _Context ctx = _Context(H, dd, gamma, dk, rate, N, L, pt, eps1, eps2, eta1, eta2, clamp)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Wa = np.array(W0, dtype=np.complex128, order="C")
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Wb = np.empty_like(Wa)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] ga = np.empty_like(Wa)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] gb = np.empty_like(Wa)
    cdef cnp.ndarray[double, ndim=1, mode="c"] hist = np.empty(delta_win + 1)
    cdef cnp.ndarray[double, ndim=2, mode="c"] trace = np.empty((t_max if record_trace else 0, 4))
    cdef cplx* w = <cplx*> Wa.data
    cdef cplx* w_prev = <cplx*> Wb.data
    cdef cplx* g = <cplx*> ga.data
    cdef cplx* g_prev = <cplx*> gb.data
    cdef cplx* tmp
    cdef cplx dgi, dwi
    cdef int size = Wa.shape[0] * Wa.shape[1]
    cdef int i, j, filled = 0, head = 0, halvings
    cdef long it = 0
    cdef double a = a0, mu = mu1, Q, Q_new, num, den, gn, cand, worst
    cdef bint have_prev = False, full

    Q = _evaluate(&ctx.c, w, a, NULL)
    hist[0] = Q
    filled = 1
    head = 1 % (delta_win + 1)
    with nogil:
        for it in range(1, t_max + 1):
            _evaluate(&ctx.c, w, a, g)
            if have_prev:
                num = 0.0
                den = 0.0
                for i in range(size):
                    dgi = g[i] - g_prev[i]
                    dwi = w[i] - w_prev[i]
                    num += dgi.real * dwi.real + dgi.imag * dwi.imag
                    den += _abs2(dgi)
                if den >= 1e-30:
                    cand = num / den
                    if isfinite(cand) and cand > 0:
                        mu = cand
            gn = 0.0
            for i in range(size):
                gn += _abs2(g[i])
                w_prev[i] = w[i]
                w[i] = w[i] - mu * g[i]
            Q_new = _evaluate(&ctx.c, w, a, NULL)
            # reject steps that blow the surrogate up (e.g. into the clamped region)
            halvings = 0
            while not (Q_new <= Q + fmax(1.0, fabs(Q))) and halvings < MAX_HALVINGS:
                mu = 0.5 * mu
                halvings += 1
                for i in range(size):
                    w[i] = w_prev[i] - mu * g[i]
                Q_new = _evaluate(&ctx.c, w, a, NULL)
            # after this swap g_prev holds the gradient at w_prev
            tmp = g_prev
            g_prev = g
            g = tmp
            have_prev = True
            if fabs(Q_new - Q) < tau * a and a * xi > 0:
                a = a * xi
                Q_new = _evaluate(&ctx.c, w, a, NULL)
            if record_trace:
                trace[it - 1, 0] = Q_new
                trace[it - 1, 1] = a
                trace[it - 1, 2] = mu
                trace[it - 1, 3] = sqrt(gn)
            worst = 0.0
            full = filled == delta_win + 1
            if full:
                for j in range(delta_win + 1):
                    cand = fabs(Q_new - hist[j])
                    if cand > worst:
                        worst = cand
            hist[head] = Q_new
            head = (head + 1) % (delta_win + 1)
            if filled < delta_win + 1:
                filled += 1
            Q = Q_new
            if full and worst < q_t:
                break
            if not isfinite(Q_new):
                break
    return Wa, a, it, trace[:it if record_trace else 0].copy()
