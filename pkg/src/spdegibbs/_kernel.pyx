# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ensemble kernel.

One C-level loop per trajectory: counter-based noise (Philox-4x32-10 with
Box-Muller, exactly the layout of `rng.py`), the scheme update expressions
of `schemes.py` in the same floating-point order, and the exp(-|y|^2)
observable.  Trajectories are independent, so the OpenMP loop is
embarrassingly parallel and results are bit-identical for any thread count.

Scheme ids: 0 ee, 1 theta, 2 lm, 3 pie, 4 rk2, 5 pli.
Reaction ids: 0 zero, 1 cos(x) - x, 2 -x.
"""

from cython.parallel cimport prange
from libc.stdint cimport uint32_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.math cimport NAN, cos, exp, isfinite, log, sqrt

import numpy as np

cdef extern from "math.h" nogil:
    void sincos(double x, double *s, double *c)

cdef double U52 = 2.0 ** -52
cdef double U53 = 2.0 ** -53
cdef double TWO_PI = 6.283185307179586


cdef inline void _philox(uint32_t b, uint32_t n, uint32_t m_lo, uint32_t m_hi,
                         uint32_t k0, uint32_t k1, uint32_t* out) nogil:
    cdef uint32_t c0 = b, c1 = n, c2 = m_lo, c3 = m_hi
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        p0 = (<uint64_t>0xD2511F53u) * c0
        p1 = (<uint64_t>0xCD9E8D57u) * c2
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + <uint32_t>0x9E3779B9u
        k1 = k1 + <uint32_t>0xBB67AE85u
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline void _fill_increment(uint32_t key0, uint32_t key1, uint32_t m_lo,
                                 uint32_t m_hi, uint32_t n, int K,
                                 const double* scale, double* w) nogil:
    cdef uint32_t out[4]
    cdef uint64_t x01, x23
    cdef double u1, u2, r, sv, cv
    cdef int b, k
    cdef int nb = (K + 1) // 2
    for b in range(nb):
        _philox(<uint32_t>b, n, m_lo, m_hi, key0, key1, out)
        x01 = ((<uint64_t>out[0]) << 32) | out[1]
        x23 = ((<uint64_t>out[2]) << 32) | out[3]
        u1 = <double>(x01 >> 12) * U52 + U53
        u2 = <double>(x23 >> 12) * U52 + U53
        r = sqrt(-2.0 * log(u1))
        sincos(TWO_PI * u2, &sv, &cv)
        k = 2 * b
        w[k] = scale[k] * (r * cv)
        if k + 1 < K:
            w[k + 1] = scale[k + 1] * (r * sv)


cdef inline void _reaction(int K, const double* S, double h, int f_id,
                           const double* y, double* grid, double* fc) nogil:
    """fc = h * S @ f(S @ y); S is the symmetric eigenvector matrix."""
    cdef int i, j
    cdef double acc, x
    for j in range(K):
        acc = 0.0
        for i in range(K):
            acc = acc + S[j * K + i] * y[i]
        grid[j] = acc
    for j in range(K):
        x = grid[j]
        if f_id == 1:
            grid[j] = cos(x) - x
        else:
            grid[j] = -x
    for i in range(K):
        acc = 0.0
        for j in range(K):
            acc = acc + S[i * K + j] * grid[j]
        fc[i] = h * acc


cdef void _one_trajectory(int scheme_id, double c0, double c1, double c2,
                          int K, const double* scale, const double* q,
                          const double* mode_a, const double* S, double h,
                          int f_id, double post_coeff, int has_post,
                          uint32_t key0, uint32_t key1, uint64_t traj,
                          uint32_t n_steps, double* phi_out,
                          unsigned char* div_out, double* states_base,
                          Py_ssize_t m_index) nogil:
    cdef double* state_out = NULL
    if states_base != NULL:
        state_out = states_base + m_index * K
    cdef double* buf = <double*>malloc(6 * K * sizeof(double))
    if buf == NULL:
        phi_out[0] = NAN
        div_out[0] = 1
        return
    cdef double* y = buf
    cdef double* w = buf + K
    cdef double* fc = buf + 2 * K
    cdef double* grid = buf + 3 * K
    cdef double* g1 = buf + 4 * K
    cdef double* yh = buf + 5 * K
    cdef uint32_t m_lo = <uint32_t>traj
    cdef uint32_t m_hi = <uint32_t>(traj >> 32)
    cdef uint32_t n
    cdef int k, diverged = 0
    cdef double g, mid, ss
    for k in range(K):
        y[k] = 0.0
    for n in range(n_steps):
        _fill_increment(key0, key1, m_lo, m_hi, n, K, scale, w)
        if scheme_id == 0:  # ee: y = (y + dt*g) + w, g = q*fc - y
            if f_id == 0:
                for k in range(K):
                    g = -y[k]
                    y[k] = (y[k] + c0 * g) + w[k]
            else:
                _reaction(K, S, h, f_id, y, grid, fc)
                for k in range(K):
                    g = q[k] * fc[k] - y[k]
                    y[k] = (y[k] + c0 * g) + w[k]
        elif scheme_id == 1:  # theta: y = ((c0*y) + c1*q*fc) + c2*w
            if f_id == 0:
                for k in range(K):
                    y[k] = (c0 * y[k]) + c2 * w[k]
            else:
                _reaction(K, S, h, f_id, y, grid, fc)
                for k in range(K):
                    y[k] = ((c0 * y[k]) + c1 * (q[k] * fc[k])) + c2 * w[k]
        elif scheme_id == 2:  # lm: midpoint-shifted Euler
            if f_id == 0:
                for k in range(K):
                    mid = y[k] + 0.5 * w[k]
                    g = -mid
                    y[k] = (y[k] + c0 * g) + w[k]
            else:
                for k in range(K):
                    yh[k] = y[k] + 0.5 * w[k]
                _reaction(K, S, h, f_id, yh, grid, fc)
                for k in range(K):
                    g = q[k] * fc[k] - yh[k]
                    y[k] = (y[k] + c0 * g) + w[k]
        elif scheme_id == 3:  # pie: y = ((c0*y) + c1*q*fc(mid)) + c0*w
            if f_id == 0:
                for k in range(K):
                    y[k] = (c0 * y[k]) + c0 * w[k]
            else:
                for k in range(K):
                    yh[k] = y[k] + c2 * w[k]
                _reaction(K, S, h, f_id, yh, grid, fc)
                for k in range(K):
                    y[k] = ((c0 * y[k]) + c1 * (q[k] * fc[k])) + c0 * w[k]
        elif scheme_id == 4:  # rk2: Heun, shared increment
            if f_id == 0:
                for k in range(K):
                    g1[k] = -y[k]
                    yh[k] = (y[k] + c0 * g1[k]) + w[k]
                for k in range(K):
                    g = -yh[k]
                    y[k] = (y[k] + c1 * (g1[k] + g)) + w[k]
            else:
                _reaction(K, S, h, f_id, y, grid, fc)
                for k in range(K):
                    g1[k] = q[k] * fc[k] - y[k]
                    yh[k] = (y[k] + c0 * g1[k]) + w[k]
                _reaction(K, S, h, f_id, yh, grid, fc)
                for k in range(K):
                    g = q[k] * fc[k] - yh[k]
                    y[k] = (y[k] + c1 * (g1[k] + g)) + w[k]
        else:  # pli: y = a*((y + dp*fc) + w); q slot holds dt*p
            if f_id == 0:
                for k in range(K):
                    y[k] = mode_a[k] * (y[k] + w[k])
            else:
                _reaction(K, S, h, f_id, y, grid, fc)
                for k in range(K):
                    y[k] = mode_a[k] * ((y[k] + q[k] * fc[k]) + w[k])
        for k in range(K):
            if not isfinite(y[k]):
                diverged = 1
                break
        if diverged:
            break
    if diverged:
        phi_out[0] = NAN
        div_out[0] = 1
        if state_out != NULL:
            for k in range(K):
                state_out[k] = y[k]
        free(buf)
        return
    if has_post and n_steps > 0:
        _fill_increment(key0, key1, m_lo, m_hi, n_steps, K, scale, w)
        for k in range(K):
            y[k] = y[k] + post_coeff * w[k]
    ss = 0.0
    for k in range(K):
        ss = ss + y[k] * y[k]
    phi_out[0] = exp(-ss)
    div_out[0] = 0
    if state_out != NULL:
        for k in range(K):
            state_out[k] = y[k]
    free(buf)


def ensemble_phi(int scheme_id, double c0, double c1, double c2,
                 double[::1] noise_scale, double[::1] q_or_dp, double[::1] mode_a,
                 double[:, ::1] S, double h, int f_id,
                 double post_coeff, int has_post,
                 unsigned long long n_samples, unsigned long long master_seed,
                 unsigned long long traj_offset, unsigned int n_steps,
                 int n_threads=1, int return_states=0):
    """Final-state observable for a block of trajectories.

    Returns (phi, diverged) or (phi, diverged, states).  phi is NaN where a
    trajectory left the finite range; the caller excludes and counts those.
    """
    cdef Py_ssize_t m_count = <Py_ssize_t>n_samples
    cdef int K = noise_scale.shape[0]
    phi = np.empty(m_count)
    div = np.zeros(m_count, dtype=np.uint8)
    cdef double[::1] phi_v = phi
    cdef unsigned char[::1] div_v = div
    states = None
    cdef double[:, ::1] states_v = None
    cdef double* states_p = NULL
    if return_states:
        states = np.empty((m_count, K))
        states_v = states
        if m_count > 0:
            states_p = &states_v[0, 0]
    cdef uint32_t key0 = <uint32_t>(master_seed & <uint64_t>0xFFFFFFFFu)
    cdef uint32_t key1 = <uint32_t>(master_seed >> 32)
    cdef uint64_t base = traj_offset
    cdef const double* scale_p = &noise_scale[0]
    cdef const double* q_p = &q_or_dp[0]
    cdef const double* a_p = &mode_a[0]
    cdef const double* s_p = &S[0, 0]
    cdef Py_ssize_t m
    cdef int nt = n_threads if n_threads > 0 else 1
    for m in prange(m_count, nogil=True, num_threads=nt, schedule='static'):
        _one_trajectory(scheme_id, c0, c1, c2, K, scale_p, q_p, a_p, s_p, h,
                        f_id, post_coeff, has_post, key0, key1,
                        base + <uint64_t>m, n_steps, &phi_v[m], &div_v[m],
                        states_p, m)
    if return_states:
        return phi, div.astype(bool), states
    return phi, div.astype(bool)


def philox_words(unsigned long long c0, unsigned long long c1,
                 unsigned long long c2, unsigned long long c3,
                 unsigned long long k0, unsigned long long k1):
    """Raw Philox-4x32-10 block (for cross-checking against the numpy path)."""
    cdef uint32_t out[4]
    _philox(<uint32_t>c0, <uint32_t>c1, <uint32_t>c2, <uint32_t>c3,
            <uint32_t>k0, <uint32_t>k1, out)
    return int(out[0]), int(out[1]), int(out[2]), int(out[3])


def increment_normals(unsigned long long master_seed, unsigned long long traj,
                      unsigned int step, int count):
    """The `count` standard normals at (seed, traj, step), compiled path."""
    z = np.empty(count)
    ones = np.ones(count)
    cdef double[::1] z_v = z
    cdef double[::1] ones_v = ones
    cdef uint32_t key0 = <uint32_t>(master_seed & <uint64_t>0xFFFFFFFFu)
    cdef uint32_t key1 = <uint32_t>(master_seed >> 32)
    _fill_increment(key0, key1, <uint32_t>traj, <uint32_t>(traj >> 32),
                    step, count, &ones_v[0], &z_v[0])
    return z
