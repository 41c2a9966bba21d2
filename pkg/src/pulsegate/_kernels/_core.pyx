# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping core.

Mirrors numpy_backend step for step.  States are (E, N) C-contiguous
arrays, which is exactly the (N, E) column-major layout LAPACK wants, so
the two implicit solves per step are one dgetrf plus one dgetrs over all
E columns.  A shift matrix (I - c*S) built row-major is read by LAPACK as
its transpose (I + c*S) since S is antisymmetric; solving with trans='T'
therefore applies the intended inverse.  Both sweeps run without the GIL.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, floor, sin
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dgetrf, dgetrs

cnp.import_array()


cdef int _splines(double t, double dtau, int nb, int* bidx,
                  double* bval) noexcept nogil:
    """Active quadratic B-splines at t: indices and values, <= 4 slots."""
    cdef double g = t / dtau
    cdef int base = <int>floor(g)
    cdef int b, cnt = 0
    cdef double s
    for b in range(base - 1, base + 3):
        if b < 0 or b >= nb:
            continue
        s = g - b + 0.5
        if s < 0.0:
            s = -s
        if s >= 1.5:
            continue
        bidx[cnt] = b
        if s <= 0.5:
            bval[cnt] = 0.75 - s * s
        else:
            bval[cnt] = 0.5 * (1.5 - s) * (1.5 - s)
        cnt += 1
    return cnt


cdef void _envelopes(double t, int nq, int nf, int nb, double dtau,
                     double* omega, double* alpha, double* re_d,
                     double* im_d) noexcept nogil:
    cdef int bidx[4]
    cdef double bval[4]
    cdef int cnt = _splines(t, dtau, nb, bidx, bval)
    cdef int k, n, j, base_re, base_im
    cdef double p, q, ang, c, s
    for k in range(nq):
        re_d[k] = 0.0
        im_d[k] = 0.0
        for n in range(nf):
            base_re = ((k * nf + n) * 2) * nb
            base_im = base_re + nb
            p = 0.0
            q = 0.0
            for j in range(cnt):
                p += bval[j] * alpha[base_re + bidx[j]]
                q += bval[j] * alpha[base_im + bidx[j]]
            ang = omega[k * nf + n] * t
            c = cos(ang)
            s = sin(ang)
            re_d[k] += p * c - q * s
            im_d[k] += p * s + q * c


cdef void _assemble(int n, int nq, double* kappa, int* off, int* rows,
                    int* cols, double* vals, double* re_d, double* im_d,
                    double* kmat, double* smat) noexcept nogil:
    cdef int q, i, r, c
    cdef double v
    memset(kmat, 0, n * n * sizeof(double))
    memset(smat, 0, n * n * sizeof(double))
    for q in range(nq):
        for i in range(off[q], off[q + 1]):
            r = rows[i]
            c = cols[i]
            v = vals[i]
            kmat[r * n + c] += re_d[q] * v
            kmat[c * n + r] += re_d[q] * v
            smat[r * n + c] += im_d[q] * v
            smat[c * n + r] -= im_d[q] * v
    for i in range(n):
        kmat[i * n + i] += kappa[i]


cdef int _factor_shift(int n, double* smat, double coef, double* f,
                       int* ipiv) noexcept nogil:
    """LU of (I + coef * S): fill (I - coef*S) row-major, whose
    column-major view is the antisymmetric shift's transpose
    (I - coef*S)^T = I + coef*S, the matrix LAPACK then factors."""
    cdef int i, info = 0
    for i in range(n * n):
        f[i] = -coef * smat[i]
    for i in range(n):
        f[i * n + i] += 1.0
    dgetrf(&n, &n, f, &n, ipiv, &info)
    return info


cdef int _solve_factored(int n, int e, double* f, int* ipiv, double* rhs,
                         double* x) noexcept nogil:
    """x = (I + coef*S)^-1 rhs using a _factor_shift factorization."""
    cdef char trans = b'N'
    cdef int info = 0
    if x != rhs:
        memcpy(x, rhs, n * e * sizeof(double))
    dgetrs(&trans, &n, &e, f, &n, ipiv, x, &n, &info)
    return info


cdef void _apply(int n, int e, double* a, double* x, double* y,
                 double alpha, double beta) noexcept nogil:
    """y = alpha * A x + beta * y per physics column; A row-major (n, n),
    x/y are (e, n) C-order = (n, e) column-major."""
    cdef char ta = b'T'
    cdef char tb = b'N'
    dgemm(&ta, &tb, &n, &e, &n, &alpha, a, &n, x, &n, &beta, y, &n)


cdef double _wsum(int n, int e, double* w, double* x) noexcept nogil:
    cdef int i, j
    cdef double acc = 0.0
    for i in range(e):
        for j in range(n):
            acc += w[j] * x[i * n + j] * x[i * n + j]
    return acc


cdef double _guard_pop(int n, int e, unsigned char* gmask, double* u,
                       double* v) noexcept nogil:
    cdef int i, j
    cdef double best = 0.0, acc
    for i in range(e):
        acc = 0.0
        for j in range(n):
            if gmask[j]:
                acc += u[i * n + j] * u[i * n + j] \
                    + v[i * n + j] * v[i * n + j]
        if acc > best:
            best = acc
    return best


cdef void _distribute(double tau, double coef, int nq, int nf, int nb,
                      double dtau, double* omega, double* gre, double* gim,
                      double* grad) noexcept nogil:
    """Scatter per-subsystem envelope-gradient pairs through the basis."""
    cdef int bidx[4]
    cdef double bval[4]
    cdef int cnt = _splines(tau, dtau, nb, bidx, bval)
    cdef int k, n, j, ire, iim
    cdef double ang, c, s, cre, cim
    for k in range(nq):
        for n in range(nf):
            ang = omega[k * nf + n] * tau
            c = cos(ang)
            s = sin(ang)
            cre = gre[k] * c + gim[k] * s
            cim = -gre[k] * s + gim[k] * c
            ire = ((k * nf + n) * 2) * nb
            iim = ire + nb
            for j in range(cnt):
                grad[ire + bidx[j]] += coef * bval[j] * cre
                grad[iim + bidx[j]] += coef * bval[j] * cim


def forward_sweep(int m, double t_total,
                  double[::1] kappa, double[::1] w,
                  unsigned char[::1] gmask,
                  int[::1] off, int[::1] rows, int[::1] cols,
                  double[::1] avals,
                  double[:, ::1] omega, int nb, double dtau,
                  double[::1] alpha,
                  double[:, ::1] u, double[:, ::1] v,
                  double[:, :, ::1] pops, long[::1] pop_steps):
    """Advance (u, v) in place over m steps; returns (j2, guard_max)."""
    cdef int n = u.shape[1]
    cdef int e = u.shape[0]
    cdef int nq = omega.shape[0]
    cdef int nf = omega.shape[1]
    cdef double h = t_total / m
    cdef double hh = 0.5 * h

    work = np.empty((8, n * n))
    cdef double[:, ::1] wk = work
    ipiv_arr = np.empty(n, dtype=np.intc)
    cdef int[::1] ipiv = ipiv_arr
    stage = np.empty((4, e * n))
    cdef double[:, ::1] st = stage
    env = np.empty((2, nq))
    cdef double[:, ::1] envv = env

    cdef double* k0 = &wk[0, 0]
    cdef double* s0 = &wk[1, 0]
    cdef double* k1 = &wk[2, 0]
    cdef double* s1 = &wk[3, 0]
    cdef double* k2 = &wk[4, 0]
    cdef double* s2 = &wk[5, 0]
    cdef double* fmat = &wk[6, 0]
    cdef double* rhs = &st[0, 0]
    cdef double* v1 = &st[1, 0]
    cdef double* u2 = &st[2, 0]
    cdef double* tmp = &st[3, 0]
    cdef double* re_d = &envv[0, 0]
    cdef double* im_d = &envv[1, 0]
    cdef double* uptr = &u[0, 0]
    cdef double* vptr = &v[0, 0]
    cdef double* kap = &kappa[0]
    cdef double* wptr = &w[0]
    cdef unsigned char* gm = &gmask[0]
    cdef int* offp = &off[0]
    cdef int* rowp = &rows[0]
    cdef int* colp = &cols[0]
    cdef double* valp = &avals[0]
    cdef double* omg = &omega[0, 0]
    cdef double* alp = &alpha[0]
    cdef int* ipv = &ipiv[0]
    cdef double* swp

    cdef long nsamp = pop_steps.shape[0]
    cdef double* pops_ptr = NULL
    cdef long* marks = NULL
    if nsamp > 0:
        pops_ptr = &pops[0, 0, 0]
        marks = &pop_steps[0]

    cdef double j2 = 0.0, gmax, t
    cdef long next_mark = 0
    cdef int step, i, info = 0
    with nogil:
        gmax = _guard_pop(n, e, gm, uptr, vptr)
        if nsamp > 0 and marks[0] == 0:
            for i in range(e * n):
                pops_ptr[i] = uptr[i] * uptr[i] + vptr[i] * vptr[i]
            next_mark = 1
        _envelopes(0.0, nq, nf, nb, dtau, omg, alp, re_d, im_d)
        _assemble(n, nq, kap, offp, rowp, colp, valp, re_d, im_d, k0, s0)
        for step in range(m):
            t = step * h
            _envelopes(t + hh, nq, nf, nb, dtau, omg, alp, re_d, im_d)
            _assemble(n, nq, kap, offp, rowp, colp, valp, re_d, im_d,
                      k1, s1)
            _envelopes(t + h, nq, nf, nb, dtau, omg, alp, re_d, im_d)
            _assemble(n, nq, kap, offp, rowp, colp, valp, re_d, im_d,
                      k2, s2)

            # V1 = (I - hh S1)^-1 (v + hh K1 u)
            memcpy(rhs, vptr, n * e * sizeof(double))
            _apply(n, e, k1, uptr, rhs, hh, 1.0)
            info |= _factor_shift(n, s1, -hh, fmat, ipv)
            info |= _solve_factored(n, e, fmat, ipv, rhs, v1)

            # U2 = (I - hh S2)^-1 (u + hh (S0 u - (K0 + K2) V1))
            memcpy(rhs, uptr, n * e * sizeof(double))
            _apply(n, e, s0, uptr, rhs, hh, 1.0)
            _apply(n, e, k0, v1, rhs, -hh, 1.0)
            _apply(n, e, k2, v1, rhs, -hh, 1.0)
            info |= _factor_shift(n, s2, -hh, fmat, ipv)
            info |= _solve_factored(n, e, fmat, ipv, rhs, u2)

            # v <- v + hh K1 (u + U2) + h S1 V1
            for i in range(e * n):
                tmp[i] = uptr[i] + u2[i]
            _apply(n, e, k1, tmp, vptr, hh, 1.0)
            _apply(n, e, s1, v1, vptr, h, 1.0)

            j2 += _wsum(n, e, wptr, uptr) + _wsum(n, e, wptr, u2) \
                + 2.0 * _wsum(n, e, wptr, v1)
            memcpy(uptr, u2, n * e * sizeof(double))

            gmax = max(gmax, _guard_pop(n, e, gm, uptr, vptr))
            if nsamp > 0 and next_mark < nsamp \
                    and step + 1 == marks[next_mark]:
                for i in range(e * n):
                    pops_ptr[next_mark * e * n + i] = \
                        uptr[i] * uptr[i] + vptr[i] * vptr[i]
                next_mark += 1

            swp = k0; k0 = k2; k2 = swp
            swp = s0; s0 = s2; s2 = swp
    if info != 0:
        raise RuntimeError("LU factorization failed inside forward sweep")
    return j2 * h / (2.0 * t_total), gmax


def backward_sweep(int m, double t_total,
                   double[::1] kappa, double[::1] w,
                   int[::1] off, int[::1] rows, int[::1] cols,
                   double[::1] avals,
                   double[:, ::1] omega, int nb, double dtau,
                   double[::1] alpha,
                   double[:, ::1] u, double[:, ::1] v,
                   double[:, ::1] mu, double[:, ::1] nu,
                   double[::1] grad):
    """Reverse-replay adjoint sweep.

    In: (u, v) final state, (mu, nu) terminal adjoint.  On return the
    four arrays hold their step-0 values and `grad` the objective
    gradient (accumulated; caller zeroes)."""
    cdef int n = u.shape[1]
    cdef int e = u.shape[0]
    cdef int nq = omega.shape[0]
    cdef int nf = omega.shape[1]
    cdef double h = t_total / m
    cdef double hh = 0.5 * h

    work = np.empty((8, n * n))
    cdef double[:, ::1] wk = work
    ipiv_arr = np.empty((2, n), dtype=np.intc)
    cdef int[:, ::1] ipiv = ipiv_arr
    stage = np.empty((7, e * n))
    cdef double[:, ::1] st = stage
    env = np.empty((8, nq))
    cdef double[:, ::1] envv = env

    cdef double* k0 = &wk[0, 0]
    cdef double* s0 = &wk[1, 0]
    cdef double* k1 = &wk[2, 0]
    cdef double* s1 = &wk[3, 0]
    cdef double* k2 = &wk[4, 0]
    cdef double* s2 = &wk[5, 0]
    cdef double* fh = &wk[6, 0]      # factorization of (I + hh S1)
    cdef double* fa = &wk[7, 0]      # factorization of (I + hh S0/S2)
    cdef double* rhs = &st[0, 0]
    cdef double* v1 = &st[1, 0]
    cdef double* uprev = &st[2, 0]
    cdef double* vprev = &st[3, 0]
    cdef double* x = &st[4, 0]
    cdef double* y1 = &st[5, 0]
    cdef double* tmp = &st[6, 0]
    cdef double* re_d = &envv[0, 0]
    cdef double* im_d = &envv[1, 0]
    cdef double* gre = &envv[2, 0]
    cdef double* gim = &envv[3, 0]
    cdef double* uptr = &u[0, 0]
    cdef double* vptr = &v[0, 0]
    cdef double* mptr = &mu[0, 0]
    cdef double* nptr = &nu[0, 0]
    cdef double* gptr = &grad[0]
    cdef double* kap = &kappa[0]
    cdef double* wptr = &w[0]
    cdef int* offp = &off[0]
    cdef int* rowp = &rows[0]
    cdef int* colp = &cols[0]
    cdef double* valp = &avals[0]
    cdef double* omg = &omega[0, 0]
    cdef double* alp = &alpha[0]
    cdef int* ipv_h = &ipiv[0, 0]
    cdef int* ipv_a = &ipiv[1, 0]
    cdef double* swp

    cdef double t, val, vc, vr, acc_c, acc_r
    cdef double s_v1x, a_u1x, a_u2x, s_u1y1, a_v1y1, s_u2y2, a_v1y2
    cdef int step, i, j, q, r, c, info = 0
    with nogil:
        _envelopes(t_total, nq, nf, nb, dtau, omg, alp, re_d, im_d)
        _assemble(n, nq, kap, offp, rowp, colp, valp, re_d, im_d, k2, s2)
        for step in range(m - 1, -1, -1):
            t = step * h
            _envelopes(t, nq, nf, nb, dtau, omg, alp, re_d, im_d)
            _assemble(n, nq, kap, offp, rowp, colp, valp, re_d, im_d,
                      k0, s0)
            _envelopes(t + hh, nq, nf, nb, dtau, omg, alp, re_d, im_d)
            _assemble(n, nq, kap, offp, rowp, colp, valp, re_d, im_d,
                      k1, s1)
            info |= _factor_shift(n, s1, hh, fh, ipv_h)

            # Reverse the state: V1 = (I + hh S1)^-1 (v - hh K1 u)
            memcpy(rhs, vptr, n * e * sizeof(double))
            _apply(n, e, k1, uptr, rhs, -hh, 1.0)
            info |= _solve_factored(n, e, fh, ipv_h, rhs, v1)
            # u_prev = (I + hh S0)^-1 (u - hh (S2 u - (K2 + K0) V1))
            memcpy(rhs, uptr, n * e * sizeof(double))
            _apply(n, e, s2, uptr, rhs, -hh, 1.0)
            _apply(n, e, k0, v1, rhs, hh, 1.0)
            _apply(n, e, k2, v1, rhs, hh, 1.0)
            info |= _factor_shift(n, s0, hh, fa, ipv_a)
            info |= _solve_factored(n, e, fa, ipv_a, rhs, uprev)
            # v_prev = v - hh K1 (u + u_prev) - h S1 V1
            memcpy(vprev, vptr, n * e * sizeof(double))
            for i in range(e * n):
                tmp[i] = uptr[i] + uprev[i]
            _apply(n, e, k1, tmp, vprev, -hh, 1.0)
            _apply(n, e, s1, v1, vprev, -h, 1.0)

            # Adjoint: X = (I + hh S2)^-1 (mu + hh K1 nu + (h/T) W U2)
            for i in range(e * n):
                rhs[i] = mptr[i] + (h / t_total) * wptr[i % n] * uptr[i]
            _apply(n, e, k1, nptr, rhs, hh, 1.0)
            info |= _factor_shift(n, s2, hh, fa, ipv_a)
            info |= _solve_factored(n, e, fa, ipv_a, rhs, x)
            # Y1 = (I + hh S1)^-1
            #      (nu - hh (S1 nu + (K0 + K2) X) + (2h/T) W V1)
            for i in range(e * n):
                rhs[i] = nptr[i] \
                    + (2.0 * h / t_total) * wptr[i % n] * v1[i]
            _apply(n, e, s1, nptr, rhs, -hh, 1.0)
            _apply(n, e, k0, x, rhs, -hh, 1.0)
            _apply(n, e, k2, x, rhs, -hh, 1.0)
            info |= _solve_factored(n, e, fh, ipv_h, rhs, y1)

            # Gradient contractions against the lowering-operator pattern.
            for q in range(nq):
                s_v1x = 0.0
                a_u1x = 0.0
                a_u2x = 0.0
                s_u1y1 = 0.0
                a_v1y1 = 0.0
                s_u2y2 = 0.0
                a_v1y2 = 0.0
                for i in range(offp[q], offp[q + 1]):
                    r = rowp[i]
                    c = colp[i]
                    val = valp[i]
                    acc_c = 0.0
                    acc_r = 0.0
                    for j in range(e):
                        acc_c += v1[j * n + c] * x[j * n + r]
                        acc_r += v1[j * n + r] * x[j * n + c]
                    s_v1x += val * (acc_c + acc_r)
                    acc_c = 0.0
                    acc_r = 0.0
                    for j in range(e):
                        acc_c += uprev[j * n + c] * x[j * n + r]
                        acc_r += uprev[j * n + r] * x[j * n + c]
                    a_u1x += val * (acc_c - acc_r)
                    acc_c = 0.0
                    acc_r = 0.0
                    for j in range(e):
                        acc_c += uptr[j * n + c] * x[j * n + r]
                        acc_r += uptr[j * n + r] * x[j * n + c]
                    a_u2x += val * (acc_c - acc_r)
                    acc_c = 0.0
                    acc_r = 0.0
                    for j in range(e):
                        acc_c += uprev[j * n + c] * y1[j * n + r]
                        acc_r += uprev[j * n + r] * y1[j * n + c]
                    s_u1y1 += val * (acc_c + acc_r)
                    acc_c = 0.0
                    acc_r = 0.0
                    for j in range(e):
                        acc_c += v1[j * n + c] * y1[j * n + r]
                        acc_r += v1[j * n + r] * y1[j * n + c]
                    a_v1y1 += val * (acc_c - acc_r)
                    acc_c = 0.0
                    acc_r = 0.0
                    for j in range(e):
                        acc_c += uptr[j * n + c] * nptr[j * n + r]
                        acc_r += uptr[j * n + r] * nptr[j * n + c]
                    s_u2y2 += val * (acc_c + acc_r)
                    acc_c = 0.0
                    acc_r = 0.0
                    for j in range(e):
                        acc_c += v1[j * n + c] * nptr[j * n + r]
                        acc_r += v1[j * n + r] * nptr[j * n + c]
                    a_v1y2 += val * (acc_c - acc_r)
                gre[q] = -s_v1x
                gim[q] = a_u1x
                envv[4, q] = s_u1y1 + s_u2y2
                envv[5, q] = a_v1y1 + a_v1y2
                envv[6, q] = -s_v1x
                envv[7, q] = a_u2x
            _distribute(t, hh, nq, nf, nb, dtau, omg, gre, gim, gptr)
            _distribute(t + hh, hh, nq, nf, nb, dtau, omg,
                        &envv[4, 0], &envv[5, 0], gptr)
            _distribute(t + h, hh, nq, nf, nb, dtau, omg,
                        &envv[6, 0], &envv[7, 0], gptr)

            # mu <- mu - hh (kap1 + kap2), with
            # kap1 + kap2 = (S0 + S2) X - K1 (Y1 + Y2) - (2/T) W (U1 + U2)
            memset(tmp, 0, e * n * sizeof(double))
            _apply(n, e, s0, x, tmp, 1.0, 0.0)
            _apply(n, e, s2, x, tmp, 1.0, 1.0)
            _apply(n, e, k1, y1, tmp, -1.0, 1.0)
            _apply(n, e, k1, nptr, tmp, -1.0, 1.0)
            for i in range(e * n):
                tmp[i] -= (2.0 / t_total) * wptr[i % n] \
                    * (uprev[i] + uptr[i])
                mptr[i] -= hh * tmp[i]
            # nu <- nu - hh (ell1 + ell2), with
            # ell1 + ell2 = (K0 + K2) X + S1 (Y1 + Y2) - (4/T) W V1
            _apply(n, e, k0, x, tmp, 1.0, 0.0)
            _apply(n, e, k2, x, tmp, 1.0, 1.0)
            _apply(n, e, s1, y1, tmp, 1.0, 1.0)
            _apply(n, e, s1, nptr, tmp, 1.0, 1.0)
            for i in range(e * n):
                tmp[i] -= (4.0 / t_total) * wptr[i % n] * v1[i]
                nptr[i] -= hh * tmp[i]

            memcpy(uptr, uprev, n * e * sizeof(double))
            memcpy(vptr, vprev, n * e * sizeof(double))
            swp = k2; k2 = k0; k0 = swp
            swp = s2; s2 = s0; s0 = swp
    if info != 0:
        raise RuntimeError("LU factorization failed inside backward sweep")
