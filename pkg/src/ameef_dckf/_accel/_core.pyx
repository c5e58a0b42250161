# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of the pure-NumPy backend: small dense linear algebra in
straight C loops (matrix sizes stay far below BLAS crossover)."""

from libc.math cimport exp, fabs, log, sqrt
from libc.string cimport memcpy, memset

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double TINY = 1e-300


# ---------------------------------------------------------------------------
# Dense helpers (row-major, explicit leading dimensions)

cdef int _chol(int n, double* a, int lda, double* l, int ldl) nogil:
    """Lower Cholesky of a (symmetric, reads lower part); 0 ok, 1 fail."""
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = a[i * lda + j]
            for k in range(j):
                acc -= l[i * ldl + k] * l[j * ldl + k]
            if i == j:
                if acc <= 0.0:
                    return 1
                l[i * ldl + i] = sqrt(acc)
            else:
                l[i * ldl + j] = acc / l[j * ldl + j]
        for j in range(i + 1, n):
            l[i * ldl + j] = 0.0
    return 0


cdef void _fwd(int n, int k, double* l, int ldl, double* b, int ldb,
               double* x, int ldx) nogil:
    """Solve L X = B for lower-triangular L; B is (n, k)."""
    cdef int i, j, c
    cdef double acc
    for c in range(k):
        for i in range(n):
            acc = b[i * ldb + c]
            for j in range(i):
                acc -= l[i * ldl + j] * x[j * ldx + c]
            x[i * ldx + c] = acc / l[i * ldl + i]


cdef void _bwd(int n, int k, double* l, int ldl, double* b, int ldb,
               double* x, int ldx) nogil:
    """Solve L^T X = B for lower-triangular L; B is (n, k)."""
    cdef int i, j, c
    cdef double acc
    for c in range(k):
        for i in range(n - 1, -1, -1):
            acc = b[i * ldb + c]
            for j in range(i + 1, n):
                acc -= l[j * ldl + i] * x[j * ldx + c]
            x[i * ldx + c] = acc / l[i * ldl + i]


cdef void _gemm(int p, int q, int r, double* a, int lda, int ta,
                double* b, int ldb, int tb, double* c, int ldc,
                double beta) nogil:
    """C (p, r) = op(A) op(B) + beta*C with op(A) (p, q), op(B) (q, r)."""
    cdef int i, j, k
    cdef double aik
    if beta == 0.0:
        for i in range(p):
            for j in range(r):
                c[i * ldc + j] = 0.0
    elif beta != 1.0:
        for i in range(p):
            for j in range(r):
                c[i * ldc + j] *= beta
    for i in range(p):
        for k in range(q):
            aik = a[k * lda + i] if ta else a[i * lda + k]
            for j in range(r):
                c[i * ldc + j] += aik * (b[j * ldb + k] if tb else b[k * ldb + j])


cdef void _gemv(int p, int q, double* a, int lda, int ta, double* x,
                double* y) nogil:
    cdef int i, k
    cdef double acc
    for i in range(p):
        acc = 0.0
        for k in range(q):
            acc += (a[k * lda + i] if ta else a[i * lda + k]) * x[k]
        y[i] = acc


cdef int _spd_inverse(int n, double* a, int lda, double* out, int ldo,
                      double* work) nogil:
    """out = inv(a) for SPD a via Cholesky; work needs 2*n*n doubles."""
    cdef double* l = work
    cdef double* eye = work + n * n
    cdef int i, j
    if _chol(n, a, lda, l, n):
        return 1
    memset(eye, 0, n * n * sizeof(double))
    for i in range(n):
        eye[i * n + i] = 1.0
    _fwd(n, n, l, n, eye, n, eye, n)
    _bwd(n, n, l, n, eye, n, out, ldo)
    return 0


# ---------------------------------------------------------------------------
# Kernel weights

def cauchy_vec(e, double sigma):
    e = np.asarray(e, dtype=np.float64)
    return 1.0 / (1.0 + e * e / sigma)


cdef void _pi_normalized(int N, double* e, double eta, double s1, double s2,
                         bint eq39, double* pi, double* work) nogil:
    """Normalized fixed-point weight matrix; work needs N*N + 3*N."""
    cdef double* psi = work
    cdef double* omega = work + N * N
    cdef double* phi = omega + N
    cdef double* col = phi + N
    cdef double eta1 = eta / (s1 * s1)
    cdef double eta2 = (1.0 - eta) / (s2 * s2)
    cdef double c0, diff, acc
    cdef int i, j, k
    for i in range(N):
        omega[i] = 1.0 / (1.0 + e[i] * e[i] / s1)
    for i in range(N):
        acc = 0.0
        for j in range(N):
            diff = e[j] - e[i]
            psi[i * N + j] = 1.0 / (1.0 + diff * diff / s2)
            acc += psi[i * N + j]
        phi[i] = acc
    if eq39:
        c0 = eta1 + eta2 * (<double> N * N + N)
        for i in range(N):
            for j in range(N):
                acc = phi[i] * phi[j] if i == j else 0.0
                for k in range(N):
                    acc += psi[k * N + i] * psi[k * N + j]
                pi[i * N + j] = eta2 * acc
            pi[i * N + i] += eta1 * omega[i]
    else:
        c0 = eta1 + eta2 * (<double> N - 1.0)
        for i in range(N):
            for j in range(N):
                pi[i * N + j] = -eta2 * psi[i * N + j]
            pi[i * N + i] += eta2 * phi[i] + eta1 * omega[i]
    for i in range(N * N):
        pi[i] /= c0


def theta_core(errors, double eta1, double eta2, double sigma1, double sigma2):
    e = np.ascontiguousarray(errors, dtype=np.float64)
    cdef int N = e.shape[0]
    omega = 1.0 / (1.0 + e * e / sigma1)
    psi = 1.0 / (1.0 + (e[None, :] - e[:, None]) ** 2 / sigma2)
    phi = psi.sum(axis=1)
    theta = eta2 * (np.diag(phi) - psi)
    theta[np.diag_indices(N)] += eta1 * omega
    return omega, psi, phi, theta


cdef void _resolve_sigmas(int m, double* innovation, double* p_yy_diag,
                          double sigma1, double sigma2, double sigma_min,
                          double sigma_max, double* r_tilde, double* r_diag,
                          double* out) nogil:
    cdef double lo = sigma_min / sigma_max
    cdef double worst = sigma_max
    cdef double y2, phi, ceil_i, q, bound, s_i, scale
    cdef int i
    for i in range(m):
        y2 = innovation[i] * innovation[i]
        ceil_i = sigma_max
        if r_tilde[i] >= 0.0 and r_diag[i] > 0.0:
            q = (r_tilde[i] - (p_yy_diag[i] - r_diag[i])) / (2.0 * r_diag[i]) - 1.0
            if q > 0.0:
                bound = (y2 / r_diag[i]) / q
                ceil_i = min(max(bound, sigma_min), sigma_max)
        if y2 == 0.0:
            phi = 1.0
        else:
            phi = 1.0 - exp(-p_yy_diag[i] / y2)
        phi = min(max(phi, lo), 1.0)
        s_i = min(max(phi * ceil_i, sigma_min), sigma_max)
        worst = min(worst, s_i)
    scale = worst / sigma_max
    out[0] = scale * sigma1
    out[1] = scale * sigma2


def resolve_sigmas(innovation, p_yy_diag, double sigma1, double sigma2,
                   double sigma_min, double sigma_max, r_tilde, r_diag):
    cdef double[::1] innov = np.ascontiguousarray(innovation, dtype=np.float64)
    cdef double[::1] pyy = np.ascontiguousarray(p_yy_diag, dtype=np.float64)
    cdef double[::1] rt = np.ascontiguousarray(r_tilde, dtype=np.float64)
    cdef double[::1] rd = np.ascontiguousarray(r_diag, dtype=np.float64)
    cdef double out[2]
    _resolve_sigmas(innov.shape[0], &innov[0], &pyy[0], sigma1, sigma2,
                    sigma_min, sigma_max, &rt[0], &rd[0], out)
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Fixed-point measurement update

cdef int _fp_loop(int n, int m, double* x_pred, double* d, double* w_mat,
                  double* ip, double* ir, double* s_mat, double* innovation,
                  double eta, double s1, double s2, bint eq39, bint identity,
                  double fp_tol, int fp_max_iter,
                  double* x, double* gain, double* ryy,
                  int* iterations, bint* converged, double* ws) nogil:
    """Iterate the weighted update; 0 ok, 1 degenerate. ws: workspace of
    at least 2*N*N + 4*N + 11*S*S + S doubles with S = max(n, m)."""
    cdef int N = n + m
    cdef int S = n if n > m else m
    cdef double* e = ws
    cdef double* pi = e + N
    cdef double* piwork = pi + N * N
    cdef double* t_nn = piwork + N * N + 3 * N
    cdef double* t_nm = t_nn + S * S
    cdef double* t_mn = t_nm + S * S
    cdef double* p_hat = t_mn + S * S
    cdef double* p_yx = p_hat + S * S
    cdef double* p_xy = p_yx + S * S
    cdef double* m_mat = p_xy + S * S
    cdef double* rhs = m_mat + S * S
    cdef double* lm = rhs + S * S
    cdef double* kv = lm + S * S
    cdef double* x_new = kv + S * S
    cdef int it, i, j
    cdef double rel, nrm, dnrm
    memcpy(x, x_pred, n * sizeof(double))
    converged[0] = 0
    iterations[0] = 0
    for it in range(1, fp_max_iter + 1):
        iterations[0] = it
        if identity:
            memset(pi, 0, N * N * sizeof(double))
            for i in range(N):
                pi[i * N + i] = 1.0
        else:
            _gemv(N, n, w_mat, n, 0, x, e)
            for i in range(N):
                e[i] = d[i] - e[i]
            _pi_normalized(N, e, eta, s1, s2, eq39, pi, piwork)
        # p_hat = ip^T pi_xx ip
        _gemm(n, n, n, pi, N, 0, ip, n, 0, t_nn, n, 0.0)
        _gemm(n, n, n, ip, n, 1, t_nn, n, 0, p_hat, n, 0.0)
        # p_yx = ip^T pi[:n, n:] ir
        _gemm(n, m, m, pi + n, N, 0, ir, m, 0, t_nm, m, 0.0)
        _gemm(n, n, m, ip, n, 1, t_nm, m, 0, p_yx, m, 0.0)
        # p_xy = ir^T pi[n:, :n] ip
        _gemm(m, n, n, pi + n * N, N, 0, ip, n, 0, t_mn, n, 0.0)
        _gemm(m, m, n, ir, m, 1, t_mn, n, 0, p_xy, n, 0.0)
        # ryy = ir^T pi[n:, n:] ir
        _gemm(m, m, m, pi + n * N + n, N, 0, ir, m, 0, t_nm, m, 0.0)
        _gemm(m, m, m, ir, m, 1, t_nm, m, 0, ryy, m, 0.0)
        # m_mat = p_hat + p_yx s + s^T p_xy + s^T ryy s
        memcpy(m_mat, p_hat, n * n * sizeof(double))
        _gemm(n, m, n, p_yx, m, 0, s_mat, n, 0, m_mat, n, 1.0)
        _gemm(n, m, n, s_mat, n, 1, p_xy, n, 0, m_mat, n, 1.0)
        _gemm(m, m, n, ryy, m, 0, s_mat, n, 0, t_mn, n, 0.0)
        _gemm(n, m, n, s_mat, n, 1, t_mn, n, 0, m_mat, n, 1.0)
        # rhs = p_yx + s^T ryy
        memcpy(rhs, p_yx, n * m * sizeof(double))
        _gemm(n, m, m, s_mat, n, 1, ryy, m, 0, rhs, m, 1.0)
        # symmetrize m_mat, then gain = m_mat^{-1} rhs
        for i in range(n):
            for j in range(i):
                m_mat[i * n + j] = 0.5 * (m_mat[i * n + j] + m_mat[j * n + i])
                m_mat[j * n + i] = m_mat[i * n + j]
        if _chol(n, m_mat, n, lm, n):
            return 1
        _fwd(n, m, lm, n, rhs, m, kv, m)
        _bwd(n, m, lm, n, kv, m, gain, m)
        _gemv(n, m, gain, m, 0, innovation, x_new)
        nrm = 0.0
        dnrm = 0.0
        for i in range(n):
            x_new[i] += x_pred[i]
            nrm += x[i] * x[i]
            dnrm += (x_new[i] - x[i]) * (x_new[i] - x[i])
        rel = sqrt(dnrm) / max(sqrt(nrm), TINY)
        memcpy(x, x_new, n * sizeof(double))
        if rel <= fp_tol or identity:
            converged[0] = 1
            break
    return 0


def fixed_point_core(x_pred, d, w_mat, xi_p, xi_r, s_mat, innovation,
                     p_yy_diag, double eta, double sigma1, double sigma2,
                     double sigma_min, double sigma_max, r_tilde, r_diag,
                     bint adaptive, bint eq39, bint identity, double fp_tol,
                     int fp_max_iter):
    cdef double[::1] xp = np.ascontiguousarray(x_pred, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[:, ::1] wm = np.ascontiguousarray(w_mat, dtype=np.float64)
    cdef double[:, ::1] lp = np.ascontiguousarray(xi_p, dtype=np.float64)
    cdef double[:, ::1] lr = np.ascontiguousarray(xi_r, dtype=np.float64)
    cdef double[:, ::1] sm = np.ascontiguousarray(s_mat, dtype=np.float64)
    cdef double[::1] innov = np.ascontiguousarray(innovation, dtype=np.float64)
    cdef double[::1] pyy = np.ascontiguousarray(p_yy_diag, dtype=np.float64)
    cdef double[::1] rt = np.ascontiguousarray(r_tilde, dtype=np.float64)
    cdef double[::1] rd = np.ascontiguousarray(r_diag, dtype=np.float64)
    cdef int n = xp.shape[0]
    cdef int m = innov.shape[0]
    cdef int N = n + m
    cdef int S = n if n > m else m
    ws_np = np.empty(2 * N * N + 5 * N + 12 * S * S + 2 * S, dtype=np.float64)
    cdef double[::1] ws = ws_np
    # triangular inverses
    ip_np = np.empty((n, n)); ir_np = np.empty((m, m))
    eye_n = np.eye(n); eye_m = np.eye(m)
    cdef double[:, ::1] ip = ip_np, ir = ir_np
    cdef double[:, ::1] en = np.ascontiguousarray(eye_n), em = np.ascontiguousarray(eye_m)
    _fwd(n, n, &lp[0, 0], n, &en[0, 0], n, &ip[0, 0], n)
    _fwd(m, m, &lr[0, 0], m, &em[0, 0], m, &ir[0, 0], m)
    cdef double s1 = sigma1, s2 = sigma2
    cdef double sig_out[2]
    if adaptive and not identity:
        _resolve_sigmas(m, &innov[0], &pyy[0], sigma1, sigma2, sigma_min,
                        sigma_max, &rt[0], &rd[0], sig_out)
        s1 = sig_out[0]; s2 = sig_out[1]

    x_np = np.empty(n); gain_np = np.zeros((n, m)); ryy_np = np.empty((m, m))
    cdef double[::1] x = x_np
    cdef double[:, ::1] gain = gain_np
    cdef double[:, ::1] ryy = ryy_np
    cdef int iterations = 0
    cdef bint converged = 0
    cdef int bad
    bad = _fp_loop(n, m, &xp[0], &dv[0], &wm[0, 0], &ip[0, 0], &ir[0, 0],
                   &sm[0, 0], &innov[0], eta, s1, s2, eq39, identity,
                   fp_tol, fp_max_iter, &x[0], &gain[0, 0], &ryy[0, 0],
                   &iterations, &converged, &ws[0])
    p_prior = np.asarray(lp) @ np.asarray(lp).T
    if bad:
        return {
            "x_post": np.asarray(xp).copy(), "gain": np.zeros((n, m)),
            "p_post": p_prior,
            "r_yy_weighted": ip_irT(ir_np), "r_eff": np.asarray(lr) @ np.asarray(lr).T,
            "iterations": 0, "converged": False, "degenerate": True,
            "sigma1": s1, "sigma2": s2,
        }
    ryy_np = 0.5 * (ryy_np + ryy_np.T)
    # effective measurement covariance and Joseph-form posterior
    r_eff_np = np.empty((m, m))
    cdef double[:, ::1] rw = np.ascontiguousarray(ryy_np)
    cdef double[:, ::1] reff = r_eff_np
    if _spd_inverse(m, &rw[0, 0], m, &reff[0, 0], m, &ws[0]):
        return {
            "x_post": np.asarray(xp).copy(), "gain": np.zeros((n, m)),
            "p_post": p_prior,
            "r_yy_weighted": ip_irT(ir_np), "r_eff": np.asarray(lr) @ np.asarray(lr).T,
            "iterations": 0, "converged": False, "degenerate": True,
            "sigma1": s1, "sigma2": s2,
        }
    imks = np.eye(n) - gain_np @ np.asarray(sm)
    p_post = imks @ p_prior @ imks.T + gain_np @ r_eff_np @ gain_np.T
    p_post = 0.5 * (p_post + p_post.T)
    return {
        "x_post": x_np, "gain": gain_np, "p_post": p_post,
        "r_yy_weighted": ryy_np, "r_eff": r_eff_np,
        "iterations": iterations, "converged": bool(converged),
        "degenerate": False, "sigma1": s1, "sigma2": s2,
    }


def ip_irT(ir):
    ir = np.asarray(ir)
    return ir.T @ ir


# ---------------------------------------------------------------------------
# Linear-model cubature stages

def predict_linear(x, p, f_mat, q_cov):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] pm = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[:, ::1] fm = np.ascontiguousarray(f_mat, dtype=np.float64)
    cdef double[:, ::1] qm = np.ascontiguousarray(q_cov, dtype=np.float64)
    cdef int n = xv.shape[0]
    x_out = np.empty(n); p_out = np.empty((n, n))
    cdef double[::1] xo = x_out
    cdef double[:, ::1] po = p_out
    ws_np = np.empty(n * n + 4 * n * n, dtype=np.float64)
    cdef double[::1] ws = ws_np
    if _predict_linear(n, &xv[0], &pm[0, 0], &fm[0, 0], &qm[0, 0],
                       &xo[0], &po[0, 0], &ws[0]):
        raise FloatingPointError("prior covariance not positive definite")
    return x_out, p_out


cdef int _predict_linear(int n, double* x, double* p, double* f, double* q,
                         double* x_out, double* p_out, double* ws) nogil:
    cdef double* l = ws
    cdef double* pts = ws + n * n          # (2n, n)
    cdef double* prop = pts + 2 * n * n    # (2n, n)
    cdef int i, j, k
    cdef double sn = sqrt(<double> n), acc
    if _chol(n, p, n, l, n):
        return 1
    for i in range(n):
        for j in range(n):
            pts[i * n + j] = x[j] + sn * l[j * n + i]
            pts[(i + n) * n + j] = x[j] - sn * l[j * n + i]
    _gemm(2 * n, n, n, pts, n, 0, f, n, 1, prop, n, 0.0)
    for j in range(n):
        acc = 0.0
        for i in range(2 * n):
            acc += prop[i * n + j]
        x_out[j] = acc / (2.0 * n)
    for i in range(2 * n):
        for j in range(n):
            prop[i * n + j] -= x_out[j]
    _gemm(n, 2 * n, n, prop, n, 1, prop, n, 0, p_out, n, 0.0)
    for i in range(n):
        for j in range(n):
            p_out[i * n + j] = p_out[i * n + j] / (2.0 * n) + q[i * n + j]
    for i in range(n):
        for j in range(i):
            p_out[i * n + j] = 0.5 * (p_out[i * n + j] + p_out[j * n + i])
            p_out[j * n + i] = p_out[i * n + j]
    return 0


def moments_linear(x_pred, p_pred, h_mat, r_cov):
    xp = np.ascontiguousarray(x_pred, dtype=np.float64)
    pp = np.ascontiguousarray(p_pred, dtype=np.float64)
    hm = np.ascontiguousarray(h_mat, dtype=np.float64)
    rc = np.ascontiguousarray(r_cov, dtype=np.float64)
    cdef int n = xp.shape[0]
    cdef int m = hm.shape[0]
    y_pred = np.empty(m); p_xy = np.empty((n, m)); p_yy = np.empty((m, m))
    xi_p = np.empty((n, n))
    cdef double[::1] xv = xp, yv = y_pred
    cdef double[:, ::1] pm = pp, hv = hm, rv = rc
    cdef double[:, ::1] pxy = p_xy, pyy = p_yy, lp = xi_p
    ws_np = np.empty(4 * n * n + 4 * n * m, dtype=np.float64)
    cdef double[::1] ws = ws_np
    if _moments_linear(n, m, &xv[0], &pm[0, 0], &hv[0, 0], &rv[0, 0],
                       &yv[0], &pxy[0, 0], &pyy[0, 0], &lp[0, 0], &ws[0]):
        raise FloatingPointError("predicted covariance not positive definite")
    return y_pred, p_xy, p_yy, xi_p


cdef int _moments_linear(int n, int m, double* x, double* p, double* h,
                         double* r, double* y_pred, double* p_xy,
                         double* p_yy, double* l, double* ws) nogil:
    cdef double* dev_x = ws                 # (2n, n)
    cdef double* meas = ws + 2 * n * n      # (2n, m)
    cdef int i, j
    cdef double sn = sqrt(<double> n), acc
    if _chol(n, p, n, l, n):
        return 1
    for i in range(n):
        for j in range(n):
            dev_x[i * n + j] = sn * l[j * n + i]
            dev_x[(i + n) * n + j] = -sn * l[j * n + i]
    _gemm(2 * n, n, m, dev_x, n, 0, h, n, 1, meas, m, 0.0)
    for j in range(m):
        acc = 0.0
        for i in range(2 * n):
            acc += meas[i * m + j]
        y_pred[j] = acc / (2.0 * n)
    for i in range(2 * n):
        for j in range(m):
            meas[i * m + j] -= y_pred[j]
    cdef double hx
    for j in range(m):
        hx = 0.0
        for i in range(n):
            hx += h[j * n + i] * x[i]
        y_pred[j] += hx
    _gemm(n, 2 * n, m, dev_x, n, 1, meas, m, 0, p_xy, m, 0.0)
    _gemm(m, 2 * n, m, meas, m, 1, meas, m, 0, p_yy, m, 0.0)
    for i in range(n):
        for j in range(m):
            p_xy[i * m + j] /= 2.0 * n
    for i in range(m):
        for j in range(m):
            p_yy[i * m + j] = p_yy[i * m + j] / (2.0 * n) + r[i * m + j]
    return 0


def node_update_linear(x_pred, p_pred, h_mat, r_cov, y, double eta,
                       double sigma1, double sigma2, double sigma_min,
                       double sigma_max, r_tilde, bint adaptive, bint eq39,
                       bint identity, double fp_tol, int fp_max_iter):
    xp = np.ascontiguousarray(x_pred, dtype=np.float64)
    pp = np.ascontiguousarray(p_pred, dtype=np.float64)
    hm = np.ascontiguousarray(h_mat, dtype=np.float64)
    rc = np.ascontiguousarray(r_cov, dtype=np.float64)
    yv = np.ascontiguousarray(y, dtype=np.float64)
    rt = np.ascontiguousarray(r_tilde, dtype=np.float64)
    cdef int n = xp.shape[0]
    cdef int m = hm.shape[0]
    cdef int N = n + m

    y_pred, p_xy, p_yy, xi_p = moments_linear(xp, pp, hm, rc)
    cdef double[:, ::1] lp = xi_p
    cdef double[:, ::1] pxy = p_xy

    # s_mat = (P^{-1} p_xy)^T via the factor of p_pred
    s_mat = np.empty((m, n))
    t_nm = np.empty((n, m))
    cdef double[:, ::1] sm = s_mat, tnm = t_nm
    _fwd(n, m, &lp[0, 0], n, &pxy[0, 0], m, &tnm[0, 0], m)
    _bwd(n, m, &lp[0, 0], n, &tnm[0, 0], m, &tnm[0, 0], m)
    cdef int i, j
    for i in range(m):
        for j in range(n):
            sm[i, j] = tnm[j, i]

    xi_r = np.empty((m, m))
    cdef double[:, ::1] rv = rc, lr = xi_r
    if _chol(m, &rv[0, 0], m, &lr[0, 0], m):
        raise FloatingPointError("measurement covariance not positive definite")

    innovation = yv - y_pred
    z = innovation + s_mat @ xp
    d = np.empty(N)
    w_mat = np.empty((N, n))
    cdef double[::1] dv = d, xv = xp, zv = np.ascontiguousarray(z)
    cdef double[:, ::1] wm = w_mat
    eye_n = np.ascontiguousarray(np.eye(n))
    cdef double[:, ::1] en = eye_n
    _fwd(n, 1, &lp[0, 0], n, &xv[0], 1, &dv[0], 1)
    _fwd(m, 1, &lr[0, 0], m, &zv[0], 1, &dv[n], 1)
    _fwd(n, n, &lp[0, 0], n, &en[0, 0], n, &wm[0, 0], n)
    _fwd(m, n, &lr[0, 0], m, &sm[0, 0], n, &wm[n, 0], n)

    res = fixed_point_core(xp, d, w_mat, xi_p, xi_r, s_mat, innovation,
                           np.diag(p_yy).copy(), eta, sigma1, sigma2,
                           sigma_min, sigma_max, rt, np.diag(rc).copy(),
                           adaptive, eq39, identity, fp_tol, fp_max_iter)
    ryy = res["r_yy_weighted"]
    res["s_mat"] = s_mat
    res["z"] = z
    res["innovation"] = innovation
    res["p_yy_diag"] = np.diag(p_yy).copy()
    res["d_stat"] = s_mat.T @ (ryy @ z)
    res["v_stat"] = s_mat.T @ ryy @ s_mat
    return res


def info_posterior(x_pred, p_pred, d_sum, v_sum):
    """Information-form posterior from fused statistics."""
    xp = np.ascontiguousarray(x_pred, dtype=np.float64)
    pp = np.ascontiguousarray(p_pred, dtype=np.float64)
    dv = np.ascontiguousarray(d_sum, dtype=np.float64)
    vv = np.ascontiguousarray(v_sum, dtype=np.float64)
    cdef int n = xp.shape[0]
    x_out = np.empty(n); p_out = np.empty((n, n))
    cdef double[::1] xo = x_out, xv = xp, dm = dv
    cdef double[:, ::1] po = p_out, pm = pp, vm = vv
    ws_np = np.empty(4 * n * n + n, dtype=np.float64)
    cdef double[::1] ws = ws_np
    cdef double* pinv = &ws[0]
    cdef double* info = pinv + n * n
    cdef double* work = info + n * n
    cdef double* rhs = work + 2 * n * n
    cdef int i, j
    if _spd_inverse(n, &pm[0, 0], n, pinv, n, work):
        raise FloatingPointError("predicted covariance not positive definite")
    for i in range(n):
        for j in range(n):
            info[i * n + j] = 0.5 * (pinv[i * n + j] + pinv[j * n + i]) \
                + 0.5 * (vm[i, j] + vm[j, i])
    _gemv(n, n, pinv, n, 0, &xv[0], rhs)
    for i in range(n):
        rhs[i] += dm[i]
    if _spd_inverse(n, info, n, &po[0, 0], n, work):
        raise FloatingPointError("fused information matrix not positive definite")
    _gemv(n, n, &po[0, 0], n, 0, rhs, &xo[0])
    for i in range(n):
        for j in range(i):
            po[i, j] = 0.5 * (po[i, j] + po[j, i])
            po[j, i] = po[i, j]
    return x_out, p_out


# ---------------------------------------------------------------------------
# Push-sum consensus loop

def lfac_loop(a1, a2, leader_values, double gamma, int max_rounds,
              int tail_window=5, double tail_margin=0.25):
    a1c = np.ascontiguousarray(a1, dtype=np.float64)
    a2c = np.ascontiguousarray(a2, dtype=np.float64)
    lv = np.ascontiguousarray(leader_values, dtype=np.float64)
    cdef int nf = a1c.shape[0]
    cdef int m = a2c.shape[1]
    cdef int k = lv.shape[1]
    cdef double[:, ::1] A1 = a1c, A2 = a2c, LV = lv

    u = np.empty((nf, k)); v = np.empty(nf); aw = np.empty(nf)
    s = np.empty((nf, k)); w = np.empty(nf); cum_v = np.empty(nf)
    beta = np.zeros((nf, k)); nb = np.zeros((nf, k))
    tu = np.empty((nf, k)); tv = np.empty(nf)
    cdef double[:, ::1] U = u, S = s, B = beta, NB = nb, TU = tu
    cdef double[::1] V = v, AW = aw, W = w, CV = cum_v, TV = tv
    ones_m = np.ones(m)
    cdef double[::1] OM = ones_m
    cdef int i, j, t, rounds
    cdef double delta, val, rho
    cdef double changes[64]
    cdef int nch = 0
    cdef bint converged = 0, allv

    _gemm(nf, m, k, &A2[0, 0], m, 0, &LV[0, 0], k, 0, &U[0, 0], k, 0.0)
    _gemv(nf, m, &A2[0, 0], m, 0, &OM[0], &V[0])
    for i in range(nf):
        AW[i] = 0.0
        for j in range(nf):
            AW[i] += A1[i, j]
        CV[i] = V[i]
        W[i] = AW[i] + CV[i]
    memcpy(&S[0, 0], &U[0, 0], nf * k * sizeof(double))
    for i in range(nf):
        for j in range(k):
            B[i, j] = U[i, j] / V[i] if V[i] > 0.0 else 0.0
    rounds = 1
    if tail_window > 60:
        tail_window = 60
    for t in range(2, max_rounds + 1):
        _gemm(nf, nf, k, &A1[0, 0], nf, 0, &U[0, 0], k, 0, &TU[0, 0], k, 0.0)
        memcpy(&U[0, 0], &TU[0, 0], nf * k * sizeof(double))
        _gemv(nf, nf, &A1[0, 0], nf, 0, &V[0], &TV[0])
        memcpy(&V[0], &TV[0], nf * sizeof(double))
        _gemv(nf, nf, &A1[0, 0], nf, 0, &AW[0], &TV[0])
        memcpy(&AW[0], &TV[0], nf * sizeof(double))
        delta = 0.0
        allv = 1
        for i in range(nf):
            CV[i] += V[i]
            W[i] = AW[i] + CV[i]
            if V[i] <= 0.0:
                allv = 0
            for j in range(k):
                S[i, j] += U[i, j]
                val = U[i, j] / V[i] if V[i] > 0.0 else 0.0
                if fabs(val - B[i, j]) > delta:
                    delta = fabs(val - B[i, j])
                B[i, j] = val
        if nch < 64:
            changes[nch] = delta
            nch += 1
        else:
            for i in range(63):
                changes[i] = changes[i + 1]
            changes[63] = delta
        rounds = t
        if allv and delta <= gamma:
            if delta == 0.0:
                converged = 1
                break
            if nch > tail_window and changes[nch - 1 - tail_window] > 0.0:
                rho = (delta / changes[nch - 1 - tail_window]) ** (1.0 / tail_window)
                if rho < 1.0 and delta * rho / (1.0 - rho) <= tail_margin * gamma:
                    converged = 1
                    break
    return beta, u, v, s, w, rounds, bool(converged)
