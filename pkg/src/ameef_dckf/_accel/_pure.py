"""Pure-NumPy implementation of the numeric hot path.

Mirrors the compiled extension `_core` function-for-function; selected at
import time by :mod:`ameef_dckf._accel` when the extension is unavailable
(or forced via ``AMEEF_DCKF_PURE=1``).
"""

import numpy as np

BACKEND_NAME = "python"

_TINY = 1e-300


def cauchy_vec(e, sigma):
    """Elementwise Cauchy kernel 1 / (1 + e^2 / sigma)."""
    e = np.asarray(e, dtype=np.float64)
    return 1.0 / (1.0 + e * e / sigma)


def theta_core(errors, eta1, eta2, sigma1, sigma2):
    """Raw MEEF weight pieces for an error vector.

    Returns (omega_diag, psi, phi_diag, theta): the fiducial diagonal,
    the pairwise kernel matrix psi[i, j] = C(e_j - e_i), its row sums and
    theta = eta1*diag(omega) + eta2*(diag(phi) - psi).
    """
    e = np.asarray(errors, dtype=np.float64)
    omega = cauchy_vec(e, sigma1)
    psi = cauchy_vec(e[None, :] - e[:, None], sigma2)
    phi = psi.sum(axis=1)
    theta = eta2 * (np.diag(phi) - psi)
    theta[np.diag_indices_from(theta)] += eta1 * omega
    return omega, psi, phi, theta


def _pi_normalized(errors, eta, sigma1, sigma2, eq39):
    """Fixed-point weight matrix scaled so a zero-error vector maps to I."""
    N = errors.size
    eta1 = eta / (sigma1 * sigma1)
    eta2 = (1.0 - eta) / (sigma2 * sigma2)
    omega, psi, phi, theta = theta_core(errors, eta1, eta2, sigma1, sigma2)
    if eq39:
        phi_m = np.diag(phi)
        pi = eta2 * (phi_m.T @ phi_m + psi.T @ psi)
        pi[np.diag_indices_from(pi)] += eta1 * omega
        c0 = eta1 + eta2 * (N * N + N)
    else:
        pi = theta
        c0 = eta1 + eta2 * (N - 1)
    if c0 <= 0.0:
        return None
    return pi / c0


def resolve_sigmas(innovation, p_yy_diag, sigma1, sigma2, sigma_min, sigma_max,
                   r_tilde, r_diag):
    """Per-step adaptive bandwidths: both widths scaled by the same factor.

    Each measurement component gets a ceiling (sigma_max, tightened by the
    observed-noise bound when the window estimate r_tilde is available and
    the bound is non-vacuous) and a clamped factor
    phi_i = 1 - exp(-P_i / y_i^2); the overall scale is the smallest
    resulting bandwidth relative to sigma_max.
    """
    lo = sigma_min / sigma_max
    worst = sigma_max
    for i in range(innovation.size):
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
            phi = 1.0 - np.exp(-p_yy_diag[i] / y2)
        phi = min(max(phi, lo), 1.0)
        s_i = min(max(phi * ceil_i, sigma_min), sigma_max)
        worst = min(worst, s_i)
    scale = worst / sigma_max
    return scale * sigma1, scale * sigma2


def _chol(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def fixed_point_core(x_pred, d, w_mat, xi_p, xi_r, s_mat, innovation,
                     p_yy_diag, eta, sigma1, sigma2, sigma_min, sigma_max,
                     r_tilde, r_diag, adaptive, eq39, identity, fp_tol,
                     fp_max_iter):
    """MEEF fixed-point measurement update on the whitened regression.

    Returns a dict with the posterior, gain, weighted measurement
    information r_yy_weighted, effective measurement covariance r_eff,
    iteration count, convergence/degeneracy flags and the bandwidths used.
    """
    n = x_pred.size
    m = innovation.size
    ip = np.linalg.solve(xi_p, np.eye(n))
    ir = np.linalg.solve(xi_r, np.eye(m))
    p_prior = xi_p @ xi_p.T

    if adaptive and not identity:
        s1, s2 = resolve_sigmas(innovation, p_yy_diag, sigma1, sigma2,
                                sigma_min, sigma_max, r_tilde, r_diag)
    else:
        s1, s2 = sigma1, sigma2

    def degenerate_result():
        return {
            "x_post": x_pred.copy(), "gain": np.zeros((n, m)),
            "p_post": p_prior.copy(),
            "r_yy_weighted": ir.T @ ir, "r_eff": xi_r @ xi_r.T,
            "iterations": 0, "converged": False, "degenerate": True,
            "sigma1": s1, "sigma2": s2,
        }

    x = x_pred.copy()
    gain = np.zeros((n, m))
    ryy = None
    converged = False
    iterations = 0
    for k in range(1, fp_max_iter + 1):
        iterations = k
        if identity:
            pi = np.eye(n + m)
        else:
            e = d - w_mat @ x
            pi = _pi_normalized(e, eta, s1, s2, eq39)
            if pi is None:
                return degenerate_result()
        p_hat = ip.T @ pi[:n, :n] @ ip
        p_yx = ip.T @ pi[:n, n:] @ ir
        p_xy = ir.T @ pi[n:, :n] @ ip
        ryy = ir.T @ pi[n:, n:] @ ir
        m_mat = p_hat + p_yx @ s_mat + s_mat.T @ p_xy + s_mat.T @ ryy @ s_mat
        rhs = p_yx + s_mat.T @ ryy
        lm = _chol(0.5 * (m_mat + m_mat.T))
        if lm is None:
            return degenerate_result()
        gain = np.linalg.solve(lm.T, np.linalg.solve(lm, rhs))
        x_new = x_pred + gain @ innovation
        rel = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), _TINY)
        x = x_new
        if rel <= fp_tol:
            converged = True
            break
        if identity:
            converged = True
            break

    lr = _chol(0.5 * (ryy + ryy.T))
    if lr is None:
        return degenerate_result()
    r_eff = np.linalg.solve(lr.T, np.linalg.solve(lr, np.eye(m)))
    imks = np.eye(n) - gain @ s_mat
    p_post = imks @ p_prior @ imks.T + gain @ r_eff @ gain.T
    p_post = 0.5 * (p_post + p_post.T)
    return {
        "x_post": x, "gain": gain, "p_post": p_post,
        "r_yy_weighted": 0.5 * (ryy + ryy.T), "r_eff": r_eff,
        "iterations": iterations, "converged": converged, "degenerate": False,
        "sigma1": s1, "sigma2": s2,
    }


def predict_linear(x, p, f_mat, q_cov):
    """Cubature prediction through a linear transition matrix."""
    n = x.size
    sqrt_n = np.sqrt(n)
    s0 = _chol(p)
    if s0 is None:
        raise FloatingPointError("prior covariance not positive definite")
    pts = x[None, :] + sqrt_n * np.concatenate([s0.T, -s0.T], axis=0)
    prop = pts @ f_mat.T
    x_pred = prop.mean(axis=0)
    dev = prop - x_pred
    p_pred = dev.T @ dev / (2 * n) + q_cov
    return x_pred, 0.5 * (p_pred + p_pred.T)


def moments_linear(x_pred, p_pred, h_mat, r_cov):
    """Cubature measurement moments through a linear observation matrix.

    Returns (y_pred, p_xy, p_yy, xi_p) with xi_p the Cholesky factor of
    p_pred reused by the regression builder.
    """
    n = x_pred.size
    sqrt_n = np.sqrt(n)
    xi_p = _chol(p_pred)
    if xi_p is None:
        raise FloatingPointError("predicted covariance not positive definite")
    pts = x_pred[None, :] + sqrt_n * np.concatenate([xi_p.T, -xi_p.T], axis=0)
    meas = pts @ h_mat.T
    y_pred = meas.mean(axis=0)
    dev_x = pts - x_pred
    dev_y = meas - y_pred
    p_xy = dev_x.T @ dev_y / (2 * n)
    p_yy = dev_y.T @ dev_y / (2 * n) + r_cov
    return y_pred, p_xy, p_yy, xi_p


def node_update_linear(x_pred, p_pred, h_mat, r_cov, y, eta, sigma1, sigma2,
                       sigma_min, sigma_max, r_tilde, adaptive, eq39,
                       identity, fp_tol, fp_max_iter):
    """Complete per-node measurement stage for a linear observation model.

    Cubature moments, statistical linearization, whitened regression and
    the fixed-point update; returns the fusion statistics alongside the
    local posterior.
    """
    n = x_pred.size
    m = y.size
    y_pred, p_xy, p_yy, xi_p = moments_linear(x_pred, p_pred, h_mat, r_cov)
    s_mat = np.linalg.solve(p_pred, p_xy).T
    xi_r = _chol(r_cov)
    if xi_r is None:
        raise FloatingPointError("measurement covariance not positive definite")
    innovation = y - y_pred
    z = innovation + s_mat @ x_pred
    d = np.concatenate([
        np.linalg.solve(xi_p, x_pred),
        np.linalg.solve(xi_r, z),
    ])
    w_mat = np.vstack([
        np.linalg.solve(xi_p, np.eye(n)),
        np.linalg.solve(xi_r, s_mat),
    ])
    res = fixed_point_core(x_pred, d, w_mat, xi_p, xi_r, s_mat, innovation,
                           np.diag(p_yy).copy(), eta, sigma1, sigma2,
                           sigma_min, sigma_max, r_tilde, np.diag(r_cov).copy(),
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
    """Information-form posterior from fused statistics.

    P_post = (P_pred^{-1} + V)^{-1}, x_post = P_post (P_pred^{-1} x + D).
    """
    n = x_pred.size
    lp = np.linalg.cholesky(p_pred)
    p_inv = np.linalg.solve(lp.T, np.linalg.solve(lp, np.eye(n)))
    info = p_inv + v_sum
    li = np.linalg.cholesky(0.5 * (info + info.T))
    p_post = np.linalg.solve(li.T, np.linalg.solve(li, np.eye(n)))
    x_post = p_post @ (p_inv @ x_pred + d_sum)
    return x_post, 0.5 * (p_post + p_post.T)


def lfac_loop(a1, a2, leader_values, gamma, max_rounds, tail_window=5,
              tail_margin=0.25):
    """Push-sum rounds until the stop rule or the round cap.

    Leaders re-inject their initial values every round; beta is the ratio
    of the per-round mass increments, whose limit is the leader average.
    The stop rule requires every per-round beta change at or below gamma
    plus a geometric-tail bound keeping the remaining error below gamma.

    Returns (beta, u, v, s, w, rounds, converged).
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    lv = np.asarray(leader_values, dtype=np.float64)
    nf = a1.shape[0]
    m = a2.shape[1]
    u0 = a2 @ lv
    v0 = a2 @ np.ones(m)
    u = u0.copy()
    v = v0.copy()
    aw = a1 @ np.ones(nf)
    cum_v = v.copy()
    s = u.copy()
    w = aw + cum_v
    beta = np.where(v[:, None] > 0.0, u / np.where(v[:, None] > 0.0, v[:, None], 1.0), 0.0)
    changes = []
    rounds = 1
    converged = False
    for t in range(2, max_rounds + 1):
        u = a1 @ u
        v = a1 @ v
        aw = a1 @ aw
        cum_v += v
        s += u
        w = aw + cum_v
        nb = np.where(v[:, None] > 0.0, u / np.where(v[:, None] > 0.0, v[:, None], 1.0), 0.0)
        delta = float(np.abs(nb - beta).max())
        changes.append(delta)
        beta = nb
        rounds = t
        if (v > 0.0).all() and delta <= gamma:
            if delta == 0.0:
                converged = True
                break
            if len(changes) > tail_window and changes[-1 - tail_window] > 0.0:
                rho = (delta / changes[-1 - tail_window]) ** (1.0 / tail_window)
                if rho < 1.0 and delta * rho / (1.0 - rho) <= tail_margin * gamma:
                    converged = True
                    break
    return beta, u, v, s, w, rounds, converged
