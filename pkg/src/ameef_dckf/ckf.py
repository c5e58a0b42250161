"""Cubature Kalman prediction, statistical linearization, the whitened
regression model, the MEEF fixed-point measurement update and its
information-form counterpart used for distribution.

The measurement update rewrites the filtering step as a whitened linear
regression d = W x + e (prior stacked on top of the linearized
measurement), reweights it with the MEEF matrices from
:mod:`ameef_dckf.kernels` and solves the stationarity condition by fixed
point. With identity weights the update reduces exactly to the standard
cubature Kalman filter.
"""

from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import ModelEvaluationError, ParameterError, SingularMatrixError

JITTER_LADDER = (1e-12, 1e-10, 1e-8, 1e-6, 1e-4)


@dataclass
class StateEstimate:
    """State mean and symmetric positive-definite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        n = self.mean.size
        if self.cov.shape != (n, n):
            raise ParameterError(
                f"covariance shape {self.cov.shape} does not match state size {n}")

    @property
    def dim(self):
        return self.mean.size

    def validate(self, sym_tol=1e-10):
        """Check symmetry (relative) and positive definiteness."""
        scale = max(float(np.abs(self.cov).max()), 1e-300)
        asym = float(np.abs(self.cov - self.cov.T).max()) / scale
        if asym > sym_tol:
            raise ParameterError(f"covariance asymmetry {asym:.2e} above {sym_tol:.0e}")
        robust_cholesky(self.cov)
        return self

    def copy(self):
        return StateEstimate(self.mean.copy(), self.cov.copy())


@dataclass
class SystemModel:
    """State-transition map f, per-node measurement map h and the noise
    covariances. Maps take a single state vector; set `vectorized` when
    they also accept a (points, n) batch (rows are states)."""

    f: callable
    h: callable
    q_cov: np.ndarray
    r_cov: np.ndarray
    vectorized: bool = False
    f_matrix: np.ndarray = None
    h_matrix: np.ndarray = None

    def __post_init__(self):
        self.q_cov = np.asarray(self.q_cov, dtype=np.float64)
        self.r_cov = np.asarray(self.r_cov, dtype=np.float64)
        if self.f_matrix is not None:
            self.f_matrix = np.asarray(self.f_matrix, dtype=np.float64)
        if self.h_matrix is not None:
            self.h_matrix = np.asarray(self.h_matrix, dtype=np.float64)

    @property
    def is_linear(self):
        return self.f_matrix is not None and self.h_matrix is not None


def linear_model(f_matrix, h_matrix, q_cov, r_cov):
    """SystemModel for x' = F x, y = H x with vectorized batch maps."""
    f_mat = np.asarray(f_matrix, dtype=np.float64)
    h_mat = np.asarray(h_matrix, dtype=np.float64)
    return SystemModel(
        f=lambda x: x @ f_mat.T,
        h=lambda x: x @ h_mat.T,
        q_cov=q_cov,
        r_cov=r_cov,
        vectorized=True,
        f_matrix=f_mat,
        h_matrix=h_mat,
    )


@dataclass
class RegressionModel:
    """Whitened regression d = W x + e for one measurement update.

    xi_p and xi_r are the lower Cholesky factors of the predicted state
    covariance and the effective measurement covariance; s_mat is the
    statistically linearized pseudo-measurement matrix; y_pred and
    p_yy_diag feed the adaptive bandwidth rule; innovation = y - y_pred.
    """

    d: np.ndarray
    w: np.ndarray
    xi_p: np.ndarray
    xi_r: np.ndarray
    s_mat: np.ndarray
    y_pred: np.ndarray
    p_yy_diag: np.ndarray
    innovation: np.ndarray

    @property
    def n(self):
        return self.xi_p.shape[0]

    @property
    def m(self):
        return self.xi_r.shape[0]


@dataclass
class FixedPointResult:
    """Outcome of the fixed-point measurement update."""

    estimate: StateEstimate
    gain: np.ndarray
    iterations: int
    converged: bool
    degenerate: bool
    sigma1: float
    sigma2: float
    r_yy_weighted: np.ndarray
    r_eff: np.ndarray


def robust_cholesky(p, return_jitter=False):
    """Lower Cholesky factor with a diagonal-jitter ladder fallback.

    Tries the plain factorization first; on failure adds eps*I with eps
    stepping through JITTER_LADDER scaled by trace(p)/n until one
    succeeds. Raises SingularMatrixError (with condition diagnostics)
    when the whole ladder fails.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {p.shape}")
    try:
        l = np.linalg.cholesky(p)
        return (l, 0.0) if return_jitter else l
    except np.linalg.LinAlgError:
        pass
    n = p.shape[0]
    scale = abs(float(np.trace(p))) / n
    if scale == 0.0:
        scale = 1.0
    for rung in JITTER_LADDER:
        eps = rung * scale
        try:
            l = np.linalg.cholesky(p + eps * np.eye(n))
            return (l, eps) if return_jitter else l
        except np.linalg.LinAlgError:
            continue
    try:
        cond = float(np.linalg.cond(p))
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise SingularMatrixError(
        f"Cholesky failed after maximum jitter {JITTER_LADDER[-1]:g}*trace/n "
        f"(condition estimate {cond:.3e})", matrix=p, condition=cond)


def cubature_points(est):
    """2n symmetric cubature points, rows of a (2n, n) array.

    Point i is mean + sqrt(n) * (column i of the Cholesky factor) for
    i < n and the mirrored point for i >= n, so the sample mean equals
    est.mean exactly and the sample covariance reconstructs est.cov.
    """
    s = robust_cholesky(est.cov)
    n = est.dim
    span = np.sqrt(n) * s.T
    return np.concatenate([est.mean + span, est.mean - span], axis=0)


def _apply_map(fn, points, vectorized, what):
    if vectorized:
        out = np.asarray(fn(points), dtype=np.float64)
    else:
        out = np.asarray([fn(p) for p in points], dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ModelEvaluationError(f"{what} returned non-finite values")
    return out


def predict(est, model):
    """Cubature prediction: propagate the points through f, average, and
    add the process noise covariance."""
    pts = cubature_points(est)
    prop = _apply_map(model.f, pts, model.vectorized, "state transition")
    mean = prop.mean(axis=0)
    dev = prop - mean
    cov = dev.T @ dev / pts.shape[0] + model.q_cov
    return StateEstimate(mean, 0.5 * (cov + cov.T))


def measurement_moments(pred, model):
    """Predicted measurement, cross-covariance and innovation covariance.

    p_yy includes the additive measurement noise and its diagonal drives
    the adaptive bandwidth rule.
    """
    pts = cubature_points(pred)
    meas = _apply_map(model.h, pts, model.vectorized, "measurement map")
    y_pred = meas.mean(axis=0)
    dev_x = pts - pred.mean
    dev_y = meas - y_pred
    p_xy = dev_x.T @ dev_y / pts.shape[0]
    p_yy = dev_y.T @ dev_y / pts.shape[0] + model.r_cov
    return y_pred, p_xy, 0.5 * (p_yy + p_yy.T)


def statistical_linearization(p_xx_pred, p_xy):
    """Pseudo-measurement matrix S = P_xy^T P_xx^{-1}.

    For a linear map h(x) = Hx the cubature moments give S = H.
    """
    l = robust_cholesky(p_xx_pred)
    half = np.linalg.solve(l, p_xy)
    return np.linalg.solve(l.T, half).T


def build_regression(pred, y, moments, model, inflate_linearization_error=False):
    """Whitened regression stacking the prior on the linearized measurement.

    d = [Xi_p^{-1} x_pred ; Xi_r^{-1} (y - y_pred + S x_pred)] and
    W = [Xi_p^{-1} ; Xi_r^{-1} S]. The statistical-linearization residual
    is neglected by default (R_effective = R); with the flag set, the
    cubature residual p_yy - S P S^T - R inflates R_effective.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_pred, p_xy, p_yy = moments
    s_mat = statistical_linearization(pred.cov, p_xy)
    r_eff = model.r_cov
    if inflate_linearization_error:
        resid = p_yy - s_mat @ pred.cov @ s_mat.T - model.r_cov
        r_eff = model.r_cov + 0.5 * (resid + resid.T)
    xi_p = robust_cholesky(pred.cov)
    xi_r = robust_cholesky(r_eff)
    innovation = y - y_pred
    z = innovation + s_mat @ pred.mean
    n = pred.dim
    d = np.concatenate([
        np.linalg.solve(xi_p, pred.mean),
        np.linalg.solve(xi_r, z),
    ])
    w = np.vstack([
        np.linalg.solve(xi_p, np.eye(n)),
        np.linalg.solve(xi_r, s_mat),
    ])
    return RegressionModel(d=d, w=w, xi_p=xi_p, xi_r=xi_r, s_mat=s_mat,
                           y_pred=y_pred, p_yy_diag=np.diag(p_yy).copy(),
                           innovation=innovation)


def fixed_point_update(reg, pred, params, r_tilde=None, r_diag=None):
    """MEEF fixed-point measurement update.

    Iterates from the predicted mean: recompute regression errors, rebuild
    the (normalized) weight matrix, form the gain and restart the update
    from the prior, until the relative mean change falls below fp_tol or
    the iteration cap. The posterior covariance uses the Joseph form with
    the effective (reweighted) measurement covariance, which keeps it
    consistent with the information-form update. `params=None` selects
    identity weighting: the exact standard CKF update in a single pass.

    r_tilde is the per-component sliding-window estimate of the observed
    measurement-noise variance (negative entries mean unavailable); when
    present together with the nominal diagonal r_diag it can tighten the
    adaptive bandwidth ceiling.

    Non-convergence returns the last iterate flagged; a singular weighted
    normal matrix falls back to the prior flagged degenerate.
    """
    m = reg.m
    if params is None:
        cfg = dict(eta=1.0, sigma1=1.0, sigma2=1.0, sigma_min=0.5, sigma_max=1.0,
                   adaptive=False, eq39=False, identity=True,
                   fp_tol=1e-10, fp_max_iter=1)
    else:
        cfg = dict(eta=params.eta, sigma1=params.sigma1, sigma2=params.sigma2,
                   sigma_min=params.sigma_min, sigma_max=params.sigma_max,
                   adaptive=params.adaptive,
                   eq39=params.pi_variant == "eq39_form", identity=False,
                   fp_tol=params.fp_tol, fp_max_iter=params.fp_max_iter)
    if r_tilde is None:
        r_tilde = np.full(m, -1.0)
    if r_diag is None:
        r_diag = np.zeros(m)
    res = _accel.fixed_point_core(
        pred.mean, reg.d, reg.w, reg.xi_p, reg.xi_r, reg.s_mat,
        reg.innovation, reg.p_yy_diag, cfg["eta"], cfg["sigma1"],
        cfg["sigma2"], cfg["sigma_min"], cfg["sigma_max"],
        np.asarray(r_tilde, dtype=np.float64),
        np.asarray(r_diag, dtype=np.float64), cfg["adaptive"],
        cfg["eq39"], cfg["identity"], cfg["fp_tol"], cfg["fp_max_iter"])
    return FixedPointResult(
        estimate=StateEstimate(res["x_post"], res["p_post"]),
        gain=res["gain"], iterations=res["iterations"],
        converged=res["converged"], degenerate=res["degenerate"],
        sigma1=res["sigma1"], sigma2=res["sigma2"],
        r_yy_weighted=res["r_yy_weighted"], r_eff=res["r_eff"])


def _hat_blocks(reg, pi):
    """Whitened weight blocks of the gain equations."""
    n, m = reg.n, reg.m
    ip = np.linalg.solve(reg.xi_p, np.eye(n))
    ir = np.linalg.solve(reg.xi_r, np.eye(m))
    p_hat = ip.T @ pi[:n, :n] @ ip
    p_yx = ip.T @ pi[:n, n:] @ ir
    p_xy = ir.T @ pi[n:, :n] @ ip
    r_yy = ir.T @ pi[n:, n:] @ ir
    return p_hat, p_yx, p_xy, r_yy


def gain_regression(reg, weights):
    """Gain in the weighted normal-equation form.

    K = [P_hat + P_yx S + S^T P_xy + S^T R_yy S]^{-1} [P_yx + S^T R_yy];
    with identity weights this is the textbook Kalman gain in
    information form.
    """
    p_hat, p_yx, p_xy, r_yy = _hat_blocks(reg, weights.pi)
    s = reg.s_mat
    m_mat = p_hat + p_yx @ s + s.T @ p_xy + s.T @ r_yy @ s
    return np.linalg.solve(m_mat, p_yx + s.T @ r_yy)


def gain_iml(reg, weights):
    """Gain via the matrix-inversion-lemma route.

    K = P_tilde^{-1} S_tilde (S P_tilde^{-1} S_tilde + R_yy^{-1})^{-1}
    with P_tilde = P_hat + S^T P_xy and S_tilde = P_yx R_yy^{-1} + S^T;
    equals `gain_regression` on any non-degenerate instance.
    """
    p_hat, p_yx, p_xy, r_yy = _hat_blocks(reg, weights.pi)
    s = reg.s_mat
    r_yy_inv = np.linalg.inv(r_yy)
    p_tilde = p_hat + s.T @ p_xy
    s_tilde = p_yx @ r_yy_inv + s.T
    pinv_stilde = np.linalg.solve(p_tilde, s_tilde)
    return pinv_stilde @ np.linalg.inv(s @ pinv_stilde + r_yy_inv)


def info_form_update(pred, s_mat, r_yy_weighted, y):
    """Information-form posterior from one (possibly fused) statistic set.

    P_post = (P_prior^{-1} + S^T R_w S)^{-1} and
    x_post = P_post (P_prior^{-1} x_prior + S^T R_w y), where R_w is the
    weighted measurement information matrix and y the effective
    (linearized) measurement y - y_pred + S x_prior.
    """
    s_mat = np.atleast_2d(np.asarray(s_mat, dtype=np.float64))
    r_w = np.atleast_2d(np.asarray(r_yy_weighted, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    l = robust_cholesky(pred.cov)
    p_inv = np.linalg.solve(l.T, np.linalg.solve(l, np.eye(pred.dim)))
    info = p_inv + s_mat.T @ r_w @ s_mat
    li = robust_cholesky(0.5 * (info + info.T))
    p_post = np.linalg.solve(li.T, np.linalg.solve(li, np.eye(pred.dim)))
    x_post = p_post @ (p_inv @ pred.mean + s_mat.T @ (r_w @ y))
    return StateEstimate(x_post, 0.5 * (p_post + p_post.T))


def local_statistics(s_mat_i, r_yy_weighted_i, y_i):
    """Per-node information statistics D_i = S^T R_w y and V_i = S^T R_w S."""
    s = np.atleast_2d(np.asarray(s_mat_i, dtype=np.float64))
    r_w = np.atleast_2d(np.asarray(r_yy_weighted_i, dtype=np.float64))
    y = np.asarray(y_i, dtype=np.float64).reshape(-1)
    d_i = s.T @ (r_w @ y)
    v_i = s.T @ r_w @ s
    return d_i, 0.5 * (v_i + v_i.T)
