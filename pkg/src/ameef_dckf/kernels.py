"""Cauchy kernel evaluation, the MEEF cost and its weight matrices, and the
adaptive bandwidth rule.

The Cauchy kernel here is C_sigma(e) = 1 / (1 + e^2 / sigma) with the width
sigma entering linearly. The MEEF cost mixes a fiducial correntropy term
anchored at zero error with a pairwise error-entropy term:

    J(e) = eta * sum_j C_s1(e_j) + (1 - eta) * sum_ij C_s2(e_j - e_i)

eta = 1 reduces to pure correntropy (MCC), eta = 0 to the pure pairwise
entropy criterion (MEE). Stationarity of J leads to weight matrices built
from kernel evaluations: a fiducial diagonal Omega, a pairwise matrix Psi
with row sums Phi, and Theta = eta1*Omega + eta2*(Phi - Psi), with
eta1 = eta/sigma1^2 and eta2 = (1-eta)/sigma2^2. Phi - Psi is the weighted
Laplacian of the complete graph on the errors, so Theta is symmetric PSD.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import ParameterError

PI_THETA_FORM = "theta_form"
PI_EQ39_FORM = "eq39_form"


@dataclass
class KernelParams:
    """Kernel configuration selecting the algorithm variant.

    eta in [0, 1] mixes the fiducial and pairwise terms; sigma1/sigma2 are
    the kernel widths (acting as ceilings when `adaptive`); sigma_min and
    sigma_max clamp the adaptive bandwidth; fp_tol / fp_max_iter control
    the fixed-point iteration; pi_variant selects how the fixed-point
    weight matrix Pi is assembled (theta_form uses Theta itself, eq39_form
    the alternative printed composition, kept for literature comparison).
    """

    eta: float = 0.5
    sigma1: float = 2.0
    sigma2: float = 2.0
    sigma_min: float = 0.0
    sigma_max: float = 0.0
    adaptive: bool = False
    fp_tol: float = 1e-10
    fp_max_iter: int = 20
    pi_variant: str = PI_THETA_FORM

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must lie in [0, 1], got {self.eta}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ParameterError("kernel widths must be positive")
        if self.sigma_max == 0.0:
            self.sigma_max = max(self.sigma1, self.sigma2)
        if self.sigma_min == 0.0:
            self.sigma_min = 1e-2 * self.sigma_max
        if self.sigma_min <= 0 or self.sigma_max <= 0:
            raise ParameterError("bandwidth clamps must be positive")
        if self.sigma_min > self.sigma_max:
            raise ParameterError("sigma_min must not exceed sigma_max")
        if self.fp_tol <= 0:
            raise ParameterError("fp_tol must be positive")
        if self.fp_max_iter < 1:
            raise ParameterError("fp_max_iter must be a positive integer")
        if self.pi_variant not in (PI_THETA_FORM, PI_EQ39_FORM):
            raise ParameterError(f"unknown pi_variant {self.pi_variant!r}")

    @property
    def eta1(self):
        return self.eta / (self.sigma1 * self.sigma1)

    @property
    def eta2(self):
        return (1.0 - self.eta) / (self.sigma2 * self.sigma2)


@dataclass
class WeightMatrices:
    """Weight matrices of the MEEF stationarity condition for one error
    vector: the fiducial diagonal Omega, pairwise Psi, its row-sum diagonal
    Phi, Theta, and the fixed-point matrix Pi."""

    omega: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    pi: np.ndarray
    eta1: float
    eta2: float


def cauchy_kernel(e, sigma):
    """Cauchy kernel C_sigma(e) = 1 / (1 + e^2 / sigma); peak 1 at e = 0."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    return 1.0 / (1.0 + e * e / sigma)


def meef_cost(errors, params):
    """MEEF objective for an error sample vector.

    J = eta * sum_j C_s1(e_j) + (1-eta) * sum_i sum_j C_s2(e_j - e_i);
    the double sum includes the i = j terms, each contributing C(0) = 1.
    """
    e = _check_errors(errors)
    fid = float(np.sum(_accel.cauchy_vec(e, params.sigma1)))
    pair = float(np.sum(_accel.cauchy_vec(e[None, :] - e[:, None], params.sigma2)))
    return params.eta * fid + (1.0 - params.eta) * pair


def meef_cost_gradient(errors, params):
    """Exact gradient dJ/de_j of the MEEF objective.

    dC_sigma/de = -(2e/sigma) * C_sigma(e)^2, so
    dJ/de_j = eta*C'_s1(e_j) + 2*(1-eta)*sum_i C'_s2(e_j - e_i).
    The fixed-point weights in `weight_matrices` use the customary
    plain-kernel surrogate rather than these squared-kernel terms.
    """
    e = _check_errors(errors)
    k1 = _accel.cauchy_vec(e, params.sigma1)
    g = -params.eta * (2.0 * e / params.sigma1) * k1 * k1
    diff = e[:, None] - e[None, :]
    k2 = _accel.cauchy_vec(diff, params.sigma2)
    g += -2.0 * (1.0 - params.eta) / params.sigma2 * np.sum(diff * k2 * k2, axis=1)
    return g


def weight_matrices(errors, params):
    """Assemble the MEEF weight matrices for one error vector.

    Omega[i,i] = C_s1(e_i); Psi[i,j] = C_s2(e_j - e_i); Phi[i,i] is the
    i-th row sum of Psi; Theta = eta1*Omega + eta2*(Phi - Psi). Pi follows
    params.pi_variant: Theta itself, or the eq39_form composition
    eta1*Omega + eta2*(Phi^T Phi + Psi^T Psi).
    """
    e = _check_errors(errors)
    n = e.size
    omega_d, psi, phi_d, theta = _accel.theta_core(
        e, params.eta1, params.eta2, params.sigma1, params.sigma2)
    omega = np.diag(omega_d)
    phi = np.diag(phi_d)
    if params.pi_variant == PI_EQ39_FORM:
        pi = params.eta2 * (phi.T @ phi + psi.T @ psi)
        pi[np.diag_indices(n)] += params.eta1 * omega_d
    else:
        pi = theta.copy()
    return WeightMatrices(omega=omega, phi=phi, psi=psi, theta=theta, pi=pi,
                          eta1=params.eta1, eta2=params.eta2)


def adaptive_bandwidth(p_yy_diag_i, innovation_i, params):
    """Bandwidth for one measurement component from its innovation.

    phi = 1 - exp(-P_i / y_i^2) clamped to [sigma_min/sigma_max, 1];
    returns sigma = phi * sigma_max in [sigma_min, sigma_max]. A zero
    innovation is the wide-band (Gaussian-regime) limit, sigma_max.
    """
    if not (np.isfinite(p_yy_diag_i) and np.isfinite(innovation_i)):
        raise ParameterError("non-finite adaptive-bandwidth inputs")
    if not p_yy_diag_i > 0:
        raise ParameterError("predicted innovation variance must be positive")
    y2 = innovation_i * innovation_i
    if y2 == 0.0:
        return params.sigma_max
    phi = 1.0 - math.exp(-p_yy_diag_i / y2)
    phi = min(max(phi, params.sigma_min / params.sigma_max), 1.0)
    return phi * params.sigma_max


def sigma_max_bound(r_tilde_i, p_i, r_i, innovation_norm_sq):
    """Upper bandwidth bound from the observed noise level, or None.

    q = (r_tilde - (p - r)) / (2r) - 1; the bound innovation_norm_sq / q
    applies only when q > 0, otherwise the constraint is vacuous and the
    caller falls back to its configured ceiling.
    """
    if not r_i > 0:
        raise ParameterError("nominal measurement variance must be positive")
    q = (r_tilde_i - (p_i - r_i)) / (2.0 * r_i) - 1.0
    if q <= 0.0:
        return None
    return innovation_norm_sq / q


def _check_errors(errors):
    e = np.asarray(errors, dtype=np.float64)
    if e.ndim != 1 or e.size < 1:
        raise ParameterError("errors must be a non-empty 1-D vector")
    return e
