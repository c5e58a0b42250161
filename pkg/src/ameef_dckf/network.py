"""Distributed estimation across the sensor network: per-node local
filtering, push-sum fusion of the information statistics, and the common
posterior update.

Every sensing node acts as a consensus leader injecting its information
packet while simultaneously running a follower state; the sums needed by
the information-form posterior are recovered as (node count) times the
converged follower average. Fusion runs componentwise on the stacked
vector [D | upper-triangle(V)].
"""

from dataclasses import dataclass, field

import numpy as np

from . import _accel, ckf, consensus, noise
from .errors import AmeefDckfError, ParameterError
from .kernels import KernelParams

VARIANTS = ("DCKF", "MCC-DCKF", "MEE-DCKF", "MEEF-DCKF", "AMEEF-DCKF")

INNOVATION_WINDOW = 20

_TRIU_CACHE = {}


def _triu(n):
    if n not in _TRIU_CACHE:
        _TRIU_CACHE[n] = np.triu_indices(n)
    return _TRIU_CACHE[n]


def kernel_for_variant(variant, eta=0.5, sigma_fixed=2.0, sigma_max=50.0,
                       sigma_min=None, fp_tol=1e-10, fp_max_iter=20,
                       pi_variant="theta_form"):
    """KernelParams (or None) selecting the algorithm variant.

    DCKF short-circuits to identity weights; MCC/MEE/MEEF use the fixed
    width sigma_fixed with eta 1 / 0 / eta; the adaptive variant treats
    sigma_max as the shared bandwidth ceiling of both kernels.
    """
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; known: {VARIANTS}")
    if variant == "DCKF":
        return None
    if sigma_min is None:
        sigma_min = 1e-2 * sigma_max
    common = dict(sigma_min=sigma_min, sigma_max=sigma_max, fp_tol=fp_tol,
                  fp_max_iter=fp_max_iter, pi_variant=pi_variant)
    if variant == "MCC-DCKF":
        return KernelParams(eta=1.0, sigma1=sigma_fixed, sigma2=sigma_fixed,
                            adaptive=False, **common)
    if variant == "MEE-DCKF":
        return KernelParams(eta=0.0, sigma1=sigma_fixed, sigma2=sigma_fixed,
                            adaptive=False, **common)
    if variant == "MEEF-DCKF":
        return KernelParams(eta=eta, sigma1=sigma_fixed, sigma2=sigma_fixed,
                            adaptive=False, **common)
    return KernelParams(eta=eta, sigma1=sigma_max, sigma2=sigma_max,
                        adaptive=True, **common)


@dataclass
class NodeRuntime:
    """One sensing node: its measurement model, carried estimate, the
    algorithm variant and the innovation window feeding the adaptive
    bandwidth ceiling."""

    node_id: int
    model: ckf.SystemModel
    estimate: ckf.StateEstimate
    variant: str = "AMEEF-DCKF"
    kernel: KernelParams = None
    role: str = "both"
    window_size: int = INNOVATION_WINDOW

    def __post_init__(self):
        m = self.model.r_cov.shape[0]
        self._window = np.empty((self.window_size, m))
        self._window_fill = 0
        self._window_pos = 0
        self._unavailable = np.full(m, -1.0)

    def push_innovation(self, innovation):
        self._window[self._window_pos] = innovation
        self._window_pos = (self._window_pos + 1) % self.window_size
        if self._window_fill < self.window_size:
            self._window_fill += 1

    def r_tilde(self):
        """Sliding-window sample variance of innovations, -1 if unfilled."""
        if self._window_fill < self.window_size:
            return self._unavailable
        return self._window.var(axis=0)


@dataclass
class FusionPacket:
    """Per-node information statistics published to the consensus layer."""

    d_i: np.ndarray
    v_i: np.ndarray

    def stack(self):
        iu = _triu(self.d_i.size)
        return np.concatenate([self.d_i, self.v_i[iu]])

    @staticmethod
    def unstack(vec, n):
        d = np.asarray(vec[:n])
        iu = _triu(n)
        v = np.zeros((n, n))
        v[iu] = vec[n:]
        v.T[iu] = vec[n:]
        return FusionPacket(d_i=d, v_i=v)


@dataclass
class StepDiagnostics:
    """Per-step bookkeeping returned by distributed_step."""

    consensus_rounds: int
    consensus_converged: bool
    iterations: list
    node_converged: list
    node_failed: list
    agreement_spread: float
    sigma_scale: list


def _kernel_cfg(kernel):
    if kernel is None:
        return dict(eta=1.0, sigma1=1.0, sigma2=1.0, sigma_min=0.5,
                    sigma_max=1.0, adaptive=False, eq39=False, identity=True,
                    fp_tol=1e-10, fp_max_iter=1)
    return dict(eta=kernel.eta, sigma1=kernel.sigma1, sigma2=kernel.sigma2,
                sigma_min=kernel.sigma_min, sigma_max=kernel.sigma_max,
                adaptive=kernel.adaptive,
                eq39=kernel.pi_variant == "eq39_form", identity=False,
                fp_tol=kernel.fp_tol, fp_max_iter=kernel.fp_max_iter)


def _local_stage(node, pred, y):
    """Per-node prediction-to-statistics stage; returns the update dict."""
    model = node.model
    cfg = _kernel_cfg(node.kernel)
    if model.is_linear:
        return _accel.node_update_linear(
            pred.mean, pred.cov, model.h_matrix, model.r_cov,
            np.asarray(y, dtype=np.float64), cfg["eta"], cfg["sigma1"],
            cfg["sigma2"], cfg["sigma_min"], cfg["sigma_max"],
            node.r_tilde(), cfg["adaptive"], cfg["eq39"], cfg["identity"],
            cfg["fp_tol"], cfg["fp_max_iter"])
    moments = ckf.measurement_moments(pred, model)
    reg = ckf.build_regression(pred, y, moments, model)
    res = ckf.fixed_point_update(reg, pred, node.kernel,
                                 r_tilde=node.r_tilde(),
                                 r_diag=np.diag(model.r_cov).copy())
    z = reg.innovation + reg.s_mat @ pred.mean
    ryy = res.r_yy_weighted
    return {
        "s_mat": reg.s_mat, "z": z, "innovation": reg.innovation,
        "r_yy_weighted": ryy, "iterations": res.iterations,
        "converged": res.converged, "degenerate": res.degenerate,
        "sigma1": res.sigma1, "sigma2": res.sigma2,
        "d_stat": reg.s_mat.T @ (ryy @ z),
        "v_stat": reg.s_mat.T @ ryy @ reg.s_mat,
    }


def distributed_step(nodes, net, y_all, gamma=1e-6, max_rounds=None):
    """One synchronous filtering instant across the network.

    All nodes share the transition model and prior convention; each runs
    its local prediction and fixed-point stage, publishes its information
    packet as a consensus leader value, and applies the fused posterior.
    A failed node contributes zero statistics (flagged); consensus
    non-convergence completes the step with the last iterate (flagged).
    """
    n_nodes = len(nodes)
    n = nodes[0].estimate.dim

    iterations, conv_flags, failed, sigma_scale = [], [], [], []
    packets, innovations, preds = [], [], []
    for node in nodes:
        if node.model.is_linear:
            x_pred, p_pred = _accel.predict_linear(
                node.estimate.mean, node.estimate.cov,
                node.model.f_matrix, node.model.q_cov)
            pred = ckf.StateEstimate(x_pred, p_pred)
        else:
            pred = ckf.predict(node.estimate, node.model)
        preds.append(pred)
        try:
            res = _local_stage(node, pred, y_all[node.node_id])
            if res["degenerate"]:
                raise AmeefDckfError("degenerate local update")
            packets.append(FusionPacket(res["d_stat"], res["v_stat"]))
            iterations.append(int(res["iterations"]))
            conv_flags.append(bool(res["converged"]))
            failed.append(False)
            innovations.append(res["innovation"])
            sigma_scale.append(float(res["sigma1"]))
        except AmeefDckfError:
            packets.append(FusionPacket(np.zeros(n), np.zeros((n, n))))
            iterations.append(0)
            conv_flags.append(False)
            failed.append(True)
            innovations.append(None)
    leader_values = np.stack([p.stack() for p in packets], axis=0)
    beta, rounds, conv = consensus.run_lfac(net, leader_values, gamma,
                                            max_rounds)
    m_leaders = net.n_leaders
    posteriors = []
    for i, node in enumerate(nodes):
        pred = preds[i]
        fused = FusionPacket.unstack(m_leaders * beta[i], n)
        x_post, p_post = _accel.info_posterior(pred.mean, pred.cov,
                                               fused.d_i, fused.v_i)
        posteriors.append(ckf.StateEstimate(x_post, p_post))
    spread = max(
        float(np.abs(posteriors[i].mean - posteriors[0].mean).max())
        for i in range(n_nodes))
    for node, post, innov in zip(nodes, posteriors, innovations):
        node.estimate = post
        if innov is not None:
            node.push_innovation(innov)
    return StepDiagnostics(consensus_rounds=rounds, consensus_converged=conv,
                           iterations=iterations, node_converged=conv_flags,
                           node_failed=failed, agreement_spread=spread,
                           sigma_scale=sigma_scale)


@dataclass
class TrajectoryRecord:
    """Full record of one simulated run."""

    truth: np.ndarray
    estimates: np.ndarray
    monitored_node: int
    iterations: np.ndarray
    consensus_rounds: np.ndarray
    consensus_converged: np.ndarray
    node_failures: int
    agreement_spread: np.ndarray


def run_trajectory(nodes, net, scenario, rng_seed, variant=None):
    """Simulate the truth, generate per-node measurements and run one
    distributed trajectory; errors are recorded per step, never aborting.

    Noise streams derive from (rng_seed): child 0 drives the process
    noise, child i+1 node i's measurement noise, so runs are reproducible
    and algorithm variants see identical realizations.
    """
    horizon = scenario.horizon
    n = scenario.x0.size
    ss = rng_seed if isinstance(rng_seed, np.random.SeedSequence) \
        else np.random.SeedSequence(rng_seed)
    children = ss.spawn(1 + len(nodes))
    rng_q = np.random.default_rng(children[0])
    rng_nodes = [np.random.default_rng(c) for c in children[1:]]
    lq = ckf.robust_cholesky(scenario.q_cov)

    x_true = scenario.x0.copy()
    truth = np.empty((horizon, n))
    estimates = np.empty((horizon, n))
    iters = np.empty(horizon)
    rounds = np.empty(horizon, dtype=int)
    conv = np.empty(horizon, dtype=bool)
    spread = np.empty(horizon)
    failures = 0
    monitor = scenario.monitor_node
    f_mat = nodes[0].model.f_matrix
    for t in range(horizon):
        q = lq @ rng_q.standard_normal(n)
        if f_mat is not None:
            x_true = f_mat @ x_true + q
        else:
            x_true = np.asarray(nodes[0].model.f(x_true)) + q
        y_all = {}
        for node, rng_i in zip(nodes, rng_nodes):
            h = node.model.h_matrix
            clean = h @ x_true if h is not None else np.asarray(node.model.h(x_true))
            m = clean.size
            y_all[node.node_id] = clean + noise.sample(
                scenario.noise_specs[node.node_id], rng_i, m)
        diag = distributed_step(nodes, net, y_all, scenario.gamma,
                                scenario.max_rounds)
        truth[t] = x_true
        estimates[t] = nodes[monitor].estimate.mean
        iters[t] = np.mean(diag.iterations)
        rounds[t] = diag.consensus_rounds
        conv[t] = diag.consensus_converged
        spread[t] = diag.agreement_spread
        failures += sum(diag.node_failed)
    return TrajectoryRecord(truth=truth, estimates=estimates,
                            monitored_node=monitor, iterations=iters,
                            consensus_rounds=rounds, consensus_converged=conv,
                            node_failures=failures, agreement_spread=spread)


def make_nodes(scenario, variant):
    """Node runtimes for one scenario and algorithm variant."""
    kern = kernel_for_variant(variant, **scenario.kernel_options)
    nodes = []
    for i, model in enumerate(scenario.node_models()):
        est = ckf.StateEstimate(scenario.x_hat0.copy(), scenario.p0.copy())
        nodes.append(NodeRuntime(node_id=i, model=model, estimate=est,
                                 variant=variant, kernel=kern))
    return nodes
