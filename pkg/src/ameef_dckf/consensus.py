"""Directed sensor graphs, consensus weights and the push-sum
leader-follower average-consensus protocol.

Followers mix mass with column-stochastic weights (each follower splits
its mass over its follower out-neighbours and itself), leaders re-inject
their initial values every round through the column-stochastic coupling
block. The reported follower value is the ratio of the per-round mass
increments, which converges geometrically to the arithmetic mean of the
leader values on strongly connected follower subgraphs; the cumulative
sum and weight recursions are kept alongside for bookkeeping.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import (ParameterError, ProtocolViolationError, StepSizeError,
                     TopologyError)

TAIL_WINDOW = 5
TAIL_MARGIN = 0.25


@dataclass
class SensorGraph:
    """Directed graph with designated leader nodes.

    Edges are (src, dst) pairs meaning src is an in-neighbour of dst;
    node ids are 0-based and contiguous.
    """

    n: int
    edges: list
    leaders: list

    def __post_init__(self):
        self.leaders = sorted(set(int(i) for i in self.leaders))
        if not self.leaders:
            raise TopologyError("at least one leader is required")
        for i in self.leaders:
            if not 0 <= i < self.n:
                raise TopologyError(f"leader id {i} outside [0, {self.n})")
        for (s, t) in self.edges:
            if not (0 <= s < self.n and 0 <= t < self.n):
                raise TopologyError(f"edge ({s}, {t}) outside [0, {self.n})")
        if len(self.leaders) >= self.n:
            raise TopologyError("at least one follower is required")

    @property
    def followers(self):
        lead = set(self.leaders)
        return [i for i in range(self.n) if i not in lead]


@dataclass
class ConsensusNetwork:
    """Leader-follower consensus weights.

    a1 is the follower-to-follower mixing block (column sums 1),
    a2 the column-stochastic leader-to-follower coupling. Leaders are
    stationary: their rows of the full weight matrix are [0 | I].
    """

    n_total: int
    leaders: list
    followers: list
    edges: list
    a1: np.ndarray
    a2: np.ndarray
    alpha: float = 0.0

    @property
    def n_leaders(self):
        return len(self.leaders)

    @property
    def n_followers(self):
        return len(self.followers)

    @property
    def weights(self):
        """Full weight matrix in (followers, leaders) block order."""
        nf, m = self.n_followers, self.n_leaders
        a = np.zeros((nf + m, nf + m))
        a[:nf, :nf] = self.a1
        a[:nf, nf:] = self.a2
        a[nf:, nf:] = np.eye(m)
        return a

    def validate(self, tol=1e-9):
        col_a1 = self.a1.sum(axis=0)
        if np.abs(col_a1 - 1.0).max() > tol:
            raise TopologyError("follower mixing block is not column stochastic")
        if self.a1.min() < -tol:
            raise TopologyError("negative follower mixing weight")
        col_a2 = self.a2.sum(axis=0)
        if np.abs(col_a2 - 1.0).max() > tol:
            raise TopologyError("leader coupling block is not column stochastic")
        if self.a2.min() < -tol:
            raise TopologyError("negative leader coupling weight")
        rho = float(np.abs(np.linalg.eigvals(self.a1)).max()) if self.n_followers else 0.0
        if rho > 1.0 + 1e-8:
            raise TopologyError(f"follower block spectral radius {rho:.6f} above 1")
        return self


@dataclass
class PushSumState:
    """Per-follower push-sum bookkeeping for one consensus execution.

    s and w are the cumulative sum and weight recursions; u and v the
    per-round mass increments whose ratio is beta; aw tracks the mixed
    initial weight mass.
    """

    s: np.ndarray
    w: np.ndarray
    beta: np.ndarray
    round: int
    u: np.ndarray = None
    v: np.ndarray = None
    aw: np.ndarray = None


def follower_laplacians(graph):
    """Follower-subgraph Laplacian L1 (out-degree form, zero column sums)
    and the leader coupling block L2."""
    fol = graph.followers
    fidx = {v: k for k, v in enumerate(fol)}
    lidx = {v: k for k, v in enumerate(graph.leaders)}
    nf, m = len(fol), len(graph.leaders)
    l1 = np.zeros((nf, nf))
    l2 = np.zeros((nf, m))
    for (s, t) in graph.edges:
        if s == t:
            continue
        if t in fidx and s in fidx:
            l1[fidx[s], fidx[s]] += 1.0
            l1[fidx[t], fidx[s]] -= 1.0
        elif t in fidx and s in lidx:
            l2[fidx[t], lidx[s]] -= 1.0
    return l1, l2


def step_size_bound(l1):
    """Admissible step-size supremum min over eigenvalues with positive
    real part of 2 Re(l) / (Re(l)^2 + Im(l)^2)."""
    l1 = np.asarray(l1, dtype=np.float64)
    eig = np.linalg.eigvals(l1)
    candidates = [2.0 * ev.real / (ev.real ** 2 + ev.imag ** 2)
                  for ev in eig if ev.real > 1e-12]
    if not candidates:
        raise TopologyError("no Laplacian eigenvalue with positive real part")
    return float(min(candidates))


def build_weights(graph, alpha):
    """Consensus network from a directed sensor graph and a step size.

    A1 = I - alpha*L1 over the follower subgraph and A2 from the
    leader coupling, rescaled per column to sum to one. Requires every
    leader to feed at least one follower, every follower to be reachable
    from some leader, and alpha strictly below both the eigenvalue bound
    of `step_size_bound` and 1/max follower out-degree (which keeps the
    mixing weights non-negative with a positive diagonal).
    """
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    l1, l2 = follower_laplacians(graph)
    nf, m = l1.shape[0], l2.shape[1]
    col_mass = -l2.sum(axis=0)
    dead = [graph.leaders[j] for j in range(m) if col_mass[j] == 0.0]
    if dead:
        raise TopologyError(f"leaders {dead} have no follower out-edge")
    _check_reachability(graph)
    max_out = float(l1.diagonal().max()) if nf else 0.0
    if max_out > 0.0:
        bound = min(step_size_bound(l1), 1.0 / max_out)
        if alpha >= bound:
            raise StepSizeError(
                f"alpha {alpha:g} at or above the admissible bound {bound:g}")
    a1 = np.eye(nf) - alpha * l1
    a2 = -alpha * l2
    a2 = a2 / a2.sum(axis=0)
    net = ConsensusNetwork(n_total=graph.n, leaders=list(graph.leaders),
                           followers=graph.followers, edges=list(graph.edges),
                           a1=a1, a2=a2, alpha=alpha)
    return net.validate()


def _check_reachability(graph):
    fol = set(graph.followers)
    lead = set(graph.leaders)
    out = {}
    for (s, t) in graph.edges:
        out.setdefault(s, []).append(t)
    frontier = [t for l in lead for t in out.get(l, []) if t in fol]
    seen = set(frontier)
    while frontier:
        nxt = []
        for v in frontier:
            for t in out.get(v, []):
                if t in fol and t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    missing = sorted(fol - seen)
    if missing:
        raise TopologyError(f"followers {missing} unreachable from any leader")


def default_max_rounds(net):
    """Diameter-safe round cap, 10 * n_total^2."""
    return 10 * net.n_total * net.n_total


def lfac_round(state, net, leader_values):
    """One synchronous push-sum round.

    The cumulative recursions are s <- A1 s + A2 beta_L(0) and
    w <- A1 w + A2 1 (leaders re-inject every round); beta is the ratio
    of the per-round increments of s and w, zero where no leader mass
    has arrived yet. Starts from s = 0, w = 1 when `state` is None.
    """
    lv = np.atleast_2d(np.asarray(leader_values, dtype=np.float64))
    if lv.shape[0] != net.n_leaders:
        lv = lv.T
    nf = net.n_followers
    k = lv.shape[1]
    if state is None:
        state = PushSumState(
            s=np.zeros((nf, k)), w=np.ones(nf),
            beta=np.zeros((nf, k)), round=0,
            u=np.zeros((nf, k)), v=np.zeros(nf), aw=np.ones(nf))
    if state.round == 0:
        u = net.a2 @ lv
        v = net.a2 @ np.ones(net.n_leaders)
        aw = net.a1 @ state.aw
    else:
        u = net.a1 @ state.u
        v = net.a1 @ state.v
        aw = net.a1 @ state.aw
    s = net.a1 @ state.s + net.a2 @ lv
    cum_v = (state.w - state.aw) + v
    w = aw + cum_v
    if (w <= 0.0).any():
        raise ProtocolViolationError("push-sum weight dropped to zero or below")
    safe = v > 0.0
    beta = np.where(safe[:, None], u / np.where(safe[:, None], v[:, None], 1.0), 0.0)
    return PushSumState(s=s, w=w, beta=beta, round=state.round + 1,
                        u=u, v=v, aw=aw)


def run_lfac(net, leader_values, gamma, max_rounds=None):
    """Push-sum consensus over k parallel scalar problems.

    Rounds continue until every follower's per-round beta change is at or
    below gamma for all components (with a geometric-tail refinement that
    keeps the remaining error below gamma) or until max_rounds; returns
    (beta, rounds, converged) with beta of shape (followers, k).
    """
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    if max_rounds is None:
        max_rounds = default_max_rounds(net)
    lv = np.atleast_2d(np.asarray(leader_values, dtype=np.float64))
    if lv.shape[0] != net.n_leaders:
        lv = lv.T
    beta, _u, _v, _s, _w, rounds, converged = _accel.lfac_loop(
        np.ascontiguousarray(net.a1), np.ascontiguousarray(net.a2),
        np.ascontiguousarray(lv), float(gamma), int(max_rounds),
        TAIL_WINDOW, TAIL_MARGIN)
    return beta, rounds, converged


def iter_rounds(net, leader_values, max_rounds):
    """Yield (round, PushSumState) for trace emission."""
    state = None
    for _ in range(max_rounds):
        state = lfac_round(state, net, leader_values)
        yield state.round, state


def parse_graph_file(text, leaders_override=None):
    """Sensor graph from the plain-text edge-list format.

    One `src dst` pair per line plus a `leaders: i,j,k` line; `#` starts
    a comment. Node count is inferred from the largest id seen.
    `leaders_override` supplies the leader set when the file lacks the
    leaders line.
    """
    edges = []
    leaders = None
    n_max = -1
    if leaders_override is not None:
        n_max = max(leaders_override)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("leaders:"):
            body = line.split(":", 1)[1]
            leaders = [int(tok) for tok in body.replace(",", " ").split()]
            n_max = max([n_max] + leaders)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"line {lineno}: expected 'src dst', got {raw!r}")
        s, t = int(parts[0]), int(parts[1])
        edges.append((s, t))
        n_max = max(n_max, s, t)
    if leaders is None:
        leaders = leaders_override
    if leaders is None:
        raise TopologyError("missing 'leaders:' line")
    return SensorGraph(n=n_max + 1, edges=edges, leaders=leaders)


def complete_graph(n, leaders):
    """Fully connected bidirectional sensor graph."""
    edges = [(i, j) for i in range(n) for j in range(n) if i != j]
    return SensorGraph(n=n, edges=edges, leaders=leaders)


def ring_graph(n, leaders):
    """Bidirectional ring."""
    edges = []
    for i in range(n):
        edges.append((i, (i + 1) % n))
        edges.append(((i + 1) % n, i))
    return SensorGraph(n=n, edges=edges, leaders=leaders)


def leader_follower_overlay(n, edges):
    """Consensus graph for a sensor network where every physical node is
    simultaneously a leader (injecting its statistics) and a follower
    (tracking the average).

    Physical node i becomes leader i and follower n + i; each physical
    edge j -> i becomes a follower edge, and each leader feeds only its
    own follower.
    """
    overlay = [(i, n + i) for i in range(n)]
    overlay += [(n + s, n + t) for (s, t) in edges if s != t]
    return SensorGraph(n=2 * n, edges=overlay, leaders=list(range(n)))


def auto_alpha(graph, fraction=0.9):
    """Step size at `fraction` of the admissible bound for the graph."""
    l1, _ = follower_laplacians(graph)
    max_out = float(l1.diagonal().max()) if l1.size else 0.0
    if max_out == 0.0:
        return 0.5
    return fraction * min(step_size_bound(l1), 1.0 / max_out)
