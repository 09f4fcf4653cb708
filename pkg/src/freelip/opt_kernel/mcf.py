"""Uncapacitated min-cost flow by successive shortest paths."""
from __future__ import annotations

from dataclasses import dataclass
import heapq

import numpy as np

from .lp import EQ, LinearProgram


class FlowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FlowNetwork:
    """Directed network with nonnegative arc costs and infinite capacities.

    ``supply[i] > 0`` marks a source, ``< 0`` a sink; supplies sum to zero.
    """

    n_nodes: int
    tails: np.ndarray
    heads: np.ndarray
    costs: np.ndarray
    supply: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tails, dtype=int).ravel()
        h = np.asarray(self.heads, dtype=int).ravel()
        c = np.asarray(self.costs, dtype=float).ravel()
        b = np.asarray(self.supply, dtype=float).ravel()
        if not (t.size == h.size == c.size):
            raise FlowError("arc arrays differ in length")
        if b.size != self.n_nodes:
            raise FlowError("supply vector does not match node count")
        if t.size and (t.min() < 0 or h.min() < 0 or t.max() >= self.n_nodes or h.max() >= self.n_nodes):
            raise FlowError("arc endpoint out of range")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise FlowError("arc costs must be finite and nonnegative")
        if abs(b.sum()) > 1e-12 * (1.0 + np.abs(b).sum()):
            raise FlowError(f"unbalanced supplies (sum {b.sum():.3e})")
        for name, val in (("tails", t), ("heads", h), ("costs", c), ("supply", b)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def complete(cls, cost_matrix, supply):
        """All ordered pairs ``i != j`` as arcs, cost ``cost_matrix[i, j]``."""
        C = np.asarray(cost_matrix, dtype=float)
        n = C.shape[0]
        ii, jj = np.nonzero(~np.eye(n, dtype=bool))
        return cls(n, ii, jj, C[ii, jj], supply)

    @property
    def scale(self) -> float:
        return 1.0 + max(np.abs(self.costs).max(initial=0.0), np.abs(self.supply).max(initial=0.0))

    def as_lp(self) -> LinearProgram:
        """Node-arc formulation: flow conservation rows, x >= 0."""
        A = np.zeros((self.n_nodes, self.tails.size))
        A[self.tails, np.arange(self.tails.size)] += 1.0
        A[self.heads, np.arange(self.tails.size)] -= 1.0
        return LinearProgram(self.costs, A, (EQ,) * self.n_nodes, self.supply, None, None, "min")


@dataclass
class FlowResult:
    flow: np.ndarray
    cost: float
    potentials: np.ndarray
    dual_value: float
    min_reduced_cost: float

    @property
    def gap(self) -> float:
        return abs(self.cost - self.dual_value)


def mcf_solve(net: FlowNetwork) -> FlowResult:
    """Min-cost flow; potentials satisfy ``cost - pi[tail] + pi[head] >= 0``."""
    n = net.n_nodes
    scale = net.scale
    eps = 1e-13 * (1.0 + np.abs(net.supply).sum())
    m = net.tails.size
    out = [[] for _ in range(n)]
    for a in range(m):
        out[net.tails[a]].append(a)
    inn = [[] for _ in range(n)]
    for a in range(m):
        inn[net.heads[a]].append(a)
    tails, heads, costs = net.tails.tolist(), net.heads.tolist(), net.costs.tolist()
    flow = [0.0] * m
    excess = net.supply.astype(float).tolist()
    pot = [0.0] * n  # shortest-path potentials; reduced cost c + pot[u] - pot[v] >= 0

    for _ in range(4 * n * n + 4 * m + 10):
        sources = [i for i in range(n) if excess[i] > eps]
        if not sources:
            break
        dist = [np.inf] * n
        pred = [None] * n  # (arc, forward?)
        heap = []
        for s in sources:
            dist[s] = 0.0
            heap.append((0.0, s))
        heapq.heapify(heap)
        done = [False] * n
        target = -1
        while heap:
            du, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if excess[u] < -eps:
                target = u
                break
            for a in out[u]:
                v = heads[a]
                nd = du + costs[a] + pot[u] - pot[v]
                if nd < dist[v] - 1e-15 * scale:
                    dist[v] = nd
                    pred[v] = (a, True)
                    heapq.heappush(heap, (nd, v))
            for a in inn[u]:
                if flow[a] <= eps:
                    continue
                v = tails[a]
                nd = du - costs[a] + pot[u] - pot[v]
                if nd < dist[v] - 1e-15 * scale:
                    dist[v] = nd
                    pred[v] = (a, False)
                    heapq.heappush(heap, (nd, v))
        if target < 0:
            raise FlowError("demand unreachable from remaining supply")
        dt = dist[target]
        for i in range(n):
            pot[i] += min(dist[i], dt) if done[i] else dt
        amount = -excess[target]
        v = target
        path = []
        while pred[v] is not None:
            a, fwd = pred[v]
            path.append((a, fwd))
            if not fwd:
                amount = min(amount, flow[a])
            v = tails[a] if fwd else heads[a]
        amount = min(amount, excess[v])
        for a, fwd in path:
            flow[a] += amount if fwd else -amount
        excess[v] -= amount
        excess[target] += amount
    else:
        raise FlowError("augmentation limit reached")

    flow_arr = np.maximum(np.array(flow), 0.0)
    potentials = -np.array(pot)
    potentials -= potentials[0]
    rc = net.costs - potentials[net.tails] + potentials[net.heads]
    return FlowResult(
        flow=flow_arr,
        cost=float(net.costs @ flow_arr),
        potentials=potentials,
        dual_value=float(net.supply @ potentials),
        min_reduced_cost=float(rc.min(initial=0.0)),
    )
