"""Tour solvers: an exhaustive oracle for small instances and a local-search
heuristic (nearest neighbour + Or-opt / node exchange, 2-opt when symmetric,
with seeded double-bridge kicks and randomized greedy restarts).

Two matrix semantics are supported. ``CLOSED`` is an asymmetric tour that
starts at node 0 and returns to it. ``OPEN`` is a path that starts at node 0
and ends at node n-1; the closing arc is not charged.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

INF = math.inf
ORACLE_MAX_N = 11
# evaluation floor so tiny instances still get several restarts
MIN_BUDGET = 40000
# stop after this many kicks/restarts in a row fail to improve the incumbent
STALL_ROUNDS = 200


class Semantics(enum.Enum):
    CLOSED = "closed"
    OPEN = "open"


@dataclass
class CostMatrix:
    costs: np.ndarray
    semantics: Semantics = Semantics.CLOSED

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        n = self.costs.shape[0]
        if self.costs.shape != (n, n):
            raise ValueError("cost matrix must be square")
        if np.any(np.isnan(self.costs)) or np.any(self.costs < 0):
            raise ValueError("costs must be non-negative")
        if np.any(np.diag(self.costs) != 0):
            raise ValueError("diagonal must be zero")

    @property
    def n(self) -> int:
        return self.costs.shape[0]

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        c = self.costs
        both_inf = np.isinf(c) & np.isinf(c.T)
        with np.errstate(invalid="ignore"):
            close = np.abs(c - c.T) <= tol * np.maximum(1.0, np.abs(c))
        return bool(np.all(both_inf | close))


@dataclass
class Tour:
    order: list
    cost: float
    trace: list = field(default_factory=list)


def tour_cost(matrix: CostMatrix, order) -> float:
    c = matrix.costs
    order = list(order)
    total = sum(c[order[i], order[i + 1]] for i in range(len(order) - 1))
    if matrix.semantics is Semantics.CLOSED and len(order) > 1:
        total += c[order[-1], order[0]]
    return float(total)


def brute_force(matrix: CostMatrix) -> Tour:
    """Exhaustive minimum; ties go to the lexicographically smallest order."""
    n = matrix.n
    if n > ORACLE_MAX_N:
        raise ValueError("instance too large for oracle")
    if n == 1:
        return Tour([0], 0.0)
    c = matrix.costs
    closed = matrix.semantics is Semantics.CLOSED
    inner = list(range(1, n)) if closed else list(range(1, n - 1))
    best_cost, best = INF, None
    perms = itertools.permutations(inner)
    while True:
        chunk = list(itertools.islice(perms, 100_000))
        if not chunk:
            break
        body = np.asarray(chunk, dtype=np.int64).reshape(len(chunk), len(inner))
        head = np.zeros((len(chunk), 1), np.int64)
        tail = np.zeros((len(chunk), 1), np.int64) if closed else np.full((len(chunk), 1), n - 1)
        full = np.hstack([head, body, tail])
        costs = c[full[:, :-1], full[:, 1:]].sum(axis=1)
        i = int(np.argmin(costs))
        if best is None or costs[i] < best_cost:
            best_cost, best = float(costs[i]), full[i]
    order = [int(v) for v in (best[:-1] if closed else best)]
    return Tour(order, best_cost)


class _Search:
    """Local search over the free interior of a tour with fixed head (and
    fixed tail for open paths)."""

    def __init__(self, matrix: CostMatrix, budget: int):
        n = matrix.n
        c = matrix.costs
        finite = c[np.isfinite(c)]
        self.big = (float(finite.sum()) + 1.0) * (n + 1)
        self.c = np.where(np.isinf(c), self.big, c).tolist()
        self.closed = matrix.semantics is Semantics.CLOSED
        self.end = 0 if self.closed else n - 1
        self.symmetric = matrix.is_symmetric()
        self.budget = budget
        self.evals = 0

    def cost(self, s):
        c = self.c
        full = [0] + s + [self.end]
        return sum(c[full[i]][full[i + 1]] for i in range(len(full) - 1))

    def nearest_neighbour(self, nodes):
        c = self.c
        left = sorted(nodes)
        cur, out = 0, []
        while left:
            nxt = min(left, key=lambda v: (c[cur][v], v))
            out.append(nxt)
            left.remove(nxt)
            cur = nxt
        return out

    def _best_oropt(self, full):
        c = self.c
        m = len(full) - 2
        best = (0.0, None)
        for seg in (1, 2, 3):
            for i in range(1, m - seg + 2):
                j = i + seg - 1
                prev, nxt = full[i - 1], full[j + 1]
                a0, a1 = full[i], full[j]
                remove = c[prev][a0] + c[a1][nxt] - c[prev][nxt]
                for k in range(0, m + 1):
                    if i - 1 <= k <= j:
                        continue
                    x, y = full[k], full[k + 1]
                    self.evals += 1
                    d = c[x][a0] + c[a1][y] - c[x][y] - remove
                    if d < best[0]:
                        return (d, ("oropt", i, j, k))
        return best

    def _best_swap(self, full):
        c = self.c
        m = len(full) - 2
        best = (0.0, None)
        for p in range(1, m):
            for q in range(p + 1, m + 1):
                self.evals += 1
                a, x, b = full[p - 1], full[p], full[p + 1]
                u, y, w = full[q - 1], full[q], full[q + 1]
                if q == p + 1:
                    old = c[a][x] + c[x][y] + c[y][w]
                    new = c[a][y] + c[y][x] + c[x][w]
                else:
                    old = c[a][x] + c[x][b] + c[u][y] + c[y][w]
                    new = c[a][y] + c[y][b] + c[u][x] + c[x][w]
                d = new - old
                if d < best[0]:
                    return (d, ("swap", p, q))
        return best

    def _best_2opt(self, full):
        c = self.c
        m = len(full) - 2
        best = (0.0, None)
        for i in range(1, m):
            for j in range(i + 1, m + 1):
                self.evals += 1
                d = (c[full[i - 1]][full[j]] + c[full[i]][full[j + 1]]
                     - c[full[i - 1]][full[i]] - c[full[j]][full[j + 1]])
                if d < best[0]:
                    return (d, ("2opt", i, j))
        return best

    @staticmethod
    def _apply(full, move):
        kind = move[0]
        if kind == "oropt":
            _, i, j, k = move
            seg = full[i:j + 1]
            rest = full[:i] + full[j + 1:]
            at = k + 1 if k < i else k - len(seg) + 1
            return rest[:at] + seg + rest[at:]
        if kind == "swap":
            _, p, q = move
            out = list(full)
            out[p], out[q] = out[q], out[p]
            return out
        _, i, j = move
        return full[:i] + full[i:j + 1][::-1] + full[j + 1:]

    def descend(self, s, cost, trace_cb):
        """First-improvement descent; every applied move strictly lowers cost."""
        eps = 1e-12 * max(1.0, abs(cost))
        full = [0] + s + [self.end]
        scans = [self._best_oropt, self._best_swap]
        if self.symmetric:
            scans.append(self._best_2opt)
        improved = True
        while improved and self.evals < self.budget:
            improved = False
            for scan in scans:
                d, move = scan(full)
                if move is not None and d < -eps:
                    full = self._apply(full, move)
                    cost += d
                    trace_cb(cost)
                    improved = True
                    break
        return full[1:-1], cost


def _double_bridge(s, rng):
    # exchange two adjacent segments; direction preserving
    m = len(s)
    a, b, c = sorted(rng.choice(np.arange(0, m + 1), size=3, replace=False))
    return s[:a] + s[b:c] + s[a:b] + s[c:]


def _randomized_nn(c, nodes, rng, p_greedy=0.5):
    left = sorted(nodes)
    cur, out = 0, []
    while left:
        left.sort(key=lambda v: (c[cur][v], v))
        k = 0
        while k < len(left) - 1 and rng.random() > p_greedy:
            k += 1
        cur = left.pop(k)
        out.append(cur)
    return out


def default_budget(n: int) -> int:
    return max(50 * n * n, MIN_BUDGET)


def solve(matrix: CostMatrix, seed: int = 0, move_budget: int | None = None) -> Tour:
    """Heuristic tour: nearest neighbour, local descent, then alternating
    double-bridge kicks and randomized greedy restarts until the evaluation
    budget is spent. The trace lists every improvement of the incumbent and is
    strictly decreasing."""
    n = matrix.n
    if n < 2:
        raise ValueError("need at least two nodes")
    closed = matrix.semantics is Semantics.CLOSED
    if move_budget is None:
        move_budget = default_budget(n)
    search = _Search(matrix, move_budget)
    nodes = list(range(1, n)) if closed else list(range(1, n - 1))
    rng = np.random.default_rng(seed)

    s = search.nearest_neighbour(nodes)
    trace = [search.cost(s)]
    s, _ = search.descend(s, trace[0], lambda _: None)
    best_s, best = s, search.cost(s)
    if best < trace[-1]:
        trace.append(best)
    rounds = stall = 0
    while len(nodes) >= 3 and search.evals < search.budget and stall < STALL_ROUNDS:
        if rounds % 2 == 0:
            cand = _double_bridge(best_s, rng)
        else:
            cand = _randomized_nn(search.c, nodes, rng)
        rounds += 1
        cand, _ = search.descend(cand, search.cost(cand), lambda _: None)
        cc = search.cost(cand)
        stall += 1
        if cc < best - 1e-12 * max(1.0, abs(best)):
            best_s, best = cand, cc
            trace.append(best)
            stall = 0

    order = [0] + best_s + ([] if closed else [n - 1])
    real = tour_cost(matrix, order)
    if math.isinf(real):
        raise ValueError("infeasible")
    return Tour(order, real, trace)


def dump_matrix(matrix: CostMatrix, path) -> None:
    lines = [str(matrix.n)]
    for row in matrix.costs:
        lines.append(" ".join("inf" if math.isinf(v) else repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix(path, semantics: Semantics = Semantics.CLOSED) -> CostMatrix:
    with open(path) as fh:
        n = int(fh.readline())
        rows = [[float(v) for v in fh.readline().split()] for _ in range(n)]
    return CostMatrix(np.array(rows), semantics)
