"""Lattice models: percolation exploration, uniform spanning trees and
loop-erased walks in half-strips, and double domino tilings.

Heavy loops are numba kernels taking a numpy Generator; the Python layer
builds graphs, checks structure and aggregates.
"""

from dataclasses import dataclass
from itertools import combinations, product
import math

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from .montecarlo import EstimateWithCI, mean_ci, proportion_ci
from .streams import as_rng, replica_rng, stream_tag


def fk_kappa(q):
    """kappa of the exploration process of critical FK percolation with parameter q."""
    if not 0 < q < 4:
        raise ValueError("fk_kappa needs 0 < q < 4")
    return 4.0 * math.pi / math.acos(-math.sqrt(q) / 2.0)


# ---------------------------------------------------------------- percolation on the triangular lattice
#
# Site (i, j) sits at i + j*exp(i*pi/3).  The domain holds i, j >= 0,
# i + j <= n; a ring of fixed sites surrounds it: closed below (arc (a, c)),
# open on the left (a, b] and on the right [b, c).  Neighbour offsets are
# listed counterclockwise.

_DI = np.array([1, 0, -1, -1, 0, 1])
_DJ = np.array([0, 1, 1, 0, -1, -1])
UNSET, CLOSED, OPEN = -1, 0, 1


@dataclass(frozen=True)
class TriangularLatticeDomain:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("mesh must be positive")

    @property
    def interior(self):
        return [(i, j) for j in range(self.n + 1) for i in range(self.n + 1 - j)]

    def fresh_colors(self):
        """Color array indexed [i + 1, j + 1], boundary ring filled, interior UNSET."""
        n = self.n
        c = np.full((n + 3, n + 3), UNSET, np.int8)
        for i in range(n + 2):
            c[i + 1, 0] = CLOSED
        for j in range(n + 2):
            c[0, j + 1] = OPEN
        for i in range(n + 2):
            c[i + 1, n + 2 - i] = OPEN
        return c

    def hit_fraction(self, i):
        """Position of right-boundary site (i, n + 1 - i), from b (0) to c (1)."""
        return (i + 0.5) / (self.n + 2)


@njit(cache=True)
def _explore(color, n, rng, lazy, record):
    # state: adjacent sites (l open, r closed); step into their common
    # neighbour counterclockwise of r - l and replace whichever matches its color
    li, lj, ri, rj = -1, 0, 0, -1
    k = 5
    cap = 16 if record else 1
    path = np.empty((cap, 4), np.int64)
    steps = 0
    while True:
        if record:
            if steps >= path.shape[0]:
                bigger = np.empty((2 * path.shape[0], 4), np.int64)
                bigger[:steps] = path[:steps]
                path = bigger
            path[steps, 0] = li
            path[steps, 1] = lj
            path[steps, 2] = ri
            path[steps, 3] = rj
        steps += 1
        kn = (k + 1) % 6
        ti = li + _DI[kn]
        tj = lj + _DJ[kn]
        c = color[ti + 1, tj + 1]
        if c == UNSET:
            if not lazy:
                raise ValueError("uncolored site reached")
            c = OPEN if rng.random() < 0.5 else CLOSED
            color[ti + 1, tj + 1] = c
        if c == OPEN:
            li, lj = ti, tj
            if ti + tj == n + 1:
                return ti, steps, path[:steps]
            # r = t + d[k+1] seen from the new l: offset index k - 1
            k = (k + 5) % 6
        else:
            ri, rj = ti, tj
            # r - l now points along d[k+1]
            k = kn


def percolation_exploration(domain, seed):
    """Fraction along (b, c), measured from b, of the first hit of that side."""
    color = domain.fresh_colors()
    i, _, _ = _explore(color, domain.n, as_rng(seed), True, False)
    return domain.hit_fraction(i)


def exploration_path(domain, seed=None, colors=None):
    """Sequence of (open site, closed site) pairs visited by the exploration."""
    color = domain.fresh_colors()
    lazy = colors is None
    if not lazy:
        for (i, j), c in colors.items():
            color[i + 1, j + 1] = c
    rng = as_rng(0 if seed is None else seed)
    i, _, path = _explore(color, domain.n, rng, lazy, True)
    return i, path


def _hit_by_clusters(domain, colors):
    # topmost right-boundary site adjacent to the closed cluster of the bottom arc
    n = domain.n
    closed = {(i, -1) for i in range(n + 2)}
    stack = list(closed)
    seen = set(closed)
    while stack:
        i, j = stack.pop()
        for di, dj in zip(_DI, _DJ):
            s = (i + di, j + dj)
            if s not in seen and colors.get(s) == CLOSED:
                seen.add(s)
                stack.append(s)
    for i in range(n + 2):
        j = n + 1 - i
        if any((i + di, j + dj) in seen for di, dj in zip(_DI, _DJ)):
            return i
    raise AssertionError("closed cluster never reaches the right side")


def exhaustive_hit_distribution(domain):
    """Exact law of the hit site over all 2^sites fair colorings, by cluster search."""
    sites = domain.interior
    counts = np.zeros(domain.n + 2)
    for bits in product((CLOSED, OPEN), repeat=len(sites)):
        counts[_hit_by_clusters(domain, dict(zip(sites, bits)))] += 1
    return counts / counts.sum()


# ---------------------------------------------------------------- graphs and Wilson's algorithm


@dataclass(frozen=True)
class Graph:
    """Undirected multigraph in CSR form; edge e joins ends[e, 0] and ends[e, 1]."""
    indptr: np.ndarray
    nbr: np.ndarray
    edge_of: np.ndarray
    ends: np.ndarray

    @property
    def n_vertices(self):
        return len(self.indptr) - 1

    @classmethod
    def from_edges(cls, n_vertices, edges):
        ends = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        src = np.concatenate([ends[:, 0], ends[:, 1]])
        dst = np.concatenate([ends[:, 1], ends[:, 0]])
        eid = np.concatenate([np.arange(len(ends)), np.arange(len(ends))])
        order = np.lexsort((eid, src))
        indptr = np.zeros(n_vertices + 1, np.int64)
        np.add.at(indptr, src + 1, 1)
        return cls(np.cumsum(indptr), dst[order], eid[order], ends)

    def laplacian(self):
        n = self.n_vertices
        lap = np.zeros((n, n))
        for a, b in self.ends:
            if a != b:
                lap[a, a] += 1
                lap[b, b] += 1
                lap[a, b] -= 1
                lap[b, a] -= 1
        return lap


@dataclass(frozen=True)
class SpanningTree:
    """parent[v] and the edge to it; the root has parent -1."""
    root: int
    parent: np.ndarray
    parent_edge: np.ndarray

    def edges(self):
        return frozenset(int(e) for e in self.parent_edge if e >= 0)


@njit(cache=True)
def _wilson(indptr, nbr, edge_of, root, rng):
    n = indptr.shape[0] - 1
    in_tree = np.zeros(n, np.bool_)
    nxt = np.full(n, -1, np.int64)
    nxt_edge = np.full(n, -1, np.int64)
    in_tree[root] = True
    for start in range(n):
        u = start
        while not in_tree[u]:
            deg = indptr[u + 1] - indptr[u]
            k = indptr[u] + int(rng.random() * deg)
            nxt[u] = nbr[k]
            nxt_edge[u] = edge_of[k]
            u = nbr[k]
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            u = nxt[u]
    parent = np.full(n, -1, np.int64)
    pedge = np.full(n, -1, np.int64)
    for v in range(n):
        if v != root:
            parent[v] = nxt[v]
            pedge[v] = nxt_edge[v]
    return parent, pedge


def wilson_ust(graph, seed, root=0):
    """Uniform spanning tree by loop-erased walks toward the growing tree."""
    parent, pedge = _wilson(graph.indptr, graph.nbr, graph.edge_of, root, as_rng(seed))
    return SpanningTree(root, parent, pedge)


def is_spanning_tree(graph, tree):
    n = graph.n_vertices
    if len(tree.edges()) != n - 1:
        return False
    # union-find over the tree edges
    up = list(range(n))

    def find(v):
        while up[v] != v:
            up[v] = up[up[v]]
            v = up[v]
        return v

    for e in tree.edges():
        a, b = (find(int(x)) for x in graph.ends[e])
        if a == b:
            return False
        up[a] = b
    return True


def matrix_tree_count(graph):
    lap = graph.laplacian()
    return round(float(np.linalg.det(lap[1:, 1:])))


def enumerate_spanning_trees(graph):
    n = graph.n_vertices
    out = []
    for subset in combinations(range(len(graph.ends)), n - 1):
        up = list(range(n))
        ok = True
        for e in subset:
            a, b = graph.ends[e]
            while up[a] != a:
                a = up[a]
            while up[b] != b:
                b = up[b]
            if a == b:
                ok = False
                break
            up[a] = b
        if ok:
            out.append(frozenset(subset))
    return out


def grid_graph(nx, ny):
    """Plain (nx+1) x (ny+1) vertex grid; vertex (x, y) has index y*(nx+1) + x."""
    idx = lambda x, y: y * (nx + 1) + x
    edges = [(idx(x, y), idx(x + 1, y)) for y in range(ny + 1) for x in range(nx)]
    edges += [(idx(x, y), idx(x, y + 1)) for y in range(ny) for x in range(nx + 1)]
    return Graph.from_edges((nx + 1) * (ny + 1), edges)


# ---------------------------------------------------------------- half-strip UST and LERW
#
# Primal: vertices (x, y) of [0, n] x [0, nL]; the bottom row is wired into
# the root, the other sides are free.  Dual: faces (i + 1/2, j + 1/2); the
# outer dual vertex sits across the left, right and top sides, and the
# bottom side has no dual edges, so walks reflect there.


@dataclass(frozen=True)
class GridGraph:
    n: int
    L: int

    @property
    def height(self):
        return self.n * self.L

    def vid(self, x, y):
        # bottom row collapses into the root, index 0
        return 0 if y == 0 else 1 + (y - 1) * (self.n + 1) + x

    def primal(self):
        n, h = self.n, self.height
        edges, where = [], []
        for y in range(1, h + 1):
            for x in range(n + 1):
                if x < n:
                    edges.append((self.vid(x, y), self.vid(x + 1, y)))
                    where.append((x, y, 0))
                edges.append((self.vid(x, y), self.vid(x, y - 1)))
                where.append((x, y - 1, 1))
        return Graph.from_edges(1 + h * (n + 1), edges), np.array(where)


def primal_point(n, w):
    return (min(max(int(round(n * w.real)), 0), n), max(int(round(n * w.imag)), 1))


def dual_point(n, L, w):
    """Face whose center is nearest to n*w (clamped into the rectangle)."""
    return (min(max(int(math.floor(n * w.real)), 0), n - 1),
            min(max(int(math.floor(n * w.imag)), 0), n * L - 1))


LEFT_SIDE, RIGHT_SIDE, TOP_SIDE = 0, 1, 2


@njit(cache=True)
def _lerw_exit(n, h, i0, j0, rng, top_absorbing):
    # loop-erased walk on the dual faces; returns exit side and the erased path length
    idx = np.full(n * h, -1, np.int64)
    path = np.empty(n * h + 1, np.int64)
    m = 0
    i, j = i0, j0
    while True:
        v = j * n + i
        if idx[v] >= 0:
            for t in range(idx[v] + 1, m):
                idx[path[t]] = -1
            m = idx[v] + 1
        else:
            idx[v] = m
            path[m] = v
            m += 1
        deg = 3 if j == 0 else 4
        r = int(rng.random() * deg)
        # moves: right, up, left, down (down absent on the bottom row)
        if r == 0:
            if i == n - 1:
                return RIGHT_SIDE, m
            i += 1
        elif r == 1:
            if j == h - 1:
                if top_absorbing:
                    return TOP_SIDE, m
            else:
                j += 1
        elif r == 2:
            if i == 0:
                return LEFT_SIDE, m
            i -= 1
        else:
            j -= 1


def lerw_right_prob(n, L, w, seed, N, top_absorbing=True):
    """Fraction of loop-erased walks from the dual point of w leaving through the right side."""
    i, j = dual_point(n, L, complex(w))
    h = n * L
    hits = 0
    for r in range(N):
        side, _ = _lerw_exit(n, h, i, j, replica_rng(seed, r, stream_tag("lerw", n, L)),
                             top_absorbing)
        hits += side == RIGHT_SIDE
    return proportion_ci(hits, N)


def harmonic_oracle(n, L, w, top_absorbing=True):
    """Exact probability that simple random walk on the dual faces exits right.

    With top_absorbing=False the top side reflects like the bottom (a lazy
    step in place), so only the two vertical sides absorb.
    """
    h = n * L
    i0, j0 = dual_point(n, L, complex(w))
    size = n * h
    rows, cols, vals = [], [], []
    rhs = np.zeros(size)
    for j in range(h):
        for i in range(n):
            v = j * n + i
            deg = 3 if j == 0 else 4
            rows.append(v)
            cols.append(v)
            vals.append(float(deg) - (j == h - 1 and not top_absorbing))
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if b < 0:
                    continue
                if a == n:
                    rhs[v] += 1.0
                elif a < 0 or b == h:
                    continue
                else:
                    rows.append(v)
                    cols.append(b * n + a)
                    vals.append(-1.0)
    mat = coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsc()
    return float(spsolve(mat, rhs)[j0 * n + i0])


@njit(cache=True)
def _dual_exit_side(n, h, parent, i0, j0):
    # dual tree = complement of the primal tree; BFS from face (i0, j0)
    # until the outer vertex, through dual edges whose primal edge is unused
    def vid(x, y):
        return 0 if y == 0 else 1 + (y - 1) * (n + 1) + x

    def used(a, b):
        return parent[a] == b or parent[b] == a

    seen = np.zeros(n * h, np.bool_)
    queue = np.empty(n * h, np.int64)
    head, tail = 0, 1
    queue[0] = j0 * n + i0
    seen[j0 * n + i0] = True
    while head < tail:
        f = queue[head]
        head += 1
        i, j = f % n, f // n
        # right neighbour across the primal edge (i+1, j)-(i+1, j+1)
        if not used(vid(i + 1, j), vid(i + 1, j + 1)):
            if i == n - 1:
                return RIGHT_SIDE
            g = f + 1
            if not seen[g]:
                seen[g] = True
                queue[tail] = g
                tail += 1
        if not used(vid(i, j), vid(i, j + 1)):
            if i == 0:
                return LEFT_SIDE
            g = f - 1
            if not seen[g]:
                seen[g] = True
                queue[tail] = g
                tail += 1
        if not used(vid(i, j + 1), vid(i + 1, j + 1)):
            if j == h - 1:
                return TOP_SIDE
            g = f + n
            if not seen[g]:
                seen[g] = True
                queue[tail] = g
                tail += 1
        if j > 0 and not used(vid(i, j), vid(i + 1, j)):
            g = f - n
            if not seen[g]:
                seen[g] = True
                queue[tail] = g
                tail += 1
    return -1


@njit(cache=True)
def _right_of_corner_path(n, h, parent, xw, yw):
    # follow the tree path from the top-left corner down to the wired bottom;
    # w lies right of it iff a ray from the face above-right of w crosses it
    # an even number of times (the right wall adds one more crossing)
    v = 1 + (h - 1) * (n + 1)
    wv = 1 + (yw - 1) * (n + 1) + xw
    crossings = 0
    on_path = False
    while v != 0:
        if v == wv:
            on_path = True
        p = parent[v]
        y = (v - 1) // (n + 1) + 1
        x = (v - 1) % (n + 1)
        if p == 0:
            py, px = 0, x
        else:
            py = (p - 1) // (n + 1) + 1
            px = (p - 1) % (n + 1)
        if px == x and min(y, py) == yw and x > xw:
            crossings += 1
        v = p
    return crossings % 2 == 0, on_path


@dataclass(frozen=True)
class LemmaEstimate:
    primal: EstimateWithCI
    dual: EstimateWithCI
    ties: int
    target: float


def ust_lemma_experiment(n, L, w, seed, N):
    """Primal triple-point event and dual right-connectivity, from the same trees."""
    w = complex(w)
    grid = GridGraph(n, L)
    graph, _ = grid.primal()
    xw, yw = primal_point(n, w)
    if not (0 < xw < n and 0 < yw < grid.height):
        raise ValueError("w must be interior to the half-strip")
    # the face north-east of w_n serves both as the dual start and as the
    # point tested against the corner path, which settles w_n lying on it
    i0, j0 = xw, yw
    primal = dual = ties = 0
    for r in range(N):
        rng = replica_rng(seed, r, stream_tag("ust-lemma", n, L))
        parent, _ = _wilson(graph.indptr, graph.nbr, graph.edge_of, 0, rng)
        event, tie = _right_of_corner_path(n, grid.height, parent, xw, yw)
        ties += tie
        primal += event
        dual += _dual_exit_side(n, grid.height, parent, i0, j0) == RIGHT_SIDE
    return LemmaEstimate(proportion_ci(primal, N), proportion_ci(dual, N), ties, w.real)


# ---------------------------------------------------------------- domino tilings
#
# Squares (x, y), 0 <= x < W = 2nL + 1, 0 <= y < H = 2n + 1, index y*W + x.
# Temperley: even-even squares are the vertices of a grid graph, odd-odd
# squares its inner faces, mixed squares its edges.  Removing the corner
# (0, 0) or (W - 1, 0) roots the tree there.


@dataclass(frozen=True)
class DominoTiling:
    width: int
    height: int
    removed: int
    match: np.ndarray

    def dominoes(self):
        return frozenset((int(a), int(b)) for a, b in enumerate(self.match) if 0 <= a < b)


def _temperley_graph(W, H):
    gx, gy = (W + 1) // 2, (H + 1) // 2
    g = grid_graph(gx - 1, gy - 1)
    return g, gx


@njit(cache=True)
def _tree_to_tiling(W, H, gx, parent, root_sq):
    match = np.full(W * H, -1, np.int64)
    used = np.zeros(W * H, np.bool_)
    for v in range(parent.shape[0]):
        p = parent[v]
        if p < 0:
            continue
        sx, sy = 2 * (v % gx), 2 * (v // gx)
        px, py = 2 * (p % gx), 2 * (p // gx)
        a = sy * W + sx
        b = ((sy + py) // 2) * W + (sx + px) // 2
        match[a] = b
        match[b] = a
        used[b] = True
    # dual tree from the outer vertex over mixed squares not used by the primal tree
    fx, fy = W // 2, H // 2
    nf = fx * fy
    done = np.zeros(nf, np.bool_)
    queue = np.empty(nf, np.int64)
    tail = 0
    for f in range(nf):
        i, j = f % fx, f // fx
        x, y = 2 * i + 1, 2 * j + 1
        for ex, ey in ((x, 0), (x, H - 1), (0, y), (W - 1, y)):
            if abs(ex - x) + abs(ey - y) != 1 or done[f]:
                continue
            s = ey * W + ex
            if not used[s]:
                done[f] = True
                used[s] = True
                match[y * W + x] = s
                match[s] = y * W + x
                queue[tail] = f
                tail += 1
    head = 0
    while head < tail:
        f = queue[head]
        head += 1
        i, j = f % fx, f // fx
        x, y = 2 * i + 1, 2 * j + 1
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if a < 0 or b < 0 or a >= fx or b >= fy:
                continue
            g = b * fx + a
            s = (y + dj) * W + (x + di)
            if done[g] or used[s]:
                continue
            done[g] = True
            used[s] = True
            gsq = (2 * b + 1) * W + 2 * a + 1
            match[gsq] = s
            match[s] = gsq
            queue[tail] = g
            tail += 1
    match[root_sq] = -2
    return match


def temperley_domino_sample(n, L, corner, seed):
    """Uniform tiling of the (2nL+1) x (2n+1) rectangle minus a bottom corner square."""
    if n < 1 or L < 1:
        raise ValueError("need n >= 1 and L >= 1")
    if corner not in ("LEFT", "RIGHT"):
        raise ValueError("corner must be LEFT or RIGHT")
    W, H = 2 * n * L + 1, 2 * n + 1
    graph, gx = _temperley_graph(W, H)
    root = 0 if corner == "LEFT" else gx - 1
    parent, _ = _wilson(graph.indptr, graph.nbr, graph.edge_of, root, as_rng(seed))
    root_sq = 0 if corner == "LEFT" else W - 1
    match = _tree_to_tiling(W, H, gx, parent, root_sq)
    if np.any(match == -1):
        raise AssertionError("Temperley construction left a square uncovered")
    match[root_sq] = -1
    return DominoTiling(W, H, root_sq, match)


def enumerate_tilings(W, H, removed):
    """All domino tilings of the W x H rectangle minus one square, by backtracking."""
    free = np.ones(W * H, bool)
    free[removed] = False
    match = -np.ones(W * H, int)
    out = []

    def place():
        rest = np.flatnonzero(free)
        if rest.size == 0:
            out.append(frozenset((a, int(match[a])) for a in range(W * H) if 0 <= a < match[a]))
            return
        a = rest[0]
        x, y = a % W, a // W
        for b in ([a + 1] if x + 1 < W else []) + ([a + W] if y + 1 < H else []):
            if free[b]:
                free[a] = free[b] = False
                match[a], match[b] = b, a
                place()
                free[a] = free[b] = True
                match[a] = match[b] = -1

    place()
    return out


@njit(cache=True)
def _heights(match, W, H, removed, order):
    # Thurston heights on the (W+1) x (H+1) corner lattice, integrated by BFS
    # over edges that border at least one square of the region.  Along a
    # unit edge with a black square on its left the height moves +1, or -3
    # when a domino straddles the edge (signs flip for white).  The corner
    # point touching only the removed square gets no value (left at 0).
    dx = np.array([1, 0, -1, 0])
    dy = np.array([0, 1, 0, -1])
    # squares left and right of each move, as offsets from the start corner
    lx = np.array([0, -1, -1, 0])
    ly = np.array([0, 0, -1, -1])
    rx = np.array([0, 0, -1, -1])
    ry = np.array([-1, 0, 0, -1])
    h = np.zeros((W + 1, H + 1), np.int64)
    seen = np.zeros((W + 1, H + 1), np.bool_)
    qx = np.empty((W + 1) * (H + 1), np.int64)
    qy = np.empty((W + 1) * (H + 1), np.int64)
    qx[0], qy[0] = W // 2, 0
    seen[W // 2, 0] = True
    head, tail = 0, 1
    while head < tail:
        x, y = qx[head], qy[head]
        head += 1
        for t in range(4):
            d = (t + 2 * order) % 4 if order < 2 else 3 - t
            nx, ny = x + dx[d], y + dy[d]
            if nx < 0 or ny < 0 or nx > W or ny > H or seen[nx, ny]:
                continue
            ax, ay = x + lx[d], y + ly[d]
            bx, by = x + rx[d], y + ry[d]
            a = ay * W + ax if 0 <= ax < W and 0 <= ay < H and ay * W + ax != removed else -1
            b = by * W + bx if 0 <= bx < W and 0 <= by < H and by * W + bx != removed else -1
            if a < 0 and b < 0:
                continue
            black = (ax + ay) % 2 == 0
            if a >= 0 and b >= 0 and match[a] == b:
                inc = -3 if black else 3
            else:
                inc = 1 if black else -1
            h[nx, ny] = h[x, y] + inc
            seen[nx, ny] = True
            qx[tail], qy[tail] = nx, ny
            tail += 1
    return h


def height_function(tiling, order=0):
    """Height field on corner points, zero at the middle of the bottom side.

    order picks one of several BFS neighbour orders; the field must not depend on it.
    """
    return _heights(tiling.match, tiling.width, tiling.height, tiling.removed, order)


def superposition_path(t1, t2):
    """Squares of the corner-to-corner path in the union of two tilings, from
    t1's removed square to t2's."""
    path = [t1.removed]
    cur, use_second = t1.removed, True
    while True:
        nxt = (t2 if use_second else t1).match[cur]
        if nxt < 0:
            break
        path.append(int(nxt))
        cur, use_second = int(nxt), not use_second
    if cur != t2.removed:
        raise AssertionError("superposition path does not join the two removed corners")
    return path


def above_path(path, W, x, y):
    """Parity of crossings of the downward vertical ray from corner (x, y) with the path."""
    crossings = 0
    for a, b in zip(path, path[1:]):
        ay, by = a // W, b // W
        if ay == by and ay < y and max(a % W, b % W) == x:
            crossings += 1
    return crossings % 2 == 1


@dataclass(frozen=True)
class HeightEstimate:
    mean_h: EstimateWithCI
    p_above: EstimateWithCI
    gap: EstimateWithCI
    target: float


def double_domino_sample(n, L, seed):
    rng = as_rng(seed)
    t1 = temperley_domino_sample(n, L, "LEFT", rng)
    t2 = temperley_domino_sample(n, L, "RIGHT", rng)
    h = height_function(t1) - height_function(t2)
    h -= h[t1.width // 2, 0]
    return t1, t2, h


def domino_height_experiment(n, L, x, seed, N):
    """E h(x) and P(x above the path); x is a corner point (X, Y) of the rectangle."""
    X, Y = x
    W, H = 2 * n * L + 1, 2 * n + 1
    if not (0 < X < W and 0 < Y < H):
        raise ValueError("x must be an interior corner point")
    hs = np.empty(N)
    above = np.empty(N)
    for r in range(N):
        t1, t2, h = double_domino_sample(n, L, replica_rng(seed, r, stream_tag("domino", n, L)))
        hs[r] = h[X, Y]
        above[r] = above_path(superposition_path(t1, t2), W, X, Y)
    return HeightEstimate(mean_ci(hs), proportion_ci(int(above.sum()), N), mean_ci(hs - 4 * above),
                          Y / H)


def domino_svg(tiling, cell=12):
    W, H = tiling.width, tiling.height
    parts = []
    for a, b in sorted(tiling.dominoes()):
        x0, y0 = min(a % W, b % W), min(a // W, b // W)
        w = 2 if a // W == b // W else 1
        h = 3 - w
        parts.append(f'<rect x="{x0 * cell}" y="{(H - y0 - h) * cell}" width="{w * cell}" '
                     f'height="{h * cell}" fill="{"#9ab" if w == 2 else "#db9"}" stroke="#333"/>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W * cell}" height="{H * cell}">'
            + "".join(parts) + "</svg>")


# ---------------------------------------------------------------- experiment runners


@dataclass(frozen=True)
class LatticeConfig:
    kind: str
    mesh: int
    n_replicas: int
    seed: int = 1
    strip_length: int = 4
    q: float = 1.0
    test_points: tuple = ()

    def __post_init__(self):
        if self.kind not in ("perc", "ust", "ust-lemma", "domino"):
            raise ValueError(f"unknown lattice experiment {self.kind!r}")
        if self.q != 1:
            raise ValueError("only q = 1 (site percolation) is implemented; "
                             "FK percolation with q != 1 is out of scope")
        if self.n_replicas < 1 or self.mesh < 1 or self.strip_length < 1:
            raise ValueError("mesh, strip_length and n_replicas must be positive")


def _result(cfg, rows, gates, summary=None):
    from .montecarlo import ExperimentResult
    return ExperimentResult(cfg, rows, gates, summary or {})


def run_percolation(cfg, ks_max=0.05, micro_mesh=4, micro_n=10_000):
    """Hit position on (b, c) against the uniform law, plus the exact micro-domain law."""
    from .montecarlo import gof_test
    dom = TriangularLatticeDomain(cfg.mesh)
    hits = np.array([percolation_exploration(dom, replica_rng(cfg.seed, r, stream_tag("perc")))
                     for r in range(cfg.n_replicas)])
    ks = gof_test(hits, lambda v: min(max(v, 0.0), 1.0))
    micro = TriangularLatticeDomain(micro_mesh)
    exact = exhaustive_hit_distribution(micro)
    counts = np.zeros(micro_mesh + 2)
    for r in range(micro_n):
        color = micro.fresh_colors()
        i, _, _ = _explore(color, micro_mesh, replica_rng(cfg.seed, r, stream_tag("perc-micro")),
                           True, False)
        counts[i] += 1
    chi = gof_test(counts, exact, "CHI2")
    rows = [dict(statistic="ks_uniform", value=ks.statistic, p_value=ks.p_value, n=ks.n,
                 mean=float(hits.mean()), below_half=float((hits < 0.5).mean()))]
    rows += [dict(statistic=f"micro_site_{i}", value=counts[i] / micro_n, target=exact[i],
                  n=micro_n) for i in range(micro_mesh + 2)]
    rows.append(dict(statistic="micro_chi2", value=chi.statistic, p_value=chi.p_value, n=chi.n))
    gates = {"ks_uniform": ks.statistic <= ks_max, "micro_chi2": chi.p_value > 0.01}
    return _result(cfg, rows, gates, dict(samples=hits))


def default_strip_points():
    return (0.5 + 0.5j, 0.25 + 0.5j, 0.75 + 0.25j)


def wilson_uniformity(seed, N=100_000, nx=2, ny=2):
    """Chi-square of Wilson trees on a small grid against the uniform law on
    all spanning trees, whose number is also checked against the matrix-tree count."""
    from .montecarlo import gof_test
    graph = grid_graph(nx, ny)
    trees = enumerate_spanning_trees(graph)
    index = {t: k for k, t in enumerate(trees)}
    counts = np.zeros(len(trees))
    for r in range(N):
        rng = replica_rng(seed, r, stream_tag("wilson", nx, ny))
        _, pedge = _wilson(graph.indptr, graph.nbr, graph.edge_of, 0, rng)
        counts[index[frozenset(int(e) for e in pedge if e >= 0)]] += 1
    chi = gof_test(counts, np.full(len(trees), 1.0 / len(trees)), "CHI2")
    return chi, len(trees), matrix_tree_count(graph)


def run_ust(cfg, wilson_n=100_000):
    """Loop-erased walk exit side against the harmonic oracle, plus Wilson uniformity."""
    rows, gates = [], {}
    for w in cfg.test_points or default_strip_points():
        w = complex(w)
        est = lerw_right_prob(cfg.mesh, cfg.strip_length, w, cfg.seed, cfg.n_replicas)
        ora = harmonic_oracle(cfg.mesh, cfg.strip_length, w)
        rows.append(dict(w=repr(w), estimate=est.estimate, half_width=est.half_width, oracle=ora,
                         continuum=w.real, n=est.n))
        gates[f"lerw[{w!r}]"] = est.covers(ora)
    chi, n_trees, det = wilson_uniformity(cfg.seed, wilson_n)
    rows.append(dict(w="wilson", estimate=chi.statistic, p_value=chi.p_value, n=chi.n,
                     n_trees=n_trees, matrix_tree=det))
    gates["wilson_uniform"] = chi.p_value > 0.01
    gates["matrix_tree"] = n_trees == det
    return _result(cfg, rows, gates)


def run_ust_lemma(cfg, tol=0.04):
    rows, gates = [], {}
    for w in cfg.test_points or default_strip_points():
        w = complex(w)
        r = ust_lemma_experiment(cfg.mesh, cfg.strip_length, w, cfg.seed, cfg.n_replicas)
        joint = math.hypot(r.primal.half_width, r.dual.half_width)
        rows.append(dict(w=repr(w), primal=r.primal.estimate, dual=r.dual.estimate,
                         half_width=r.primal.half_width, ties=r.ties, target=r.target,
                         n=r.primal.n))
        gates[f"primal_vs_dual[{w!r}]"] = abs(r.primal.estimate - r.dual.estimate) <= joint
        gates[f"primal_target[{w!r}]"] = abs(r.primal.estimate - r.target) <= tol
        gates[f"dual_target[{w!r}]"] = abs(r.dual.estimate - r.target) <= tol
    return _result(cfg, rows, gates)


def tiling_uniformity(seed, N=20_000):
    """3 x 3 square minus a corner: sampled tilings against exhaustive enumeration."""
    from .montecarlo import gof_test
    tilings = enumerate_tilings(3, 3, 0)
    index = {t: k for k, t in enumerate(tilings)}
    counts = np.zeros(len(tilings))
    for r in range(N):
        t = temperley_domino_sample(1, 1, "LEFT", replica_rng(seed, r, stream_tag("tiling3")))
        counts[index[t.dominoes()]] += 1
    return gof_test(counts, np.full(len(tilings), 1.0 / len(tilings)), "CHI2"), len(tilings)


def run_domino(cfg, tol=0.05):
    n, L = cfg.mesh, cfg.strip_length
    W, H = 2 * n * L + 1, 2 * n + 1
    x = (W // 2, n)
    r = domino_height_experiment(n, L, x, cfg.seed, cfg.n_replicas)
    chi, n_tilings = tiling_uniformity(cfg.seed)
    rows = [dict(statistic="mean_h", value=r.mean_h.estimate, half_width=r.mean_h.half_width),
            dict(statistic="p_above", value=r.p_above.estimate, half_width=r.p_above.half_width,
                 target=r.target),
            dict(statistic="mean_h_minus_4p", value=r.gap.estimate, half_width=r.gap.half_width),
            dict(statistic="tiling_chi2", value=chi.statistic, p_value=chi.p_value,
                 n_tilings=n_tilings)]
    gates = {"identity": r.gap.covers(0.0), "tiling_uniform": chi.p_value > 0.01,
             "p_above_target": abs(r.p_above.estimate - r.target) <= tol}
    return _result(cfg, rows, gates, dict(point=x))


LATTICE_RUNNERS = {"perc": run_percolation, "ust": run_ust, "ust-lemma": run_ust_lemma,
                   "domino": run_domino}
