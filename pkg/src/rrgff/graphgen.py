"""Random r-regular graphs from the configuration model and their structure.

Half-edge ``k`` of vertex ``x`` has global index ``x * r + k``.  A
:class:`MultiGraphDraw` stores the matching as a ``partner`` array, and a
:class:`RegularGraph` keeps neighbours in half-edge order so the matching can
be rebuilt from the adjacency (see :func:`draw_from_graph`).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from scipy import stats

from .errors import GenerationFailed, InvalidParameters
from .seeding import stream, sub_seed

DENSE_EIG_CAP = 4096


@dataclass(frozen=True)
class MultiGraphDraw:
    n_vertices: int
    degree: int
    partner: np.ndarray
    seed: int | None = None

    @property
    def n_half_edges(self) -> int:
        return self.n_vertices * self.degree

    def edges(self) -> np.ndarray:
        """Edge multiset as an (N*r/2, 2) array of vertex pairs, u <= v."""
        he = np.arange(self.n_half_edges)
        first = he[he < self.partner]
        u = first // self.degree
        v = self.partner[first] // self.degree
        return np.sort(np.stack([u, v], axis=1), axis=1)

    def validate(self) -> None:
        p = self.partner
        idx = np.arange(self.n_half_edges)
        if p.shape != idx.shape:
            raise InvalidParameters("partner array has wrong length")
        if np.any(p == idx) or np.any(p[p] != idx):
            raise InvalidParameters("matching is not a fixed-point-free involution")


@dataclass(frozen=True)
class RegularGraph:
    n_vertices: int
    degree: int
    adjacency: np.ndarray  # (N, r) neighbour table
    seed_provenance: int | None = None
    attempts: int = 1

    def __post_init__(self):
        self.adjacency.setflags(write=False)

    def neighbors(self, x: int) -> np.ndarray:
        return self.adjacency[x]

    def edges(self) -> np.ndarray:
        """Sorted (u, v) pairs with u < v."""
        n, r = self.adjacency.shape
        u = np.repeat(np.arange(n), r)
        v = self.adjacency.ravel()
        keep = u < v
        e = np.stack([u[keep], v[keep]], axis=1)
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    def sparse_adjacency(self) -> sp.csr_matrix:
        n, r = self.adjacency.shape
        rows = np.repeat(np.arange(n), r)
        data = np.ones(n * r, dtype=np.int64)
        return sp.csr_matrix((data, (rows, self.adjacency.ravel())), shape=(n, n))

    def dense_adjacency(self) -> np.ndarray:
        return self.sparse_adjacency().toarray().astype(float)

    def check(self) -> None:
        """Raise unless the graph is simple, r-regular and symmetric."""
        a = self.adjacency
        n, r = a.shape
        if (n, r) != (self.n_vertices, self.degree):
            raise InvalidParameters("adjacency shape does not match (N, r)")
        if np.any(a == np.arange(n)[:, None]):
            raise InvalidParameters("self-loop")
        s = np.sort(a, axis=1)
        if r > 1 and np.any(s[:, 1:] == s[:, :-1]):
            raise InvalidParameters("repeated edge")
        A = self.sparse_adjacency()
        if (A != A.T).nnz:
            raise InvalidParameters("adjacency is not symmetric")


def from_edges(n: int, edges, seed=None) -> RegularGraph:
    """Build a RegularGraph from an edge list; the degree is inferred."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    deg = np.bincount(edges.ravel(), minlength=n)
    if n == 0 or np.any(deg != deg[0]):
        raise InvalidParameters("edge list is not regular")
    r = int(deg[0])
    nbrs = [[] for _ in range(n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    g = RegularGraph(n, r, np.array(nbrs, dtype=np.int64).reshape(n, r), seed)
    g.check()
    return g


def _check_params(n: int, r: int) -> None:
    if n < 1 or r < 1:
        raise InvalidParameters(f"need N >= 1 and r >= 1, got N={n}, r={r}")
    if (n * r) % 2:
        raise InvalidParameters(f"N*r must be even, got N={n}, r={r}")


def generate_matching(n: int, degree: int, seed: int) -> MultiGraphDraw:
    """Uniform perfect matching of the N*r half-edges."""
    _check_params(n, degree)
    perm = stream(seed).permutation(n * degree)
    partner = np.empty(n * degree, dtype=np.int64)
    partner[perm[0::2]] = perm[1::2]
    partner[perm[1::2]] = perm[0::2]
    return MultiGraphDraw(n, degree, partner, seed)


def to_simple_graph(draw: MultiGraphDraw) -> RegularGraph | None:
    """The graph realised by ``draw``, or None if it has a loop or multi-edge."""
    n, r = draw.n_vertices, draw.degree
    nbrs = (draw.partner // r).reshape(n, r)
    if np.any(nbrs == np.arange(n)[:, None]):
        return None
    if r > 1:
        s = np.sort(nbrs, axis=1)
        if np.any(s[:, 1:] == s[:, :-1]):
            return None
    return RegularGraph(n, r, nbrs, draw.seed)


def generate_simple(n: int, degree: int, seed: int, max_attempts: int = 1000) -> RegularGraph:
    """Rejection-sample the configuration model until it is simple.

    Attempt ``i`` uses the matching seed ``sub_seed(seed, i)``.
    """
    if max_attempts < 1:
        raise InvalidParameters("max_attempts must be >= 1")
    _check_params(n, degree)
    if degree >= n:
        raise InvalidParameters(f"no simple {degree}-regular graph on {n} vertices")
    for attempt in range(max_attempts):
        g = to_simple_graph(generate_matching(n, degree, sub_seed(seed, attempt)))
        if g is not None:
            return RegularGraph(n, degree, g.adjacency, seed, attempt + 1)
    raise GenerationFailed(f"no simple graph after {max_attempts} attempts", max_attempts)


def draw_from_graph(g: RegularGraph) -> MultiGraphDraw:
    """Half-edge matching that realises the simple graph ``g``."""
    n, r = g.adjacency.shape
    x = np.repeat(np.arange(n), r)
    y = g.adjacency.ravel()
    back = np.argmax(g.adjacency[y] == x[:, None], axis=1)
    return MultiGraphDraw(n, r, y * r + back, g.seed_provenance)


# ---------------------------------------------------------------- distances

def bfs_distances(g: RegularGraph, source: int) -> np.ndarray:
    """Graph distances from ``source``; unreachable vertices get ``inf``."""
    n = g.n_vertices
    if not 0 <= source < n:
        raise IndexError(f"source {source} out of range for N={n}")
    dist = np.full(n, np.inf)
    dist[source] = 0
    frontier = np.array([source])
    d = 0
    while frontier.size:
        d += 1
        cand = np.unique(g.adjacency[frontier].ravel())
        cand = cand[np.isinf(dist[cand])]
        dist[cand] = d
        frontier = cand
    return dist


def all_pairs_distances(g: RegularGraph) -> np.ndarray:
    """Dense (N, N) float distance matrix with ``inf`` between components."""
    return csgraph.shortest_path(g.sparse_adjacency(), unweighted=True, directed=False)


def diameter(g: RegularGraph, dist=None) -> float:
    d = all_pairs_distances(g) if dist is None else dist
    return float(d.max())


# ------------------------------------------------------------------- census

def tree_ball_size(r: int, ell: int) -> int:
    """Number of vertices within distance ``ell`` of the root of the r-regular tree."""
    if ell <= 0:
        return 1
    return 1 + sum(r * (r - 1) ** (k - 1) for k in range(1, ell + 1))


def ball_statistics(g: RegularGraph, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertex and edge counts of every induced radius-``radius`` ball."""
    A = g.sparse_adjacency().astype(np.int64)
    reach = sp.identity(g.n_vertices, dtype=np.int64, format="csr")
    step = (A + reach).tocsr()
    for _ in range(max(radius, 0)):
        reach = reach @ step
        reach.data[:] = 1
    sizes = np.asarray(reach.sum(axis=1)).ravel()
    inner = (reach @ A).multiply(reach)
    edges = np.asarray(inner.sum(axis=1)).ravel() // 2
    return sizes, edges


@dataclass
class VertexCensus:
    ell: int
    good_flags: np.ndarray
    bad_count: int = field(init=False)

    def __post_init__(self):
        self.bad_count = int(np.count_nonzero(~self.good_flags))

    def to_dict(self) -> dict:
        return {"ell": self.ell, "good_flags": self.good_flags.tolist(), "bad_count": self.bad_count}


def vertex_census(g: RegularGraph, ell: int) -> VertexCensus:
    """Flag each vertex as ell-good (induced ball is the tree ball) or ell-bad.

    Edges between two vertices at distance exactly ``ell`` count: a vertex is
    good only if the induced ball has the tree's vertex count and is a tree.
    """
    if ell < 0:
        raise InvalidParameters("ell must be >= 0")
    if ell == 0:
        return VertexCensus(0, np.ones(g.n_vertices, dtype=bool))
    sizes, edges = ball_statistics(g, ell)
    target = tree_ball_size(g.degree, ell)
    good = (sizes == target) & (edges == target - 1)
    return VertexCensus(ell, good)


def ball_cycle_counts(g: RegularGraph, radius: int) -> np.ndarray:
    """First Betti number of every induced ball (balls are connected)."""
    sizes, edges = ball_statistics(g, radius)
    return edges - sizes + 1


# -------------------------------------------------------- half-edge exploration

@dataclass
class Exploration:
    tau: float  # first collision step, inf if none within the budget
    steps: int
    active_sizes: list
    depth: dict  # explored vertex -> exploration-tree depth


def tree_edges_to_depth(r: int, ell: int) -> int:
    """Edges revealed before every vertex at distance < ell has been exhausted."""
    return tree_ball_size(r, ell) - 1


def collision_time(draw, root: int, ell_max: int | None = None) -> Exploration:
    """Breadth-first half-edge exploration from ``root`` until the first collision.

    ``draw`` is a MultiGraphDraw or a RegularGraph.  The budget is the number
    of edges of the tree ball of radius ``ell_max + 1`` (all half-edges if
    ``ell_max`` is None), capped at N*r/2.
    """
    if isinstance(draw, RegularGraph):
        draw = draw_from_graph(draw)
    n, r = draw.n_vertices, draw.degree
    partner = draw.partner
    budget = n * r // 2
    if ell_max is not None:
        budget = min(budget, tree_edges_to_depth(r, ell_max + 1))

    depth = {root: 0}
    active = set(range(root * r, root * r + r))
    # (depth, vertex) heap of explored vertices that may still own active half-edges
    heap = [(0, root)]
    sizes = [len(active)]
    for t in range(1, budget + 1):
        while heap:
            d, x = heap[0]
            own = [h for h in range(x * r, x * r + r) if h in active]
            if own:
                break
            heapq.heappop(heap)
        else:
            return Exploration(math.inf, t - 1, sizes, depth)
        h = own[0]
        h2 = int(partner[h])
        if h2 in active:
            return Exploration(t, t, sizes, depth)
        active.discard(h)
        y = h2 // r
        depth[y] = d + 1
        active.update(k for k in range(y * r, y * r + r) if k != h2)
        heapq.heappush(heap, (d + 1, y))
        sizes.append(len(active))
        assert len(active) <= r + (r - 1) * t
    return Exploration(math.inf, budget, sizes, depth)


# ------------------------------------------------------------------- spectra

def is_connected(g: RegularGraph) -> bool:
    ncomp, _ = csgraph.connected_components(g.sparse_adjacency(), directed=False)
    return ncomp == 1


def spectral_gap(g: RegularGraph) -> float:
    """Smallest nonzero eigenvalue of I - A/r, i.e. 1 - lambda_2(A)/r; 0 if disconnected."""
    if not is_connected(g):
        return 0.0
    r = g.degree
    if g.n_vertices <= DENSE_EIG_CAP:
        ev = scipy.linalg.eigh(g.dense_adjacency(), eigvals_only=True)
        lam2 = ev[-2] if ev.size > 1 else ev[-1]
    else:
        A = g.sparse_adjacency().astype(float)
        ev = spla.eigsh(A, k=2, which="LA", tol=1e-9, return_eigenvectors=False)
        lam2 = np.sort(ev)[0]
    return float(1.0 - lam2 / r)


def expansion_probe(g: RegularGraph, n_probes: int = 100, seed: int = 0) -> float:
    """Smallest boundary/size ratio over BFS-grown connected sets of size <= N/2."""
    rng = stream(seed)
    n = g.n_vertices
    worst = math.inf
    for _ in range(n_probes):
        target = int(rng.integers(1, max(n // 2, 1) + 1))
        start = int(rng.integers(n))
        inside = np.zeros(n, dtype=bool)
        inside[start] = True
        order = [start]
        i = 0
        while len(order) < target and i < len(order):
            for y in g.adjacency[order[i]]:
                if not inside[y] and len(order) < target:
                    inside[y] = True
                    order.append(int(y))
            i += 1
        boundary = np.count_nonzero(~inside[g.adjacency[inside]])
        worst = min(worst, boundary / inside.sum())
    return float(worst)


@dataclass
class GraphRegularityReport:
    spectral_gap: float
    diameter: float
    max_cycles_in_ball: int
    ball_radius: int
    min_expansion: float
    green_bound_params: tuple
    checks_passed: dict

    def to_dict(self) -> dict:
        return {
            "spectral_gap": self.spectral_gap,
            "diameter": self.diameter,
            "max_cycles_in_ball": self.max_cycles_in_ball,
            "ball_radius": self.ball_radius,
            "min_expansion": self.min_expansion,
            "green_bound_params": list(self.green_bound_params),
            "checks_passed": dict(self.checks_passed),
        }


def structural_report(g: RegularGraph, k1: float = 0.3, K1: float = 3.0, k3: float = 0.2,
                      green=None, k2: float = 0.0, h0: float = 0.1,
                      n_probes: int = 100, seed: int = 0) -> GraphRegularityReport:
    """Finite-N checks of expansion, ball cycles, spectral gap and Green decay.

    ``green`` is a GreenOperator (or None to skip item iv, which is then
    reported as ``None``).
    """
    from .green import green_upper_bound  # late import: green depends on graphgen

    dist = all_pairs_distances(g)
    connected = bool(np.isfinite(dist).all())
    kappa = spectral_gap(g)
    expansion = expansion_probe(g, n_probes, seed) if connected else 0.0
    radius = int(math.floor(k1 * math.log(g.n_vertices)))
    cycles = int(ball_cycle_counts(g, radius).max()) if radius > 0 else 0
    checks = {
        "i_expander": connected and kappa > 0 and expansion >= h0,
        "ii_one_cycle_balls": cycles <= 1,
        "iii_spectral_gap": kappa > k2,
        "iv_green_decay": None,
    }
    if green is not None:
        checks["iv_green_decay"] = green_upper_bound(g, green, K1, k3, dist=dist).passed
    return GraphRegularityReport(kappa, float(dist.max()), cycles, radius, expansion,
                                 (K1, k3), checks)


# ----------------------------------------------------------- bad-vertex tail

@dataclass
class BadTailResult:
    n: int
    degree: int
    ell: int
    scale: float  # r^2 (r-1)^(2 ell - 2)
    bad_counts: np.ndarray
    mean_bad: float
    fitted_K: float
    K2: float
    tails: list  # dicts with z, estimate, ci_low, ci_high, bound, violated

    @property
    def violated(self) -> bool:
        return any(t["violated"] for t in self.tails)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "degree": self.degree, "ell": self.ell, "scale": self.scale,
            "mean_bad": self.mean_bad, "fitted_K": self.fitted_K, "K2": self.K2,
            "tails": self.tails, "violated": self.violated,
        }


def _clopper_pearson(k: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    lo = 0.0 if k == 0 else stats.beta.ppf(alpha / 2, k, n - k + 1)
    hi = 1.0 if k == n else stats.beta.ppf(1 - alpha / 2, k + 1, n - k)
    return float(lo), float(hi)


def bad_tail_check(n: int, degree: int, ell: int, z, n_graphs: int, seed: int,
                   K2: float | None = None) -> BadTailResult:
    """Monte Carlo over random graphs of the count of ell-bad vertices.

    ``K2`` defaults to the fitted mean constant, which is what Markov's
    inequality gives.  A tail is violated when the lower confidence limit
    of the empirical tail exceeds ``K2 / z``.
    """
    if ell < 0 or (ell > 0 and ell >= math.log(5 * n) / math.log(degree - 1)):
        raise InvalidParameters(f"ell={ell} outside [0, log_(r-1)(5N))")
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    counts = np.empty(n_graphs, dtype=np.int64)
    for i in range(n_graphs):
        g = generate_simple(n, degree, sub_seed(seed, i))
        counts[i] = vertex_census(g, ell).bad_count
    scale = degree ** 2 * (degree - 1) ** (2 * ell - 2)
    mean = float(counts.mean())
    K = mean / scale
    K2 = K if K2 is None else K2
    tails = []
    for zz in zs:
        k = int(np.count_nonzero(counts >= scale * zz))
        lo, hi = _clopper_pearson(k, n_graphs)
        bound = float(K2 / zz)
        tails.append({"z": float(zz), "estimate": k / n_graphs, "ci_low": lo,
                      "ci_high": hi, "bound": bound, "violated": bool(lo > bound)})
    return BadTailResult(n, degree, ell, float(scale), counts, mean, K, K2, tails)
