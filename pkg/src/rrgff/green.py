"""Tree Green function and the zero-average Green function of a finite graph.

The walk convention is the unit-rate continuous-time simple random walk with
generator Q = A/r - I, so on a finite connected graph

    G = integral_0^inf (exp(tQ) - 1/N) dt = (Pi + I - A/r)^{-1} - Pi,

where Pi is the projection onto constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import InvalidParameters, SingularOperator, SizeLimit
from .graphgen import RegularGraph, all_pairs_distances, is_connected, spectral_gap

DENSE_CAP = 4096
EXPM_CAP = 512


def tree_green(r: int, d) -> float | np.ndarray:
    """Green function of SRW on the r-regular tree at distance ``d``."""
    if r < 3:
        raise InvalidParameters(f"tree Green function needs r >= 3, got {r}")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise InvalidParameters("distance must be >= 0")
    out = (r - 1) / (r - 2) * np.power(float(r - 1), -d)
    return float(out) if out.ndim == 0 else out


def sigma_r2(r: int) -> float:
    return (r - 1) / (r - 2)


@dataclass(frozen=True)
class GreenOperator:
    n_vertices: int
    matrix: np.ndarray
    build_method: str

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def invariant_errors(self) -> dict:
        G = self.matrix
        ev = np.linalg.eigvalsh(G)
        return {
            "symmetry": float(np.abs(G - G.T).max()),
            "row_sum": float(np.abs(G.sum(axis=1)).max()),
            "min_eigenvalue": float(ev[0]),
            "near_zero_modes": int(np.count_nonzero(np.abs(ev) <= 1e-8 * max(1.0, ev[-1]))),
        }

    def check(self) -> None:
        e = self.invariant_errors()
        assert e["symmetry"] <= 1e-10, e
        assert e["row_sum"] <= 1e-8, e
        assert e["min_eigenvalue"] >= -1e-9, e
        assert e["near_zero_modes"] == 1, e

    def summary(self) -> dict:
        G = self.matrix
        n = self.n_vertices
        diag = np.diag(G)
        off = G[~np.eye(n, dtype=bool)] if n > 1 else np.zeros(1)
        ev = np.linalg.eigvalsh(G)
        return {
            "n_vertices": n,
            "build_method": self.build_method,
            "diag_mean": float(diag.mean()),
            "diag_min": float(diag.min()),
            "diag_max": float(diag.max()),
            "offdiag_min": float(off.min()),
            "offdiag_max": float(off.max()),
            "eig_min": float(ev[0]),
            "eig_max": float(ev[-1]),
        }


def _walk_laplacian(g: RegularGraph) -> np.ndarray:
    return np.eye(g.n_vertices) - g.dense_adjacency() / g.degree


def _shift_invert(g: RegularGraph) -> np.ndarray:
    n = g.n_vertices
    Pi = np.full((n, n), 1.0 / n)
    M = Pi + _walk_laplacian(g)
    G = scipy.linalg.solve(M, np.eye(n), assume_a="pos") - Pi
    return 0.5 * (G + G.T)


def _eigen(g: RegularGraph) -> np.ndarray:
    n = g.n_vertices
    lam, V = scipy.linalg.eigh(_walk_laplacian(g))
    # lam[0] is the constant mode
    inv = np.zeros(n)
    inv[1:] = 1.0 / lam[1:]
    G = (V * inv) @ V.T
    return 0.5 * (G + G.T)


def _iterative(g: RegularGraph, rtol: float = 1e-9) -> np.ndarray:
    n, r = g.n_vertices, g.degree
    A = g.sparse_adjacency().astype(float)

    def mv(v):
        v = np.ravel(v)
        return v.mean() + v - (A @ v) / r

    op = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    G = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        u, info = spla.cg(op, e, rtol=rtol, atol=0.0, maxiter=10 * n)
        if info != 0:
            raise SingularOperator(f"CG did not converge for column {j}")
        G[:, j] = u - 1.0 / n
        e[j] = 0.0
    return 0.5 * (G + G.T)


def zero_average_green(g: RegularGraph, method: str = "shift-invert") -> GreenOperator:
    """Zero-average Green operator of a connected regular graph.

    ``method`` is ``shift-invert`` (default), ``eigendecomposition`` or
    ``iterative`` (per-column CG, used automatically above the dense cap).
    """
    if not is_connected(g):
        raise SingularOperator("graph is disconnected; the Green operator is singular on 1-perp")
    if method == "shift-invert" and g.n_vertices > DENSE_CAP:
        method = "iterative"
    builders = {"shift-invert": _shift_invert, "eigendecomposition": _eigen, "iterative": _iterative}
    try:
        build = builders[method]
    except KeyError:
        raise InvalidParameters(f"unknown Green build method {method!r}") from None
    return GreenOperator(g.n_vertices, build(g), method)


def green_by_time_quadrature(g: RegularGraph, epsabs: float = 1e-11) -> np.ndarray:
    """Integrate exp(tQ) - Pi over [0, 60/kappa] with adaptive vector quadrature.

    Independent oracle for small graphs; no eigendecomposition or solve.
    """
    n = g.n_vertices
    if n > 64:
        raise SizeLimit("time-quadrature oracle limited to N <= 64")
    Q = g.dense_adjacency() / g.degree - np.eye(n)
    Pi = np.full((n, n), 1.0 / n)
    kappa = spectral_gap(g)
    if kappa <= 0:
        raise SingularOperator("graph is disconnected")
    T = 60.0 / kappa
    G, _ = scipy.integrate.quad_vec(lambda t: scipy.linalg.expm(t * Q) - Pi, 0.0, T,
                                    epsabs=epsabs, epsrel=1e-12, limit=400)
    return G


# ----------------------------------------------------------------- checks

@dataclass
class TreeComparison:
    max_error: float | None
    exponent: float | None
    n_good: int
    ell0: int

    @property
    def no_good_vertices(self) -> bool:
        return self.n_good == 0

    def to_dict(self) -> dict:
        return {"max_error": self.max_error, "exponent": self.exponent,
                "n_good": self.n_good, "ell0": self.ell0,
                "no_good_vertices": self.no_good_vertices}


def green_vs_tree(g: RegularGraph, G: GreenOperator, census, ell0: int, dist=None) -> TreeComparison:
    """Largest |G(x, y) - g(d(x, y))| over good x and d(x, y) <= ell0.

    ``exponent`` is -log(err)/log(N), the fitted decay exponent.
    """
    if census.ell < ell0 + 1:
        raise InvalidParameters("census radius must be at least ell0 + 1")
    good = np.flatnonzero(census.good_flags)
    if good.size == 0:
        return TreeComparison(None, None, 0, ell0)
    if dist is None:
        dist = all_pairs_distances(g)
    D = dist[good]
    near = D <= ell0
    ref = tree_green(g.degree, np.where(near, D, 0))
    err = np.abs(G.matrix[good] - ref)[near]
    worst = float(err.max())
    n = g.n_vertices
    exponent = -math.log(worst) / math.log(n) if worst > 0 and n > 1 else math.inf
    return TreeComparison(worst, exponent, int(good.size), ell0)


@dataclass
class HeatKernelCheck:
    t: float
    x: int
    deviation: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.deviation <= self.bound


def heat_kernel_deviation(g: RegularGraph, t: float, x: int, kappa: float | None = None,
                          max_n: int = EXPM_CAP) -> HeatKernelCheck:
    """max_y |P_x(X_t = y) - 1/N| via the matrix exponential, with bound exp(-kappa t)."""
    n = g.n_vertices
    if n > max_n:
        raise SizeLimit(f"dense matrix exponential limited to N <= {max_n}, got {n}")
    if t < 0:
        raise InvalidParameters("t must be >= 0")
    Q = g.dense_adjacency() / g.degree - np.eye(n)
    row = scipy.linalg.expm(t * Q)[x]
    if kappa is None:
        kappa = spectral_gap(g)
    return HeatKernelCheck(t, x, float(np.abs(row - 1.0 / n).max()), math.exp(-kappa * t))


def heat_kernel_rows(g: RegularGraph, t: float) -> np.ndarray:
    """Full transition matrix at time t (all starting points)."""
    if g.n_vertices > EXPM_CAP:
        raise SizeLimit(f"dense matrix exponential limited to N <= {EXPM_CAP}")
    Q = g.dense_adjacency() / g.degree - np.eye(g.n_vertices)
    return scipy.linalg.expm(t * Q)


@dataclass
class GreenBoundCheck:
    passed: bool
    worst_pair: tuple | None
    worst_excess: float
    K1: float
    k3: float

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst_pair": self.worst_pair,
                "worst_excess": self.worst_excess, "K1": self.K1, "k3": self.k3}


def green_upper_bound(g: RegularGraph, G: GreenOperator, K1: float, k3: float, dist=None) -> GreenBoundCheck:
    """Check G(x, y) <= max(K1 (r-1)^-d(x,y), N^-k3) over all ordered pairs."""
    if dist is None:
        dist = all_pairs_distances(g)
    n, r = g.n_vertices, g.degree
    bound = np.maximum(K1 * np.power(float(r - 1), -dist), n ** (-k3))
    excess = G.matrix - bound
    i, j = np.unravel_index(np.argmax(excess), excess.shape)
    worst = float(excess[i, j])
    passed = worst <= 0
    return GreenBoundCheck(passed, None if passed else (int(i), int(j)), worst, K1, k3)


def fit_k3(g: RegularGraph, G: GreenOperator, K1: float, dist=None) -> float:
    """Largest k3 for which the Green decay bound holds with the given K1."""
    if dist is None:
        dist = all_pairs_distances(g)
    n, r = g.n_vertices, g.degree
    residual = G.matrix[G.matrix > K1 * np.power(float(r - 1), -dist)]
    if residual.size == 0:
        return math.inf
    top = residual.max()
    if top <= 0:
        return math.inf
    return float(-math.log(top) / math.log(n))


def fit_K1(g: RegularGraph, G: GreenOperator, k3: float, dist=None) -> float:
    """Smallest K1 for which the Green decay bound holds with the given k3."""
    if dist is None:
        dist = all_pairs_distances(g)
    n, r = g.n_vertices, g.degree
    over = G.matrix > n ** (-k3)
    if not over.any():
        return 0.0
    return float((G.matrix * np.power(float(r - 1), dist))[over].max())


def tree_walk_visits(r: int, depth: int, n_walks: int, seed: int, chunk: int = 200_000) -> np.ndarray:
    """Monte Carlo estimate of g(d) for d < depth from discrete walk visit counts.

    Walks start at the root of the depth-``depth`` truncated r-regular tree and
    are killed on reaching the leaves. By symmetry only the distance to the root
    matters: visits to level d are divided by the level size r (r-1)^(d-1).
    The discrete and unit-rate continuous walks have the same Green function.
    """
    from .seeding import stream

    if r < 3 or depth < 1 or n_walks < 1:
        raise InvalidParameters("need r >= 3, depth >= 1, n_walks >= 1")
    visits = np.zeros(depth, dtype=np.int64)
    done = 0
    for c in range(math.ceil(n_walks / chunk)):
        rng = stream(seed, c)
        m = min(chunk, n_walks - done)
        d = np.zeros(m, dtype=np.int64)
        while d.size:
            visits += np.bincount(d, minlength=depth)
            up = (d > 0) & (rng.random(d.size) < 1.0 / r)
            d = np.where(up, d - 1, d + 1)
            d = d[d < depth]
        done += m
    level = np.array([1.0] + [r * (r - 1.0) ** (k - 1) for k in range(1, depth)])
    return visits / level / n_walks
