"""Gaussian comparison machinery: interpolation identity, pair bounds and comparison sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .errors import InvalidParameters, OperatorQuality, SizeLimit
from .extremes import RescalingConstants, gaussian_tail

H_NODES = 21
RECT_NODES = 40
GH_ORDER = 64
MC_DRAWS = 1_000_000


def h_function(rho, a_n: float):
    """(1 - rho^2)^(-1/2) exp(-a_n^2 / (1 + rho)); increasing on [0, 1)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho >= 1) or np.any(rho < 0):
        raise InvalidParameters("H is defined for rho in [0, 1)")
    out = np.exp(-a_n * a_n / (1.0 + rho)) / np.sqrt(1.0 - rho * rho)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------- intervals

def interval_length(S) -> float:
    return S[1] - S[0]


def dist_to_interval(x, S):
    """Distance from the point ``x`` to the open interval S (exact for Fractions)."""
    lo, hi = S
    if x < lo:
        return lo - x
    if x > hi:
        return x - hi
    return x - x  # zero of the same type


def scale_interval(S, b):
    return (b * S[0], b * S[1])


def _check_interval(S):
    lo, hi = S
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise InvalidParameters(f"S must be a non-empty bounded interval, got {S}")


# ------------------------------------------------------------ pair bounds

def bivariate_bound(rho: float, u: float, S) -> float:
    """|S|^2 / (2 pi sqrt(1 - rho^2)) exp(-d(u, S)^2 / (1 + rho)), d(u, S) = dist(-u, S)."""
    if not 0 <= rho < 1:
        raise InvalidParameters("rho must lie in [0, 1)")
    if u <= 0:
        raise InvalidParameters("u must be positive")
    lo, hi = S
    if hi <= lo:
        return 0.0
    d = float(dist_to_interval(-u, S))
    return (hi - lo) ** 2 / (2 * math.pi * math.sqrt(1 - rho * rho)) * math.exp(-d * d / (1 + rho))


def _rect_quad(rho, lo: float, hi: float, nodes: int) -> np.ndarray:
    """P(X in (lo, hi), Y in (lo, hi)) for unit-variance pairs, tensor Gauss-Legendre."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    t, w = leggauss(nodes)
    x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    q = X * X + Y * Y
    xy = X * Y
    r = rho[:, None, None]
    det = 1.0 - r * r
    dens = np.exp(-(q - 2 * r * xy) / (2 * det)) / (2 * math.pi * np.sqrt(det))
    return np.sum(dens * W, axis=(1, 2))


@dataclass
class ProbEstimate:
    value: float
    error: float
    method: str
    flagged: bool = False

    def to_dict(self) -> dict:
        return {"value": self.value, "error": self.error, "method": self.method, "flagged": self.flagged}


def bivariate_prob(rho: float, u: float, S, method: str = "quadrature", budget: int | None = None,
                   rng: np.random.Generator | None = None) -> ProbEstimate:
    """P(X - u in S, Y - u in S) for a unit-variance pair with correlation ``rho``."""
    _check_interval(S)
    if not -1 < rho < 1:
        raise InvalidParameters("rho must lie in (-1, 1)")
    lo, hi = u + S[0], u + S[1]
    if method == "quadrature":
        n = budget or RECT_NODES
        if n < 2:
            raise InvalidParameters("quadrature needs at least 2 nodes")
        v = float(_rect_quad(rho, lo, hi, n)[0])
        v2 = float(_rect_quad(rho, lo, hi, 2 * n)[0])
        return ProbEstimate(v2, abs(v2 - v), "quadrature")
    if method == "mc":
        n = budget or MC_DRAWS
        rng = rng if rng is not None else np.random.default_rng(0)
        hits = 0
        done = 0
        s = math.sqrt(1 - rho * rho)
        while done < n:
            m = min(n - done, 1_000_000)
            x = rng.standard_normal(m)
            y = rho * x + s * rng.standard_normal(m)
            hits += int(np.count_nonzero((x > lo) & (x < hi) & (y > lo) & (y < hi)))
            done += m
        p = hits / n
        if hits < 10:
            # too few hits for a normal error bar: use the rule-of-three width
            return ProbEstimate(p, max(3.0 / n, math.sqrt(max(p, 1.0 / n) / n)), "mc", True)
        return ProbEstimate(p, math.sqrt(p * (1 - p) / n), "mc")
    raise InvalidParameters(f"unknown method {method!r}")


# --------------------------------------------------------- interpolation

@dataclass
class InterpolationFamily:
    sigma0: np.ndarray
    sigma1: np.ndarray

    def __post_init__(self):
        for s in (self.sigma0, self.sigma1):
            if s.shape != self.sigma0.shape or s.shape[0] != s.shape[1]:
                raise InvalidParameters("covariances must be square and of equal size")
            if np.abs(s - s.T).max() > 1e-10:
                raise InvalidParameters("covariance not symmetric")
            if np.linalg.eigvalsh(s)[0] < -1e-9:
                raise InvalidParameters("covariance not positive semidefinite")
        if np.abs(np.diag(self.sigma0) - np.diag(self.sigma1)).max() > 1e-10:
            raise InvalidParameters("end covariances must have equal diagonals")

    @property
    def n(self) -> int:
        return self.sigma0.shape[0]

    def interpolate(self, h: float) -> np.ndarray:
        return (1 - h) * self.sigma0 + h * self.sigma1

    def normalized(self) -> "InterpolationFamily":
        s = np.sqrt(np.diag(self.sigma0))
        D = np.outer(s, s)
        return InterpolationFamily(self.sigma0 / D, self.sigma1 / D)


def _sqrt_psd(S: np.ndarray) -> np.ndarray:
    lam, V = scipy.linalg.eigh(S)
    return V * np.sqrt(np.clip(lam, 0, None))


def gauss_expectation(S: np.ndarray, f: Callable, order: int = GH_ORDER, mc_draws: int = MC_DRAWS,
                      rng: np.random.Generator | None = None):
    """E f(Y) for Y ~ N(0, S): tensor Gauss-Hermite for n <= 3, Monte Carlo above."""
    n = S.shape[0]
    B = _sqrt_psd(S)
    if n <= 3:
        t, w = hermgauss(order)
        grids = np.meshgrid(*([t] * n), indexing="ij")
        Z = np.sqrt(2.0) * np.stack([g.ravel() for g in grids], axis=1)
        W = np.ones(Z.shape[0])
        for k, g in enumerate(np.meshgrid(*([w] * n), indexing="ij")):
            W = W * g.ravel()
        W = W / math.pi ** (n / 2)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        Z = rng.standard_normal((mc_draws, n))
        W = np.full(mc_draws, 1.0 / mc_draws)
    vals = f(Z @ B.T)
    return np.tensordot(W, vals, axes=(0, 0))


@dataclass(frozen=True)
class Functional:
    """Smooth F: R^n -> R with its Hessian, both vectorised over rows."""

    value: Callable
    hessian: Callable
    name: str


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def bilinear() -> Functional:
    def val(x):
        return x[:, 0] * x[:, 1]

    def hess(x):
        H = np.zeros((x.shape[0], x.shape[1], x.shape[1]))
        H[:, 0, 1] = H[:, 1, 0] = 1.0
        return H

    return Functional(val, hess, "x1*x2")


def ramp_product(centers, slope: float = 2.0) -> Functional:
    """prod_i s(slope (x_i - c_i)) with s the logistic ramp."""
    c = np.asarray(centers, dtype=float)

    def parts(x):
        s = _logistic(slope * (x - c))
        d1 = slope * s * (1 - s)
        d2 = slope * slope * s * (1 - s) * (1 - 2 * s)
        return s, d1, d2

    def val(x):
        return np.prod(parts(x)[0], axis=1)

    def hess(x):
        s, d1, d2 = parts(x)
        n = x.shape[1]
        H = np.empty((x.shape[0], n, n))
        for i in range(n):
            for j in range(n):
                f = np.ones(x.shape[0])
                for k in range(n):
                    if k == i == j:
                        f = f * d2[:, k]
                    elif k == i or k == j:
                        f = f * d1[:, k]
                    else:
                        f = f * s[:, k]
                H[:, i, j] = f
        return H

    return Functional(val, hess, f"ramp_product{tuple(c)}")


def laplace_type(level: float, height: float = 1.0, slope: float = 2.0) -> Functional:
    """exp(-sum_k phi(x_k)) with phi = height * logistic(slope (x - level))."""

    def parts(x):
        s = _logistic(slope * (x - level))
        phi = height * s
        d1 = height * slope * s * (1 - s)
        d2 = height * slope * slope * s * (1 - s) * (1 - 2 * s)
        return phi, d1, d2

    def val(x):
        return np.exp(-parts(x)[0].sum(axis=1))

    def hess(x):
        phi, d1, d2 = parts(x)
        F = np.exp(-phi.sum(axis=1))
        H = d1[:, :, None] * d1[:, None, :]
        idx = np.arange(x.shape[1])
        H[:, idx, idx] -= d2
        return F[:, None, None] * H

    return Functional(val, hess, f"laplace({level},{height})")


def functional_family(n: int) -> list[Functional]:
    """The smooth test functionals used by the identity check."""
    fam = [ramp_product(np.linspace(-0.5, 0.5, n)), laplace_type(0.5)]
    if n >= 2:
        fam.insert(0, bilinear())
    return fam


@dataclass
class IdentityCheck:
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "gap": self.gap}


def interpolation_identity_check(fam: InterpolationFamily, F: Functional, quad_nodes: int = H_NODES,
                                 gh_order: int = GH_ORDER, rng=None) -> IdentityCheck:
    """Both sides of E[F(Y1) - F(Y0)] = 1/2 sum_ij dLambda_ij int_0^1 E[d_ij F(Y(h))] dh."""
    if np.abs(np.diag(fam.sigma0) - 1).max() > 1e-10:
        raise InvalidParameters("interpolation identity check needs unit diagonals")
    e1 = gauss_expectation(fam.sigma1, F.value, gh_order, rng=rng)
    e0 = gauss_expectation(fam.sigma0, F.value, gh_order, rng=rng)
    t, w = leggauss(quad_nodes)
    hs, ws = 0.5 * (t + 1), 0.5 * w
    dL = fam.sigma1 - fam.sigma0
    rhs = 0.0
    for h, wh in zip(hs, ws):
        S = fam.interpolate(h)
        assert np.linalg.eigvalsh(S)[0] >= -1e-9
        EH = gauss_expectation(S, F.hessian, gh_order, rng=rng)
        rhs += wh * 0.5 * float(np.sum(dL * EH))
    return IdentityCheck(float(e1 - e0), rhs)


def random_correlation(n: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((n, n + 1))
    C = A @ A.T
    d = np.sqrt(np.diag(C))
    C = C / np.outer(d, d)
    np.fill_diagonal(C, 1.0)
    return C


# ------------------------------------------------------------- tree pairs

def tree_distance_matrix(t) -> np.ndarray:
    """All-pairs distances on a TreeSubtree via ancestor tables (small N)."""
    n = t.n_vertices
    if n > 5000:
        raise SizeLimit("dense tree distance matrix limited to N <= 5000")
    D = int(t.depth.max())
    anc = np.full((n, D + 1), -1, dtype=np.int64)
    anc[np.arange(n), t.depth] = np.arange(n)
    for j in range(D, 0, -1):
        has = anc[:, j] >= 0
        anc[has, j - 1] = t.parent[anc[has, j]]
    same = (anc[:, None, :] == anc[None, :, :]) & (anc[:, None, :] >= 0)
    lca_depth = same.sum(axis=2) - 1
    return t.depth[:, None] + t.depth[None, :] - 2 * lca_depth


def tree_pair_counts(t) -> np.ndarray:
    """Exact number of unordered pairs at each distance k (index k) on a subtree.

    Pairs are grouped by their lowest common ancestor; the counts reduce to
    Gram matrices of the descendant-depth profiles, so the cost is O(N D^2).
    """
    n = t.n_vertices
    D = int(t.depth.max())
    desc = np.zeros((n, D + 1), dtype=np.int64)
    desc[:, 0] = 1
    for lv in reversed(t.level_slices()[1:]):
        np.add.at(desc[:, 1:], t.parent[lv], desc[lv, :-1])
    counts = np.zeros(2 * D + 1, dtype=np.int64)
    # ancestor/descendant pairs
    counts[1:D + 1] += desc[:, 1:].sum(axis=0)
    # pairs in distinct child subtrees of their LCA
    Q = desc[:, 1:]
    M = Q.T @ Q
    C = desc[1:].T @ desc[1:]
    cross = np.zeros(2 * D + 1, dtype=np.int64)
    for i in range(D):
        for j in range(D):
            cross[i + j + 2] += M[i, j]
            cross[i + j + 2] -= C[i, j]
    counts += cross // 2
    return counts


@dataclass
class PairDistanceProfile:
    counts: np.ndarray  # counts[k] = unordered pairs at distance k
    rhos: np.ndarray  # rhos[k] = max correlation at distance k
    n_vertices: int
    degree: int
    C_min: float = math.nan

    @property
    def k_range(self) -> tuple[int, int]:
        nz = np.flatnonzero(self.counts)
        nz = nz[nz > 0]
        return (int(nz.min()), int(nz.max())) if nz.size else (0, 0)

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "rhos": self.rhos.tolist(),
                "k_range": list(self.k_range), "C_min": self.C_min}


def pair_profile_tree(r: int, subtree) -> PairDistanceProfile:
    if subtree.degree != r:
        raise InvalidParameters("subtree degree does not match r")
    counts = tree_pair_counts(subtree)
    n = subtree.n_vertices
    k = np.arange(counts.size)
    rhos = np.power(float(r - 1), -k.astype(float))
    cap = np.minimum(r * np.power(float(r - 1), k - 1.0), n)
    ratio = counts[1:] / (n * cap[1:])
    C = float(ratio.max()) if ratio.size else 0.0
    return PairDistanceProfile(counts, rhos, n, r, C)


@dataclass
class TreeSum:
    n: int
    exact_sum: float  # sum_k n_k rho_k H(rho_k), unordered pairs
    h_rho1_form: float  # H(rho_1) sum_k n_k rho_k
    nlogn_form: float  # H(rho_1) N log N
    C_tilde: float  # exact_sum / nlogn_form
    exponent: float  # (2 - r)/r

    def tn_bound(self, S) -> float:
        """|S|^2/(2 pi) times the ordered-pair sum."""
        return interval_length(S) ** 2 / (2 * math.pi) * 2 * self.exact_sum

    def to_dict(self) -> dict:
        return {"n": self.n, "exact_sum": self.exact_sum, "h_rho1_form": self.h_rho1_form,
                "nlogn_form": self.nlogn_form, "C_tilde": self.C_tilde, "exponent": self.exponent}


def comparison_sum_tree(profile: PairDistanceProfile, constants: RescalingConstants) -> TreeSum:
    k = np.arange(1, profile.counts.size)
    nk = profile.counts[1:].astype(float)
    rk = profile.rhos[1:]
    H = h_function(rk, constants.a_n)
    exact = float(np.sum(nk * rk * H))
    h1 = h_function(1.0 / (profile.degree - 1), constants.a_n)
    n = profile.n_vertices
    nlogn = h1 * n * math.log(n)
    return TreeSum(n, exact, float(h1 * np.sum(nk * rk)), nlogn,
                   exact / nlogn if nlogn > 0 else math.nan, (2 - profile.degree) / profile.degree)


def comparison_ladder(r: int, sizes) -> list[dict]:
    """Tree comparison sums along a ladder of N, with the log-log slope."""
    from .extremes import rescaling_constants
    from .gff import build_subtree

    rows = []
    for n in sizes:
        prof = pair_profile_tree(r, build_subtree(r, n))
        ts = comparison_sum_tree(prof, rescaling_constants(n, r))
        rows.append({"N": n, "sum": ts.exact_sum, "bound": ts.nlogn_form, "C": prof.C_min})
    x = np.log([row["N"] for row in rows])
    y = np.log([row["sum"] for row in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(rows) > 1 else math.nan
    for row in rows:
        row["slope"] = slope
    return rows


# ------------------------------------------------------------- graph sums

@dataclass
class GraphSum:
    eps_near: float
    eps_far: float
    k_star: int
    clamp_count: int
    total_abs: float  # same sum with |rho| in place of the clamp
    n_pairs: int

    @property
    def total(self) -> float:
        return self.eps_near + self.eps_far

    def to_dict(self) -> dict:
        return {"eps_near": self.eps_near, "eps_far": self.eps_far, "k_star": self.k_star,
                "total": self.total, "clamp_count": self.clamp_count,
                "total_abs": self.total_abs, "n_pairs": self.n_pairs}


def k_star(n: int, r: int, k3: float, delta: float) -> int:
    return int(math.ceil((k3 + delta) / math.log(r - 1) * math.log(n)))


def comparison_sum_graph(g, G, constants: RescalingConstants, k3: float = 0.2, delta: float = 0.1,
                         dist=None, mask=None) -> GraphSum:
    """sum over unordered pairs of rho H(rho), split at distance k_star.

    Negative correlations are clamped to 0 (contributing nothing); the count
    of clamped pairs and the |rho| variant are reported alongside.
    """
    from .graphgen import all_pairs_distances

    if dist is None:
        dist = all_pairs_distances(g)
    M = G.matrix
    s = np.sqrt(np.diag(M))
    iu = np.triu_indices(g.n_vertices, 1)
    if mask is not None:
        keep = np.asarray(mask, dtype=bool)
        keep = keep[iu[0]] & keep[iu[1]]
        iu = (iu[0][keep], iu[1][keep])
    rho = M[iu] / (s[iu[0]] * s[iu[1]])
    if np.any(rho >= 1):
        raise OperatorQuality("correlation >= 1 between distinct vertices")
    d = dist[iu]
    clamped = np.clip(rho, 0.0, None)
    terms = clamped * h_function(clamped, constants.a_n)
    ks = k_star(g.n_vertices, g.degree, k3, delta)
    near = d <= ks
    ra = np.abs(rho)
    total_abs = float(np.sum(ra * h_function(ra, constants.a_n)))
    return GraphSum(float(terms[near].sum()), float(terms[~near].sum()), ks,
                    int(np.count_nonzero(rho < 0)), total_abs, int(rho.size))


# ------------------------------------------------------- hypothesis sum

@dataclass
class ToZeroSum:
    value: float
    pair_bound: float  # same integral with the pair bound in place of the probability
    closed_form: float  # C_S sum |dSigma| H_d(max rho), no h-integral
    n: int

    @property
    def dominated(self) -> bool:
        return self.value <= self.pair_bound * (1 + 1e-9) and self.pair_bound <= self.closed_form * (1 + 1e-9)

    def to_dict(self) -> dict:
        return {"value": self.value, "pair_bound": self.pair_bound,
                "closed_form": self.closed_form, "n": self.n, "dominated": self.dominated}


def eq_tozero_sum(fam: InterpolationFamily, constants: RescalingConstants, S, h_nodes: int = H_NODES,
                  prob_method: str = "quadrature", max_n: int = 64, rect_nodes: int = RECT_NODES,
                  rng=None) -> ToZeroSum:
    """(1/b^2) int_0^1 sum_{i != j} |dSigma_ij| P(both rescaled coordinates in S) dh.

    The family must have unit diagonals; S is an open interval.
    """
    _check_interval(S)
    n = fam.n
    if n > max_n:
        raise SizeLimit(f"eq_tozero_sum limited to n <= {max_n}")
    if np.abs(np.diag(fam.sigma0) - 1).max() > 1e-10:
        raise InvalidParameters("family must have unit diagonals")
    a, b = constants.a_n, constants.b_n
    bS = scale_interval(S, b)
    d = float(dist_to_interval(-a, bS))
    lenS = b * interval_length(S)
    iu = np.triu_indices(n, 1)
    dS = np.abs(fam.sigma1 - fam.sigma0)[iu]
    active = dS > 0
    t, w = leggauss(h_nodes)
    hs, ws = 0.5 * (t + 1), 0.5 * w
    value = 0.0
    bound_int = 0.0
    for h, wh in zip(hs, ws):
        rho = fam.interpolate(h)[iu][active]
        if prob_method == "quadrature":
            p = _rect_quad(rho, a + bS[0], a + bS[1], rect_nodes)
        else:
            p = np.array([bivariate_prob(float(x), a, bS, "mc", rng=rng).value for x in rho])
        value += wh * float(np.sum(dS[active] * p))
        rp = np.clip(rho, 0, None)
        pb = lenS ** 2 / (2 * math.pi * np.sqrt(1 - rho * rho)) * np.exp(-d * d / (1 + rp))
        bound_int += wh * float(np.sum(dS[active] * pb))
    # ordered pairs: factor 2; rescaling: 1/b^2
    value *= 2 / b ** 2
    bound_int *= 2 / b ** 2
    rmax = np.clip(np.maximum(fam.sigma0[iu], fam.sigma1[iu]), 0, None)[active]
    Hd = np.exp(-d * d / (1 + rmax)) / np.sqrt(1 - rmax * rmax)
    closed = interval_length(S) ** 2 / (2 * math.pi) * 2 * float(np.sum(dS[active] * Hd))
    return ToZeroSum(value, bound_int, closed, n)
