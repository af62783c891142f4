"""Rescaling constants, extremal point processes and their statistical tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
from scipy import special, stats

from .errors import InvalidParameters

DEFAULT_INTERVALS = ((0.0, math.inf), (-1.0, 0.0), (-2.0, -1.0), (-3.0, -2.0))


@dataclass(frozen=True)
class RescalingConstants:
    n: int
    r: int
    sigma_r: float
    a_n: float
    b_n: float

    def to_dict(self) -> dict:
        return {"n": self.n, "r": self.r, "sigma_r": self.sigma_r, "a_n": self.a_n, "b_n": self.b_n}


def rescaling_constants(n: int, r: int) -> RescalingConstants:
    if n < 3:
        raise InvalidParameters(f"need N >= 3 for a_N > 0, got {n}")
    if r < 3:
        raise InvalidParameters(f"need r >= 3, got {r}")
    L = math.log(n)
    s = math.sqrt(2.0 * L)
    a = s - (math.log(L) + math.log(4.0 * math.pi)) / (2.0 * s)
    if a <= 0:
        raise InvalidParameters(f"a_N <= 0 for N={n}")
    return RescalingConstants(n, r, math.sqrt((r - 1) / (r - 2)), a, 1.0 / a)


def gaussian_tail(x):
    """Standard normal survival function via erfc."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def gumbel_cdf(t):
    return np.exp(-np.exp(-np.asarray(t, dtype=float)))


# ----------------------------------------------------------------- processes

@dataclass
class ExtremalProcess:
    """Rescaled points (Z_x - a_N)/b_N of one field sample.

    ``lower`` is set when only points above it were kept; ``size`` is always
    the size of the underlying vertex set.
    """

    points: np.ndarray
    max_point: float
    vertex_set_kind: str = "all"
    size: int = field(default=-1)
    lower: float = -math.inf

    def __post_init__(self):
        if self.size < 0:
            self.size = int(self.points.size)

    def truncate(self, lower: float) -> "ExtremalProcess":
        return ExtremalProcess(self.points[self.points > lower], self.max_point,
                               self.vertex_set_kind, self.size, max(lower, self.lower))

    def count(self, a: float, b: float) -> int:
        if a < self.lower:
            raise InvalidParameters(f"interval starts below truncation level {self.lower}")
        return int(np.count_nonzero((self.points > a) & (self.points < b)))


def _scale(values, c: RescalingConstants, normalize):
    if normalize is None or normalize is False:
        return values / c.sigma_r
    var = np.asarray(getattr(normalize, "matrix", normalize))
    if var.ndim == 2:
        var = np.diag(var)
    return values / np.sqrt(var)


def rescale(values, c: RescalingConstants, normalize=None, mask=None) -> np.ndarray:
    """Rescaled points for one sample or a (replicas, N) stack."""
    values = np.asarray(values, dtype=float)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[-1] != values.shape[-1]:
            raise InvalidParameters(f"mask length {mask.shape[-1]} != sample length {values.shape[-1]}")
    z = _scale(values, c, normalize)
    pts = (z - c.a_n) / c.b_n
    return pts if mask is None else pts[..., mask]


def extract_process(sample, c: RescalingConstants, normalize=None, mask=None) -> ExtremalProcess:
    """Extremal process of a single field sample.

    ``normalize`` may be a variance vector or a GreenOperator; each value is
    then divided by its own standard deviation instead of sigma_r.  ``mask``
    restricts the process to flagged (good) vertices.
    """
    values = getattr(sample, "values", sample)
    pts = rescale(values, c, normalize, mask)
    kind = "all" if mask is None else "good-only"
    return ExtremalProcess(pts, float(pts.max()) if pts.size else -math.inf, kind)


# --------------------------------------------------------------- KS vs Gumbel

def kolmogorov_sf(x: float, terms: int = 100) -> float:
    """P(K > x) for the asymptotic Kolmogorov distribution."""
    if x <= 0:
        return 1.0
    k = np.arange(1, terms + 1, dtype=float)
    if x < 0.5:
        # theta-function form converges fast for small x
        cdf = math.sqrt(2 * math.pi) / x * np.sum(np.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8 * x * x)))
        return float(min(1.0, max(0.0, 1.0 - cdf)))
    sf = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * x * x))
    return float(min(1.0, max(0.0, sf)))


@dataclass
class KSResult:
    statistic: float
    pvalue: float
    n: int

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "pvalue": self.pvalue, "n": self.n}


def ks_statistic(sample, cdf: Callable) -> float:
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_gumbel(max_samples, min_replicas: int = 100) -> KSResult:
    x = np.asarray(max_samples, dtype=float)
    if x.size < min_replicas:
        raise InvalidParameters(f"need >= {min_replicas} replicas, got {x.size}")
    d = ks_statistic(x, gumbel_cdf)
    return KSResult(d, kolmogorov_sf(math.sqrt(x.size) * d), int(x.size))


# ------------------------------------------------------------- interval tests

def _counts_matrix(processes, intervals) -> np.ndarray:
    if isinstance(processes, np.ndarray):
        pts = processes
        return np.stack([np.count_nonzero((pts > a) & (pts < b), axis=-1) for a, b in intervals], axis=-1)
    return np.array([[p.count(a, b) for a, b in intervals] for p in processes])


def ppp_target_mean(a: float, b: float) -> float:
    return math.exp(-a) - (0.0 if math.isinf(b) else math.exp(-b))


def poisson_chi2(counts, mu: float, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Chi-square goodness of fit of integer ``counts`` to Poisson(mu), pooled bins."""
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.size
    k_hi = int(stats.poisson.ppf(1 - 1e-12, mu)) + 1
    pmf = stats.poisson.pmf(np.arange(k_hi + 1), mu)
    # greedy pooling from the left, tail pooled into the last bin
    bins, cur, edges = [], 0.0, []
    for k in range(k_hi + 1):
        cur += pmf[k]
        if cur * n >= min_expected:
            bins.append(cur)
            edges.append(k)
            cur = 0.0
    if len(bins) < 2:
        return math.nan, math.nan, 0
    edges[-1] = math.inf
    probs = np.array(bins)
    probs[-1] = 1.0 - probs[:-1].sum()
    lower = np.concatenate([[0], np.array(edges[:-1]) + 1])
    obs = np.array([np.count_nonzero((counts >= lo) & (counts <= hi)) for lo, hi in zip(lower, edges)])
    exp = n * probs
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    df = len(bins) - 1
    return chi2, float(stats.chi2.sf(chi2, df)), df


def ppp_interval_test(processes, intervals: Sequence = DEFAULT_INTERVALS) -> list[dict]:
    """Compare interval counts across replicas with Poisson(e^-a - e^-b)."""
    if len(processes) == 0:
        raise InvalidParameters("empty process list")
    for a, b in intervals:
        if not (math.isfinite(a) and a < b):
            raise InvalidParameters(f"interval ({a}, {b}) must be bounded below with a < b")
    C = _counts_matrix(processes, intervals)
    out = []
    for j, (a, b) in enumerate(intervals):
        mu = ppp_target_mean(a, b)
        chi2, p, df = poisson_chi2(C[:, j], mu)
        out.append({"interval": [a, b], "target_mean": mu, "mean_count": float(C[:, j].mean()),
                    "variance": float(C[:, j].var(ddof=1)) if len(C) > 1 else 0.0,
                    "chi2": chi2, "df": df, "pvalue": p})
    return out


def sample_ppp(rng: np.random.Generator, lower: float = -5.0) -> np.ndarray:
    """Exact draw of PPP(e^-x dx) restricted to (lower, inf)."""
    k = rng.poisson(math.exp(-lower))
    # points above `lower` are lower + Exp(1)
    return lower + rng.standard_exponential(k)


# ---------------------------------------------------------- Laplace functional

def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)

    def f(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    a, b = f(s), f(1.0 - s)
    return a / (a + b)


@dataclass(frozen=True)
class TestFunction:
    """Non-decreasing phi, zero left of ``lo`` and equal to ``height`` right of ``hi``."""

    func: Callable
    lo: float
    hi: float
    height: float
    name: str = ""

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def validate(self, grid: int = 2001) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidParameters("test function needs a bounded support lo < hi")
        x = np.linspace(self.lo - 1.0, self.hi + 1.0, grid)
        y = self(x)
        if np.any(y < 0) or np.any(np.diff(y) < -1e-12):
            raise InvalidParameters("test function must be non-negative and non-decreasing")
        if np.any(np.abs(y[x <= self.lo]) > 1e-12) or np.any(np.abs(y[x >= self.hi] - self.height) > 1e-12):
            raise InvalidParameters("test function must vanish left of lo and be constant right of hi")


def ramp(lo: float, hi: float, height: float = 1.0) -> TestFunction:
    if height < 0 or not lo < hi:
        raise InvalidParameters("ramp needs lo < hi and height >= 0")
    return TestFunction(lambda x: height * smooth_step((x - lo) / (hi - lo)), lo, hi, height,
                        f"ramp({lo},{hi},{height})")


def canonical_test_functions() -> list[TestFunction]:
    return [ramp(0.0, 1.0), ramp(-1.0, 1.0), ramp(-2.0, 0.0)]


def laplace_target(phi: TestFunction) -> float:
    """exp(-integral (1 - e^-phi) e^-x dx) for PPP(e^-x dx)."""
    inner, _ = scipy.integrate.quad(lambda x: (1.0 - math.exp(-float(phi(x)))) * math.exp(-x),
                                    phi.lo, phi.hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    tail = (1.0 - math.exp(-phi.height)) * math.exp(-phi.hi)
    return math.exp(-(inner + tail))


@dataclass
class LaplaceResult:
    empirical: float
    stderr: float
    target: float

    @property
    def gap(self) -> float:
        return abs(self.empirical - self.target)

    def to_dict(self) -> dict:
        return {"empirical": self.empirical, "stderr": self.stderr, "target": self.target, "gap": self.gap}


def laplace_values(processes, phi: TestFunction) -> np.ndarray:
    """Per-replica exp(-<P, phi>)."""
    if isinstance(processes, np.ndarray):
        return np.exp(-np.sum(np.where(processes > phi.lo, phi(processes), 0.0), axis=-1))
    out = []
    for p in processes:
        if p.lower > phi.lo:
            raise InvalidParameters("process truncated above the support of phi")
        out.append(math.exp(-float(np.sum(phi(p.points[p.points > phi.lo])))))
    return np.array(out)


def laplace_functional(processes, phi: TestFunction) -> LaplaceResult:
    phi.validate()
    v = laplace_values(processes, phi)
    if v.size == 0:
        raise InvalidParameters("empty process list")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return LaplaceResult(float(v.mean()), se, laplace_target(phi))
