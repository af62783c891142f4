"""Samplers for the tree GFF, the zero-average graph GFF and i.i.d. baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateOperator, InvalidParameters
from .green import GreenOperator, sigma_r2
from .seeding import stream

CLAMP = 1e-9


@dataclass(frozen=True)
class TreeSubtree:
    """First N vertices of the breadth-first enumeration of the r-regular tree."""

    degree: int
    n_vertices: int
    parent: np.ndarray  # parent[0] == -1
    depth: np.ndarray

    def level_slices(self) -> list[slice]:
        """Contiguous index ranges of each depth (BFS order keeps levels contiguous)."""
        counts = np.bincount(self.depth)
        edges = np.concatenate([[0], np.cumsum(counts)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def depth_profile(self) -> np.ndarray:
        return np.bincount(self.depth)


def build_subtree(r: int, n: int) -> TreeSubtree:
    if r < 3:
        raise InvalidParameters(f"need r >= 3, got {r}")
    if n < 1:
        raise InvalidParameters(f"need N >= 1, got {n}")
    k = np.arange(n, dtype=np.int64)
    # root owns children 1..r, vertex i >= 1 owns r + 1 + (i-1)(r-1) .. + r - 2
    parent = np.where(k <= r, 0, 1 + (k - 1 - r) // (r - 1))
    parent[0] = -1
    depth = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        depth[i] = depth[parent[i]] + 1
    return TreeSubtree(r, n, parent, depth)


@dataclass
class FieldSample:
    values: np.ndarray
    field_kind: str  # tree-gff | graph-zero-average-gff | iid
    rng_stream_id: int | None = None


def _tree_correlated(t: TreeSubtree, xi: np.ndarray) -> np.ndarray:
    """Unit-variance field Z with corr(parent, child) = 1/(r-1), built from normals ``xi``.

    ``xi`` has shape (..., N); the recursion runs level by level.
    """
    rho = 1.0 / (t.degree - 1)
    s = math.sqrt(1.0 - rho * rho)
    z = np.empty_like(xi)
    levels = t.level_slices()
    z[..., 0] = xi[..., 0]
    for lv in levels[1:]:
        z[..., lv] = rho * z[..., t.parent[lv]] + s * xi[..., lv]
    return z


def sample_tree_gff(t: TreeSubtree, rng: np.random.Generator, stream_id=None) -> FieldSample:
    """One sample of psi on the subtree; Var psi(x) = (r-1)/(r-2)."""
    xi = rng.standard_normal(t.n_vertices)
    z = _tree_correlated(t, xi)
    return FieldSample(math.sqrt(sigma_r2(t.degree)) * z, "tree-gff", stream_id)


def sample_tree_gff_batch(t: TreeSubtree, seed: int, replica_ids) -> np.ndarray:
    """Stack of tree-GFF samples, row i from stream ``replica_ids[i]`` of ``seed``.

    Row i equals ``sample_tree_gff(t, stream(seed, replica_ids[i])).values``.
    """
    ids = list(replica_ids)
    xi = np.empty((len(ids), t.n_vertices))
    for row, rid in enumerate(ids):
        xi[row] = stream(seed, rid).standard_normal(t.n_vertices)
    return math.sqrt(sigma_r2(t.degree)) * _tree_correlated(t, xi)


@dataclass(frozen=True)
class SamplerFactor:
    basis: np.ndarray
    scales: np.ndarray  # sqrt of eigenvalues, zero mode scale 0

    def matrix(self) -> np.ndarray:
        """B with B B^T = G."""
        return self.basis * self.scales


def factor_green(G: GreenOperator) -> SamplerFactor:
    lam, V = scipy.linalg.eigh(G.matrix)
    if lam[0] < -CLAMP:
        raise DegenerateOperator(f"eigenvalue {lam[0]:.3e} below clamp threshold")
    tol = max(CLAMP, 1e-8 * lam[-1])
    zero = np.abs(lam) <= tol
    if np.count_nonzero(zero) != 1:
        raise DegenerateOperator(f"expected one zero mode, found {np.count_nonzero(zero)}")
    lam = np.where(zero, 0.0, np.clip(lam, 0.0, None))
    return SamplerFactor(V, np.sqrt(lam))


def sample_graph_gff(f: SamplerFactor, rng: np.random.Generator, stream_id=None) -> FieldSample:
    xi = rng.standard_normal(f.scales.size)
    values = f.basis @ (f.scales * xi)
    return FieldSample(values, "graph-zero-average-gff", stream_id)


def sample_graph_gff_batch(f: SamplerFactor, seed: int, replica_ids) -> np.ndarray:
    ids = list(replica_ids)
    xi = np.empty((len(ids), f.scales.size))
    for row, rid in enumerate(ids):
        xi[row] = stream(seed, rid).standard_normal(f.scales.size)
    return (xi * f.scales) @ f.basis.T


def sample_iid_field(n: int, rng: np.random.Generator, stream_id=None) -> FieldSample:
    return FieldSample(rng.standard_normal(n), "iid", stream_id)


def sample_iid_batch(n: int, seed: int, replica_ids) -> np.ndarray:
    ids = list(replica_ids)
    out = np.empty((len(ids), n))
    for row, rid in enumerate(ids):
        out[row] = stream(seed, rid).standard_normal(n)
    return out


def tree_covariance(t: TreeSubtree) -> np.ndarray:
    """Exact covariance g(x, y) on the subtree (small N only)."""
    from .comparison import tree_distance_matrix
    from .green import tree_green

    return tree_green(t.degree, tree_distance_matrix(t))
