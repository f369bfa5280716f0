"""ISOMAP embedding of metric-space responses.

Pipeline: pairwise ambient distances -> symmetrized kNN graph -> all-pairs
shortest paths (Dijkstra) -> classical MDS of the geodesic distances.
Only the training responses are embedded; there is no out-of-sample map.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .exceptions import InputError, ShapeError
from .metric_spaces import CovMatrix, GraphLaplacian, QuantileFunction, Space

log = logging.getLogger(__name__)

NEIGHBOR_GRID = (10, 20, 30, 50)


class MDSWarning(UserWarning):
    """Requested MDS dimensions with negative eigenvalues were zero-filled."""


def _infer_space(objects) -> Space:
    first = objects[0]
    if isinstance(first, QuantileFunction):
        return Space("wasserstein", grid_size=first.values.size, bounds=first.bounds)
    if isinstance(first, GraphLaplacian):
        return Space("laplacian", nodes=first.dim, weight_bound=first.weight_bound)
    if isinstance(first, CovMatrix):
        return Space("covariance", nodes=first.dim, diag_bound=first.diag_bound)
    raise ShapeError("cannot infer the space of raw arrays; pass `space`")


def pairwise_distances(objects, space: Optional[Space] = None) -> np.ndarray:
    """Ambient distance matrix ``D[i, j] = d(Y_i, Y_j)``.

    ``objects`` is a list of metric objects or, with ``space`` given, a
    ``(n, dim)`` representation array.
    """
    if len(objects) < 2:
        raise InputError("need at least two objects")
    if space is None:
        space = _infer_space(objects)
        kinds = {type(o) for o in objects}
        if len(kinds) != 1:
            raise ShapeError("objects of mixed variants")
    reps = space.stack(objects)
    D = space.pairwise(reps)
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class NeighborGraph:
    n: int
    k: int
    edges: np.ndarray  # (E, 2) int, i < j
    weights: np.ndarray  # (E,)
    bridges: List[Tuple[int, int, float]] = field(default_factory=list)

    def edge_set(self):
        return {(int(i), int(j)) for i, j in self.edges}

    def csr(self):
        """Symmetric CSR arrays ``(indptr, indices, weights)``."""
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        w = np.concatenate([self.weights, self.weights])
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return np.cumsum(indptr), dst.astype(np.int64), w.astype(np.float64)


def _components(n, edges):
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(a) for a in range(n)])


def knn_graph(D, k: int) -> NeighborGraph:
    """Union-symmetrized k-nearest-neighbour graph, bridged until connected.

    Ties in distance go to the lower index. If the graph is disconnected the
    globally shortest edge between two different components is added, one
    at a time, and each addition is logged and recorded in ``bridges``.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if not (1 <= k < n):
        raise InputError(f"k must satisfy 1 <= k < n (k={k}, n={n})", stage="isomap", field="k")
    pairs = set()
    for i in range(n):
        order = np.argsort(D[i], kind="stable")
        order = order[order != i][:k]
        for j in order:
            pairs.add((min(i, int(j)), max(i, int(j))))
    edges = sorted(pairs)
    bridges = []
    labels = _components(n, edges)
    while len(np.unique(labels)) > 1:
        masked = np.where(labels[:, None] != labels[None, :], D, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        i, j = min(i, j), max(i, j)
        log.info("kNN graph disconnected; bridging %d-%d (distance %.6g)", i, j, D[i, j])
        bridges.append((i, j, float(D[i, j])))
        edges.append((i, j))
        lo, hi = sorted((labels[i], labels[j]))
        labels[labels == hi] = lo
    edges = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    weights = D[edges[:, 0], edges[:, 1]] if len(edges) else np.empty(0)
    return NeighborGraph(n, k, edges, weights, bridges)


def geodesic_distances(graph: NeighborGraph) -> np.ndarray:
    """All-pairs shortest-path lengths of a connected neighbour graph."""
    indptr, indices, weights = graph.csr()
    G = kernels.dijkstra_all_pairs(indptr, indices, weights, graph.n)
    if not np.all(np.isfinite(G)):
        raise InputError("neighbour graph is disconnected", stage="isomap")
    return np.minimum(G, G.T)


def classical_mds(D, r: int):
    """Classical (Torgerson) MDS.

    Parameters
    ----------
    D : (n, n) array
        Symmetric distance matrix.
    r : int
        Target dimension, ``r < n``.

    Returns
    -------
    coords : (n, r) array
        Top-``r`` eigenvectors of ``-1/2 J D^2 J`` scaled by the square root
        of their eigenvalues. Each eigenvector is signed so that its
        largest-magnitude entry is positive. Columns whose eigenvalue is
        negative are zero-filled (with an :class:`MDSWarning`).
    spectrum : (n,) array
        All eigenvalues, nonincreasing.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if not (1 <= r < n):
        raise InputError(f"MDS dimension must satisfy 1 <= r < n (r={r}, n={n})", field="r")
    D2 = D**2
    row = D2.mean(axis=1)
    B = -0.5 * (D2 - row[:, None] - row[None, :] + row.mean())
    B = 0.5 * (B + B.T)
    lam, V = np.linalg.eigh(B)
    lam, V = lam[::-1], V[:, ::-1]
    coords = np.zeros((n, r))
    negative = False
    for c in range(r):
        v = V[:, c]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        if lam[c] < 0:
            # round-off negatives on flat spectra are zero-filled silently
            negative |= lam[c] < -1e-10 * max(1.0, abs(lam[0]))
            continue
        coords[:, c] = v * np.sqrt(lam[c])
    if negative:
        warnings.warn("negative MDS eigenvalues among the requested dimensions; zero-filled", MDSWarning)
    coords -= coords.mean(axis=0)
    return coords, lam


@dataclass
class EmbeddingModel:
    coordinates: np.ndarray
    spectrum: np.ndarray
    k: int
    r: int
    geodesics: Optional[np.ndarray] = None
    bridges: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.coordinates.shape[0]

    @property
    def negative_eigenvalues(self) -> bool:
        return bool(np.any(self.spectrum[: self.r] < 0))

    def scree(self, top: int = 10) -> np.ndarray:
        """Share of each leading eigenvalue in the positive spectrum."""
        pos = np.clip(self.spectrum, 0.0, None)
        total = pos.sum()
        return pos[:top] / total if total > 0 else np.zeros(min(top, pos.size))

    def to_dict(self, include_geodesics=False) -> dict:
        out = {
            "k": self.k,
            "r": self.r,
            "coordinates": self.coordinates.tolist(),
            "spectrum": self.spectrum.tolist(),
            "bridges": [list(b) for b in self.bridges],
        }
        if include_geodesics and self.geodesics is not None:
            out["geodesics"] = self.geodesics.tolist()
        return out

    @classmethod
    def from_dict(cls, data) -> "EmbeddingModel":
        geo = data.get("geodesics")
        return cls(
            coordinates=np.asarray(data["coordinates"], dtype=np.float64).reshape(-1, int(data["r"])),
            spectrum=np.asarray(data["spectrum"], dtype=np.float64),
            k=int(data["k"]),
            r=int(data["r"]),
            geodesics=None if geo is None else np.asarray(geo, dtype=np.float64),
            bridges=[tuple(b) for b in data.get("bridges", [])],
        )


def isomap(objects, k: int = 10, r: int = 2, space: Optional[Space] = None) -> EmbeddingModel:
    n = len(objects)
    if n < max(k + 1, r + 1):
        raise InputError(f"isomap needs n >= max(k+1, r+1); got n={n}, k={k}, r={r}", stage="isomap", field="k")
    D = pairwise_distances(objects, space)
    graph = knn_graph(D, k)
    G = geodesic_distances(graph)
    coords, spectrum = classical_mds(G, r)
    model = EmbeddingModel(coords, spectrum, k, r, G, graph.bridges)
    log.info("isomap scree (leading eigenvalue shares): %s", np.round(model.scree(5), 4).tolist())
    return model
