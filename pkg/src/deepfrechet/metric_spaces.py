"""Metric-space objects, distances and conversion from raw observations.

Three response spaces are supported:

* ``wasserstein``: 1-D distributions stored as quantile functions on a
  midpoint probability grid; the 2-Wasserstein distance is the L2 distance
  between quantile functions.
* ``laplacian``: graph Laplacians of undirected weighted networks with edge
  weights bounded by ``W``; Frobenius distance.
* ``covariance``: covariance matrices with bounded diagonal; Frobenius
  distance.

A fourth, ``euclidean``, holds plain vectors. It is used for checks where
local Fréchet regression must reduce to ordinary local linear regression.

Datasets are handled as stacked *representation* arrays of shape
``(n, dim)`` together with a :class:`Space`; the object classes below wrap a
single representation and enforce its invariants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .exceptions import InputError, ShapeError, ValidationError

SPACES = ("wasserstein", "laplacian", "covariance", "euclidean")

DEFAULT_GRID_SIZE = 101
ROW_SUM_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class ProbGrid:
    """Midpoint probability grid ``p_k = (k - 0.5) / G``, ``k = 1..G``."""

    size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise InputError(f"grid size must be a positive integer, got {self.size!r}")

    @property
    def points(self) -> np.ndarray:
        return (np.arange(1, self.size + 1) - 0.5) / self.size


@dataclass(frozen=True, eq=False)
class QuantileFunction:
    values: np.ndarray
    bounds: Optional[tuple] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ShapeError("quantile values must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)):
            raise ValidationError("quantile values must be finite")
        if np.any(np.diff(v) < 0):
            raise ValidationError("quantile values must be nondecreasing")
        if self.bounds is not None:
            a, b = (float(t) for t in self.bounds)
            if a > b:
                raise ValidationError(f"invalid support bounds [{a}, {b}]")
            if v[0] < a or v[-1] > b:
                raise ValidationError(f"quantile values leave the support [{a}, {b}]")
            object.__setattr__(self, "bounds", (a, b))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> ProbGrid:
        return ProbGrid(self.values.size)


@dataclass(frozen=True, eq=False)
class GraphLaplacian:
    matrix: np.ndarray
    weight_bound: float = 1.0

    def __post_init__(self):
        L = np.array(self.matrix, dtype=np.float64)
        problem = laplacian_violation(L, self.weight_bound)
        if problem:
            raise ValidationError(problem)
        L.setflags(write=False)
        object.__setattr__(self, "matrix", L)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class CovMatrix:
    matrix: np.ndarray
    diag_bound: Optional[float] = None

    def __post_init__(self):
        C = np.array(self.matrix, dtype=np.float64)
        problem = covariance_violation(C, self.diag_bound)
        if problem:
            raise ValidationError(problem)
        C.setflags(write=False)
        object.__setattr__(self, "matrix", C)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


MetricObject = Union[QuantileFunction, GraphLaplacian, CovMatrix]


def laplacian_violation(L, W) -> str:
    """Describe the first broken Laplacian invariant, or return ``""``."""
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        return "graph Laplacian must be a square matrix"
    if not np.all(np.isfinite(L)):
        return "graph Laplacian has non-finite entries"
    if not np.array_equal(L, L.T):
        return "graph Laplacian is not symmetric"
    if np.any(np.abs(L.sum(axis=1)) > ROW_SUM_TOL):
        return "graph Laplacian rows do not sum to zero"
    off = L[~np.eye(L.shape[0], dtype=bool)]
    if np.any(off > 0) or np.any(off < -W):
        return f"graph Laplacian off-diagonal entries leave [-{W}, 0]"
    return ""


def covariance_violation(C, diag_bound=None) -> str:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        return "covariance must be a square matrix"
    if not np.all(np.isfinite(C)):
        return "covariance has non-finite entries"
    if not np.array_equal(C, C.T):
        return "covariance is not symmetric"
    if C.size and np.linalg.eigvalsh(C)[0] < -PSD_TOL:
        return "covariance is not positive semidefinite"
    if diag_bound is not None and np.any(np.diag(C) > diag_bound):
        return f"covariance diagonal exceeds the bound {diag_bound}"
    return ""


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def wasserstein_distance(q1: QuantileFunction, q2: QuantileFunction) -> float:
    """2-Wasserstein distance by the midpoint rule on the shared grid."""
    a, b = _values(q1), _values(q2)
    if a.shape != b.shape:
        raise ShapeError(f"grid mismatch: {a.size} vs {b.size} points")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def frobenius_distance(A, B) -> float:
    A = np.asarray(getattr(A, "matrix", A), dtype=np.float64)
    B = np.asarray(getattr(B, "matrix", B), dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return float(np.sqrt(np.sum((A - B) ** 2)))


def _values(q):
    return np.asarray(getattr(q, "values", q), dtype=np.float64)


# ---------------------------------------------------------------------------
# construction from raw data
# ---------------------------------------------------------------------------


def quantile_from_samples(samples, grid: ProbGrid = ProbGrid(), bounds=None) -> QuantileFunction:
    """Empirical quantile function of a sample.

    Uses inverse-ECDF interpolation between order statistics (the ``linear``
    method of :func:`numpy.quantile`).
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise InputError("cannot build a quantile function from an empty sample")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    q = np.quantile(x, grid.points, method="linear")
    # lerp rounding can break monotonicity by one ulp
    q = np.maximum.accumulate(q)
    return QuantileFunction(q, bounds)


def laplacian_from_edges(edges, m: int, W: Optional[float] = None) -> GraphLaplacian:
    """Graph Laplacian from an edge list of ``(i, j, weight)`` with 1-based nodes.

    ``W`` defaults to the largest observed weight (1 for an empty list).
    """
    edges = [tuple(e) for e in edges]
    weights = [float(e[2]) for e in edges]
    if W is None:
        W = max(weights) if weights and max(weights) > 0 else 1.0
    L = np.zeros((m, m))
    seen = set()
    for (i, j, w) in edges:
        i, j, w = int(i), int(j), float(w)
        if not (1 <= i <= m and 1 <= j <= m):
            raise ValidationError(f"edge ({i}, {j}) references a node outside 1..{m}")
        if i == j:
            raise ValidationError(f"self-loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValidationError(f"duplicate edge {key}")
        seen.add(key)
        if not (0.0 <= w <= W):
            raise ValidationError(f"edge weight {w} outside [0, {W}]")
        L[i - 1, j - 1] = L[j - 1, i - 1] = -w
    np.fill_diagonal(L, -L.sum(axis=1))
    return GraphLaplacian(L, W)


# ---------------------------------------------------------------------------
# space descriptor: representation arrays, distances, projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Space:
    """Shape parameters shared by every object of a dataset.

    Mirrors the JSON sidecar ``{"space", "grid_size", "nodes",
    "weight_bound", ...}``.
    """

    kind: str
    grid_size: int = DEFAULT_GRID_SIZE
    nodes: Optional[int] = None
    weight_bound: float = 1.0
    diag_bound: Optional[float] = None
    bounds: Optional[tuple] = None
    dim: Optional[int] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in SPACES:
            raise InputError(f"unknown space {self.kind!r}; expected one of {SPACES}", field="space")
        if self.kind in ("laplacian", "covariance") and not self.nodes:
            raise InputError(f"space {self.kind!r} needs a node count", field="nodes")
        if self.kind == "laplacian" and not self.weight_bound > 0:
            raise InputError("weight bound must be positive", field="weight_bound")
        if self.kind == "euclidean" and not self.dim:
            object.__setattr__(self, "dim", 1)
        if self.bounds is not None:
            object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))

    # -- shape -------------------------------------------------------------
    @property
    def rep_size(self) -> int:
        if self.kind == "wasserstein":
            return self.grid_size
        if self.kind == "euclidean":
            return self.dim
        return self.nodes * self.nodes

    @property
    def grid(self) -> ProbGrid:
        return ProbGrid(self.grid_size)

    # -- conversion --------------------------------------------------------
    def to_array(self, obj) -> np.ndarray:
        if self.kind == "wasserstein":
            v = _values(obj)
        elif self.kind == "euclidean":
            v = np.atleast_1d(np.asarray(obj, dtype=np.float64))
        else:
            v = np.asarray(getattr(obj, "matrix", obj), dtype=np.float64).ravel()
        if v.size != self.rep_size:
            raise ShapeError(f"{self.kind} object has {v.size} entries, expected {self.rep_size}")
        return v

    def stack(self, objects: Sequence) -> np.ndarray:
        if isinstance(objects, np.ndarray) and objects.ndim == 2:
            if objects.shape[1] != self.rep_size:
                raise ShapeError(f"expected {self.rep_size} columns, got {objects.shape[1]}")
            return np.asarray(objects, dtype=np.float64)
        for obj in objects:
            self._check_variant(obj)
        return np.stack([self.to_array(o) for o in objects]) if len(objects) else np.empty((0, self.rep_size))

    def to_object(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if self.kind == "wasserstein":
            return QuantileFunction(vec, self.bounds)
        if self.kind == "laplacian":
            return GraphLaplacian(vec.reshape(self.nodes, self.nodes), self.weight_bound)
        if self.kind == "covariance":
            return CovMatrix(vec.reshape(self.nodes, self.nodes), self.diag_bound)
        return vec.copy()

    def _check_variant(self, obj):
        expected = {
            "wasserstein": QuantileFunction,
            "laplacian": GraphLaplacian,
            "covariance": CovMatrix,
        }.get(self.kind)
        if expected is not None and isinstance(obj, (QuantileFunction, GraphLaplacian, CovMatrix)):
            if not isinstance(obj, expected):
                raise ShapeError(f"{type(obj).__name__} in a {self.kind} dataset")

    # -- geometry ----------------------------------------------------------
    def distance(self, a, b) -> float:
        a, b = self.to_array(a), self.to_array(b)
        d2 = float(np.sum((a - b) ** 2))
        if self.kind == "wasserstein":
            d2 /= self.grid_size
        return float(np.sqrt(d2))

    def sq_distances(self, A, B) -> np.ndarray:
        """Row-wise squared distances between two aligned stacks."""
        A, B = np.atleast_2d(A), np.atleast_2d(B)
        if A.shape != B.shape:
            raise ShapeError(f"stack mismatch: {A.shape} vs {B.shape}")
        d2 = np.sum((A - B) ** 2, axis=1)
        return d2 / self.grid_size if self.kind == "wasserstein" else d2

    def pairwise(self, reps) -> np.ndarray:
        reps = self.stack(reps)
        d2 = kernels.pairwise_sqdist(reps)
        if self.kind == "wasserstein":
            d2 = d2 / self.grid_size
        return np.sqrt(d2)

    def project(self, vec):
        """Nearest valid representation; returns ``(vec, SolverReport | None)``."""
        from . import projections

        vec = np.asarray(vec, dtype=np.float64)
        if self.kind == "wasserstein":
            return projections.monotone_array(vec, self.bounds), None
        if self.kind == "laplacian":
            L, report = projections.laplacian_array(vec.reshape(self.nodes, self.nodes), self.weight_bound)
            return L.ravel(), report
        if self.kind == "covariance":
            C, report = projections.psd_array(vec.reshape(self.nodes, self.nodes), self.diag_bound)
            return C.ravel(), report
        return vec.copy(), None

    def violation(self, vec) -> str:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.rep_size:
            return f"expected {self.rep_size} entries, got {vec.size}"
        if self.kind == "wasserstein":
            if not np.all(np.isfinite(vec)):
                return "non-finite quantile values"
            if np.any(np.diff(vec) < 0):
                return "quantile values decrease"
            if self.bounds is not None and (vec[0] < self.bounds[0] or vec[-1] > self.bounds[1]):
                return "quantile values leave the support"
            return ""
        if self.kind == "laplacian":
            return laplacian_violation(vec.reshape(self.nodes, self.nodes), self.weight_bound)
        if self.kind == "covariance":
            return covariance_violation(vec.reshape(self.nodes, self.nodes), self.diag_bound)
        return "" if np.all(np.isfinite(vec)) else "non-finite entries"

    def is_valid(self, vec) -> bool:
        return not self.violation(vec)

    # -- sidecar -----------------------------------------------------------
    def to_sidecar(self) -> dict:
        out = {"space": self.kind}
        if self.kind == "wasserstein":
            out["grid_size"] = self.grid_size
            if self.bounds is not None:
                out["bounds"] = list(self.bounds)
        elif self.kind == "laplacian":
            out["nodes"] = self.nodes
            out["weight_bound"] = self.weight_bound
        elif self.kind == "covariance":
            out["nodes"] = self.nodes
            if self.diag_bound is not None:
                out["diag_bound"] = self.diag_bound
        else:
            out["dim"] = self.dim
        out.update(self.extra)
        return out

    @classmethod
    def from_sidecar(cls, data) -> "Space":
        if isinstance(data, (str, bytes)):
            data = json.loads(data)
        data = dict(data)
        if "space" not in data:
            raise InputError("sidecar lacks the 'space' field", field="space")
        known = {"space", "grid_size", "nodes", "weight_bound", "diag_bound", "bounds", "dim"}
        kwargs = dict(kind=data["space"])
        for key in ("grid_size", "nodes", "dim"):
            if data.get(key) is not None:
                kwargs[key] = int(data[key])
        for key in ("weight_bound", "diag_bound"):
            if data.get(key) is not None:
                kwargs[key] = float(data[key])
        if data.get("bounds") is not None:
            kwargs["bounds"] = tuple(data["bounds"])
        kwargs["extra"] = {k: v for k, v in data.items() if k not in known}
        return cls(**kwargs)
