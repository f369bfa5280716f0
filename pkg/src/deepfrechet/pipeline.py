"""Deep Fréchet regression: fit and predict, plus the global Fréchet baseline.

Fitting runs three stages:

1. ISOMAP embeds the training responses into ``R^r``.
2. One network per embedding coordinate is trained on ``(X_i, Z_ij)``.
3. Local Fréchet regression is set up on the *fitted* coordinates
   ``Zhat_i = g(X_i)`` (not the raw ISOMAP output), so that training and
   prediction see predictors of the same kind.

A prediction at ``x`` evaluates the networks to get ``zhat`` and returns the
local Fréchet regression estimate at ``zhat``.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from ._accel import backend_name
from .dnn import Mlp, MlpConfig, grid_search, train, with_seed
from .exceptions import DegenerateEmbeddingError, DFRError, InputError, ShapeError
from .lfr import KernelSpec, LfrModel, default_bandwidth
from .manifold import EmbeddingModel, _infer_space, isomap
from .metric_spaces import Space

log = logging.getLogger(__name__)

GFR_RIDGE_COND = 1e12
GFR_RIDGE_REL = 1e-8


@contextlib.contextmanager
def stage(name):
    """Label library errors raised inside the block with a pipeline stage."""
    try:
        yield
    except DFRError as exc:
        if exc.stage == DFRError.stage:
            exc.stage = name
        raise


def derive_seed(seed, *path) -> int:
    """Independent 32-bit seed for a named sub-stream of ``seed``."""
    words = [int(seed)] + [p if isinstance(p, int) else int.from_bytes(str(p).encode()[:8], "little") for p in path]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def _digest(arr) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).hexdigest()


def _resolve(Y, space):
    if space is None:
        if isinstance(Y, np.ndarray):
            raise ShapeError("representation arrays need an explicit space")
        space = _infer_space(Y)
    return space.stack(Y), space


def _check_X(X, n):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ShapeError(f"{X.shape[0]} predictor rows but {n} responses", field="predictors")
    if not np.all(np.isfinite(X)):
        raise InputError("predictors contain non-finite values", field="predictors")
    return X


def _train_job(args):
    X, z, config = args
    return train(X, z, config)


@dataclass
class DfrModel:
    embedding: EmbeddingModel
    nets: List[Mlp]
    lfr: LfrModel
    provenance: dict = field(default_factory=dict)

    @property
    def space(self) -> Space:
        return self.lfr.space

    @property
    def r(self) -> int:
        return len(self.nets)

    def embed(self, X) -> np.ndarray:
        """Network estimates ``zhat`` for a batch of predictors."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.column_stack([net.predict(X) for net in self.nets])

    def predict_array(self, x, bandwidth: Optional[float] = None):
        zhat = self.embed(x)[0]
        try:
            return self.lfr.predict_array(zhat, bandwidth)
        except DFRError as exc:
            exc.args = (f"{exc.args[0]} (zhat={np.round(zhat, 6).tolist()})",)
            raise

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        _dump(d / "embedding.json", self.embedding.to_dict())
        for j, net in enumerate(self.nets, start=1):
            _dump(d / f"net_{j}.json", net.to_dict())
        _dump(d / "lfr.json", self.lfr.to_dict())
        _dump(d / "provenance.json", self.provenance)
        return d

    @classmethod
    def load(cls, directory) -> "DfrModel":
        d = Path(directory)
        missing = [name for name in ("embedding.json", "lfr.json") if not (d / name).exists()]
        if missing:
            raise InputError(f"model bundle {d} lacks {', '.join(missing)}", stage="predict", field="model")
        embedding = EmbeddingModel.from_dict(_load(d / "embedding.json"))
        nets = []
        for j in range(1, embedding.r + 1):
            path = d / f"net_{j}.json"
            if not path.exists():
                raise InputError(f"model bundle {d} lacks {path.name}", stage="predict", field="model")
            nets.append(Mlp.from_dict(_load(path)))
        prov = _load(d / "provenance.json") if (d / "provenance.json").exists() else {}
        return cls(embedding, nets, LfrModel.from_dict(_load(d / "lfr.json")), prov)


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh)


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def fit_dfr(
    X,
    Y,
    space: Optional[Space] = None,
    k: int = 10,
    r: int = 2,
    net_config: MlpConfig = MlpConfig(),
    bandwidth: Optional[float] = None,
    grid: Optional[Sequence[MlpConfig]] = None,
    seed: int = 0,
    jobs: int = 1,
) -> DfrModel:
    """Fit the deep Fréchet regression estimator.

    Parameters
    ----------
    X : (n, p) array
        Euclidean predictors.
    Y : list of metric objects, or (n, dim) representation array
        Responses; arrays require ``space``.
    k, r : int
        ISOMAP neighbour count and embedding dimension.
    net_config : MlpConfig
        Network settings; its seed is replaced by one derived from ``seed``
        for each coordinate.
    bandwidth : float, optional
        Overrides the default rule (10% of the largest range of ``Zhat``).
    grid : sequence of MlpConfig, optional
        If given, one configuration is chosen by validation risk on the
        first coordinate and used for all coordinates.
    jobs : int
        Worker processes for the per-coordinate trainings.
    """
    reps, space = _resolve(Y, space)
    n = reps.shape[0]
    X = _check_X(X, n)
    if n < max(k + 1, r + 1, 10):
        raise InputError(f"need n >= max(k+1, r+1, 10); got n={n}, k={k}, r={r}", stage="isomap", field="k")

    with stage("isomap"):
        emb = isomap(reps, k=k, r=r, space=space)

    with stage("dnn"):
        configs = [with_seed(net_config, derive_seed(seed, "dnn", j)) for j in range(r)]
        if grid:
            chosen = grid_search(X, emb.coordinates[:, 0], [with_seed(c, configs[0].seed) for c in grid])
            configs = [with_seed(chosen, c.seed) for c in configs]
            log.info("grid search selected %s", chosen)
        jobs_args = [(X, emb.coordinates[:, j], configs[j]) for j in range(r)]
        if jobs > 1 and r > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, r)) as pool:
                nets = list(pool.map(_train_job, jobs_args))
        else:
            nets = [_train_job(a) for a in jobs_args]
        Zhat = np.column_stack([net.predict(X) for net in nets])

    with stage("lfr"):
        rule = "override"
        if bandwidth is not None:
            spec = KernelSpec(float(bandwidth))
        else:
            rule = "10% of largest fitted-embedding range"
            try:
                spec = default_bandwidth(Zhat)
            except DegenerateEmbeddingError:
                # all fitted points coincide, so any h reproduces their common average
                rule = "degenerate embedding; unit bandwidth"
                log.warning("fitted embedding is degenerate; using bandwidth 1.0")
                spec = KernelSpec(1.0)
        lfr = LfrModel(Zhat, reps, space, spec)

    provenance = {
        "package_version": __version__,
        "backend": backend_name(),
        "seed": int(seed),
        "k": k,
        "r": r,
        "net_configs": [c.to_dict() for c in configs],
        "bandwidth": spec.bandwidth,
        "bandwidth_rule": rule,
        "space": space.to_sidecar(),
        "n": n,
        "p": X.shape[1],
        "x_sha256": _digest(X),
        "y_sha256": _digest(reps),
    }
    return DfrModel(emb, nets, lfr, provenance)


def predict_dfr(model: DfrModel, x):
    """Prediction at one predictor vector, as a metric object."""
    x = np.asarray(x, dtype=np.float64).ravel()
    p = model.nets[0].input_dim
    if x.size != p:
        raise ShapeError(f"expected {p} predictors, got {x.size}", stage="predict", field="predictors")
    with stage("lfr"):
        vec, _ = model.predict_array(x)
    return model.space.to_object(vec)


# ---------------------------------------------------------------------------
# global Fréchet regression baseline
# ---------------------------------------------------------------------------


@dataclass
class GfrModel:
    x_mean: np.ndarray
    cov_inv: np.ndarray
    X: np.ndarray
    responses: np.ndarray
    space: Space

    def weights(self, x) -> np.ndarray:
        """``s_i(x) = 1 + (X_i - Xbar)' Sigma^-1 (x - Xbar)``."""
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.x_mean.size:
            raise ShapeError(f"expected {self.x_mean.size} predictors, got {x.size}")
        return 1.0 + (self.X - self.x_mean) @ (self.cov_inv @ (x - self.x_mean))

    def predict_array(self, x):
        s = self.weights(x)
        B = (s @ self.responses) / s.size
        return self.space.project(B)


def fit_gfr(X, Y, space: Optional[Space] = None) -> GfrModel:
    reps, space = _resolve(Y, space)
    X = _check_X(X, reps.shape[0])
    xm = X.mean(axis=0)
    C = X - xm
    cov = C.T @ C / X.shape[0]
    p = cov.shape[0]
    if np.linalg.cond(cov) > GFR_RIDGE_COND:
        tr = np.trace(cov)
        if tr <= 0:
            raise InputError("predictor covariance is zero", stage="gfr", field="predictors")
        cov = cov + GFR_RIDGE_REL * tr / p * np.eye(p)
    try:
        cov_inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise InputError("predictor covariance is singular", stage="gfr", field="predictors") from exc
    return GfrModel(xm, cov_inv, X, reps, space)


def predict_gfr(model: GfrModel, x):
    vec, _ = model.predict_array(x)
    return model.space.to_object(vec)
