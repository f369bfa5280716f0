"""Multivariate local Fréchet regression with estimated predictors.

For the supported spaces the weighted Fréchet objective

    Q(y, z) = (1/n) sum_i w_i(z) d^2(Y_i, y)

is minimized by projecting the weighted linear average
``B(z) = (1/n) sum_i w_i(z) rep(Y_i)`` onto the space, because the local
linear weights average to one. So prediction is: weights, average, project.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import BandwidthError, DegenerateEmbeddingError, InputError, ShapeError
from .metric_spaces import Space

BANDWIDTH_FRACTION = 0.10
# μ̂_2 is ridged only when it is numerically singular
RIDGE_COND = 1e12
RIDGE_REL = 1e-10
SIGMA_FLOOR = 1e-5
# a window whose weighted mean is noisier than one raw response, sum((w_i/n)^2) > 1,
# is too sparse for a local linear fit
VARIANCE_INFLATION_MAX = 1.0 + 1e-9


@dataclass(frozen=True)
class KernelSpec:
    bandwidth: float
    family: str = "epanechnikov"

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InputError(f"bandwidth must be positive, got {self.bandwidth}", field="bandwidth")
        if self.family != "epanechnikov":
            raise InputError(f"unsupported kernel {self.family!r}")


def kernel_value(u) -> float:
    """Product Epanechnikov kernel on ``[-1, 1]^r``."""
    return float(_kernel_rows(np.atleast_2d(np.asarray(u, dtype=np.float64)))[0])


def _kernel_rows(U):
    inside = np.all(np.abs(U) <= 1.0, axis=1)
    vals = np.prod(0.75 * (1.0 - U**2), axis=1)
    return np.where(inside, vals, 0.0)


def scaled_kernel(D, h):
    """``K_h(d) = h^-r K(d / h)`` for the rows of ``D``."""
    D = np.atleast_2d(D)
    return _kernel_rows(D / h) / h ** D.shape[1]


@dataclass(frozen=True)
class LocalMoments:
    mu0: float
    mu1: np.ndarray
    mu2: np.ndarray
    sigma0_sq: float
    ridge: float
    direction: np.ndarray  # μ̂_2^{-1} μ̂_1 (ridged if needed)


def _prep(Z, z):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if z.size != Z.shape[1]:
        raise ShapeError(f"query has {z.size} coordinates, embedding has {Z.shape[1]}")
    return Z, z


def local_moments(Z, z, spec: KernelSpec) -> LocalMoments:
    Z, z = _prep(Z, z)
    n, r = Z.shape
    D = Z - z
    k = scaled_kernel(D, spec.bandwidth)
    mu0 = float(k.sum() / n)
    if mu0 <= 0.0:
        raise BandwidthError(
            f"no training point within bandwidth {spec.bandwidth:.4g} of z={np.round(z, 4).tolist()}; "
            "increase the bandwidth"
        )
    mu1 = (k @ D) / n
    mu2 = (D.T * k) @ D / n
    trace = float(np.trace(mu2))
    ridge = 0.0
    if trace == 0.0:
        direction = np.zeros(r)
    else:
        A = mu2
        if np.linalg.cond(mu2) > RIDGE_COND:
            ridge = RIDGE_REL * trace / r
            A = mu2 + ridge * np.eye(r)
        direction = np.linalg.solve(A, mu1)
    sigma0_sq = float(mu0 - mu1 @ direction)
    if sigma0_sq <= SIGMA_FLOOR * mu0:
        raise BandwidthError(
            f"local design around z={np.round(z, 4).tolist()} is degenerate at bandwidth "
            f"{spec.bandwidth:.4g}; increase the bandwidth"
        )
    return LocalMoments(mu0, mu1, mu2, sigma0_sq, ridge, direction)


def lfr_weights(Z, z, spec: KernelSpec) -> np.ndarray:
    """Local linear weights; they average to one and have zero first moment.

    Raises
    ------
    BandwidthError
        If no training point is in reach, the local design is singular, or
        the weights inflate the variance beyond that of a single response.
    """
    Z, z = _prep(Z, z)
    mom = local_moments(Z, z, spec)
    D = Z - z
    k = scaled_kernel(D, spec.bandwidth)
    w = k * (1.0 - D @ mom.direction) / mom.sigma0_sq
    inflation = float(np.sum((w / Z.shape[0]) ** 2))
    if inflation > VARIANCE_INFLATION_MAX:
        raise BandwidthError(
            f"kernel window around z={np.round(z, 4).tolist()} is too sparse at bandwidth "
            f"{spec.bandwidth:.4g} (variance inflation {inflation:.3g} > 1); increase the bandwidth"
        )
    return w


def default_bandwidth(Z) -> KernelSpec:
    """Ten percent of the largest per-coordinate range, shared by all coordinates."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] < 2:
        raise InputError("need at least two points to size a bandwidth")
    spread = float(np.max(Z.max(axis=0) - Z.min(axis=0)))
    if not spread > 0:
        raise DegenerateEmbeddingError("all embedded points coincide; no bandwidth can be derived")
    return KernelSpec(BANDWIDTH_FRACTION * spread)


@dataclass
class LfrModel:
    Z: np.ndarray
    responses: np.ndarray  # (n, rep_size)
    space: Space
    kernel: KernelSpec

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.float64)
        if self.Z.ndim == 1:
            self.Z = self.Z[:, None]
        self.responses = self.space.stack(self.responses)
        if self.Z.shape[0] != self.responses.shape[0]:
            raise ShapeError(f"{self.Z.shape[0]} embedded points but {self.responses.shape[0]} responses")

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def predict_array(self, z, bandwidth: Optional[float] = None):
        """Representation of the prediction at ``z`` and the projection report.

        ``bandwidth`` overrides the stored one for this call only.
        """
        spec = self.kernel if bandwidth is None else KernelSpec(float(bandwidth), self.kernel.family)
        w = lfr_weights(self.Z, z, spec)
        B = (w @ self.responses) / self.n
        return self.space.project(B)

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_sidecar(),
            "bandwidth": self.kernel.bandwidth,
            "kernel": self.kernel.family,
            "Z": self.Z.tolist(),
            "responses": self.responses.tolist(),
        }

    @classmethod
    def from_dict(cls, data) -> "LfrModel":
        return cls(
            Z=np.asarray(data["Z"], dtype=np.float64),
            responses=np.asarray(data["responses"], dtype=np.float64),
            space=Space.from_sidecar(data["space"]),
            kernel=KernelSpec(float(data["bandwidth"]), data.get("kernel", "epanechnikov")),
        )


def lfr_predict(model: LfrModel, z, return_report: bool = False):
    """Local Fréchet regression prediction at ``z``.

    Returns the metric object (a plain vector in the euclidean space), and
    the projection :class:`SolverReport` as well if ``return_report``.
    """
    vec, report = model.predict_array(z)
    obj = model.space.to_object(vec)
    return (obj, report) if return_report else obj
