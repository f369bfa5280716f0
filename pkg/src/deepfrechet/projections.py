"""Euclidean projections onto the response spaces.

Local Fréchet regression in these spaces reduces to a weighted linear
average of the responses followed by the nearest-point projection of that
average back onto the (convex) space. The projections here are:

* nondecreasing vectors, optionally within ``[a, b]``: exact, via PAVA and a
  final clip;
* graph Laplacians with off-diagonals in ``[-W, 0]``: Dykstra's algorithm;
* PSD matrices, optionally with bounded diagonal: eigenvalue clipping, plus
  Dykstra against the diagonal constraint when a bound is given.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import kernels
from .exceptions import NumericError, ShapeError, ValidationError
from .metric_spaces import CovMatrix, GraphLaplacian, ProbGrid, QuantileFunction

log = logging.getLogger(__name__)

DYKSTRA_TOL = 1e-8
DYKSTRA_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    residual: float
    converged: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class RawGridFunction:
    """Unconstrained values on a probability grid, e.g. a weighted average of
    quantile functions with some negative weights."""

    values: np.ndarray
    bounds: Optional[tuple] = None

    @property
    def grid(self) -> ProbGrid:
        return ProbGrid(len(self.values))


def monotone_array(values, bounds=None) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError("expected a 1-D array of grid values")
    if not np.all(np.isfinite(v)):
        raise ValidationError("grid values must be finite")
    out = kernels.pava(v)
    if bounds is not None:
        # clipping a nondecreasing vector keeps it nondecreasing
        out = np.clip(out, bounds[0], bounds[1])
    return out


def project_monotone(raw, bounds=None) -> QuantileFunction:
    """Nearest quantile function (in L2 on the grid) to ``raw``."""
    if isinstance(raw, RawGridFunction):
        bounds = raw.bounds if bounds is None else bounds
        raw = raw.values
    return QuantileFunction(monotone_array(raw, bounds), bounds)


def _square(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix has non-finite entries")
    return M


def laplacian_array(M, W, tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
    M = _square(M)
    L, sweeps, resid = kernels.dykstra_laplacian(M, W, tol, max_sweeps)
    converged = bool(resid <= tol)
    if not converged:
        log.warning("Laplacian projection stopped after %d sweeps (residual %.3g)", sweeps, resid)
    return L, SolverReport(sweeps, resid, converged)


def project_laplacian(M, W=1.0, tol=DYKSTRA_TOL, max_sweeps=DYKSTRA_MAX_SWEEPS):
    """Frobenius-nearest graph Laplacian with off-diagonals in ``[-W, 0]``.

    Returns
    -------
    (GraphLaplacian, SolverReport)
        On non-convergence the last (still feasible) iterate is returned and
        the report is flagged.
    """
    L, report = laplacian_array(M, W, tol, max_sweeps)
    return GraphLaplacian(L, W), report


def _clip_eigen(S):
    try:
        lam, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh rarely fails on finite input
        raise NumericError(f"eigendecomposition failed: {exc}", stage="projection") from exc
    P = (V * np.maximum(lam, 0.0)) @ V.T
    return 0.5 * (P + P.T)


def psd_array(M, diag_bound=None, tol=DYKSTRA_TOL, max_iter=DYKSTRA_MAX_SWEEPS):
    S = _square(M)
    S = 0.5 * (S + S.T)
    if diag_bound is None:
        return _clip_eigen(S), SolverReport(1, 0.0, True)

    x = S
    p = np.zeros_like(S)
    q = np.zeros_like(S)
    y = x
    resid = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        y = _clip_eigen(x + p)
        p = x + p - y
        z = y + q
        x_new = z.copy()
        np.fill_diagonal(x_new, np.minimum(np.diag(z), diag_bound))
        q = z - x_new
        resid = float(np.linalg.norm(x_new - x))
        x = x_new
        if resid <= tol:
            break
    converged = resid <= tol
    if not converged:
        log.warning("PSD projection stopped after %d iterations (residual %.3g)", it, resid)
    # rescale so the diagonal bound holds exactly without leaving the cone
    d = np.diag(y)
    scale = np.ones_like(d)
    over = d > diag_bound
    scale[over] = np.sqrt(diag_bound / d[over])
    C = y * scale[:, None] * scale[None, :]
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, np.minimum(np.diag(C), diag_bound))
    return C, SolverReport(it, resid, bool(converged))


def project_psd(M, diag_bound=None, tol=DYKSTRA_TOL, max_iter=DYKSTRA_MAX_SWEEPS):
    """Nearest symmetric PSD matrix (Frobenius), optionally with ``diag <= bound``.

    Returns ``(CovMatrix, SolverReport)``.
    """
    C, report = psd_array(M, diag_bound, tol, max_iter)
    return CovMatrix(C, diag_bound), report
