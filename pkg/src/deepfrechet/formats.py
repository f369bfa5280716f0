"""File formats for predictors, responses, sidecars and predictions.

Predictors
    Numeric CSV, one row per observation; an optional header row is skipped.
Wasserstein responses
    CSV rows of ``G`` quantile values, or (sidecar ``"format": "samples"``)
    rows of raw draws of arbitrary length.
Laplacian / covariance responses
    A directory of 3-column edge lists ``i, j, weight`` (1-based, one file per
    response, read in name order), or one CSV holding either ``m`` rows of
    ``m`` values per response (``"dense"``) or one row of ``m*m`` values per
    response (``"flat"``).
Sidecar
    JSON ``{"space": ..., "grid_size": G, "nodes": m, "weight_bound": W}``.
Predictions
    One CSV row per query in the response row format; a failed query is
    written as ``FAILED,<reason>``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import InputError, ValidationError
from .metric_spaces import ProbGrid, Space, laplacian_from_edges, quantile_from_samples

FAILED = "FAILED"
INGEST = "ingest"


def _rows(path) -> List[List[str]]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}", stage=INGEST, field=str(path))
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]


def _is_numeric(row) -> bool:
    try:
        [float(c) for c in row]
    except ValueError:
        return False
    return True


def _numeric_rows(path, field: str, allow_header: bool = True) -> List[np.ndarray]:
    rows = _rows(path)
    if rows and allow_header and not _is_numeric(rows[0]):
        rows = rows[1:]
    out = []
    for lineno, row in enumerate(rows, start=1):
        try:
            vals = np.array([float(c) for c in row], dtype=np.float64)
        except ValueError:
            raise InputError(f"{path}: row {lineno} is not numeric", stage=INGEST, field=field) from None
        if not np.all(np.isfinite(vals)):
            raise InputError(f"{path}: row {lineno} has non-finite values", stage=INGEST, field=field)
        out.append(vals)
    return out


def read_predictors(path) -> np.ndarray:
    """Predictor matrix ``(n, p)``."""
    rows = _numeric_rows(path, "predictors")
    if not rows:
        raise InputError(f"{path}: no predictor rows", stage=INGEST, field="predictors")
    widths = {r.size for r in rows}
    if len(widths) != 1:
        raise InputError(f"{path}: rows have differing lengths {sorted(widths)}", stage=INGEST, field="predictors")
    return np.vstack(rows)


def read_predictor_rows(path) -> List[Tuple[Optional[np.ndarray], str]]:
    """Per-row parse for prediction: ``(vector, "")`` or ``(None, reason)``."""
    rows = _rows(path)
    if rows and not _is_numeric(rows[0]):
        rows = rows[1:]
    out = []
    for lineno, row in enumerate(rows, start=1):
        try:
            vals = np.array([float(c) for c in row], dtype=np.float64)
        except ValueError:
            out.append((None, f"row {lineno} is not numeric"))
            continue
        if not np.all(np.isfinite(vals)):
            out.append((None, f"row {lineno} has non-finite values"))
            continue
        out.append((vals, ""))
    return out


def read_sidecar(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"sidecar not found: {path}", stage=INGEST, field="sidecar")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"sidecar {path} is not valid JSON: {exc}", stage=INGEST, field="sidecar") from None
    if not isinstance(data, dict):
        raise InputError(f"sidecar {path} must hold a JSON object", stage=INGEST, field="sidecar")
    return data


def write_sidecar(path, space: Space) -> Path:
    path = Path(path)
    path.write_text(json.dumps(space.to_sidecar(), indent=2))
    return path


def _fail(msg, field="responses"):
    return ValidationError(msg, stage=INGEST, field=field)


def _read_wasserstein(path, sidecar) -> Tuple[np.ndarray, Space]:
    fmt = sidecar.get("format", "quantiles")
    rows = _numeric_rows(path, "responses")
    if not rows:
        raise _fail(f"{path}: no response rows")
    if fmt == "samples":
        grid = ProbGrid(int(sidecar.get("grid_size", ProbGrid().size)))
        space = Space.from_sidecar({**sidecar, "grid_size": grid.size})
        reps = np.stack([quantile_from_samples(r, grid, space.bounds).values for r in rows])
        return reps, space
    if fmt != "quantiles":
        raise _fail(f"unknown wasserstein format {fmt!r}; expected 'quantiles' or 'samples'", "format")
    G = int(sidecar.get("grid_size", rows[0].size))
    space = Space.from_sidecar({**sidecar, "grid_size": G})
    for lineno, r in enumerate(rows, start=1):
        if r.size != G:
            raise _fail(f"{path}: row {lineno} has {r.size} values, expected grid size {G}")
        problem = space.violation(r)
        if problem:
            raise _fail(f"{path}: row {lineno} is not a quantile function ({problem})")
    return np.vstack(rows), space


def _matrix_rows(path, m, fmt) -> List[np.ndarray]:
    rows = _numeric_rows(path, "responses")
    if not rows:
        raise _fail(f"{path}: no response rows")
    widths = {r.size for r in rows}
    if len(widths) != 1:
        raise _fail(f"{path}: rows have differing lengths {sorted(widths)}")
    width = widths.pop()
    if fmt is None:
        fmt = "flat" if width == m * m and m > 1 else "dense"
    if fmt == "flat":
        if width != m * m:
            raise _fail(f"{path}: flat rows need {m * m} values, got {width}")
        return [r.reshape(m, m) for r in rows]
    if fmt == "dense":
        if width != m or len(rows) % m:
            raise _fail(f"{path}: dense format needs blocks of {m} rows of {m} values")
        A = np.vstack(rows)
        return [A[i : i + m] for i in range(0, A.shape[0], m)]
    raise _fail(f"unknown matrix format {fmt!r}; expected 'edges', 'dense' or 'flat'", "format")


def _edge_lists(directory, m) -> List[list]:
    files = sorted(p for p in Path(directory).iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise _fail(f"{directory}: no edge-list files")
    out = []
    for f in files:
        edges = []
        for lineno, r in enumerate(_numeric_rows(f, "responses"), start=1):
            if r.size != 3:
                raise _fail(f"{f}: row {lineno} needs 3 columns (i, j, weight)")
            if r[0] != int(r[0]) or r[1] != int(r[1]):
                raise _fail(f"{f}: row {lineno} has non-integer node indices")
            edges.append((int(r[0]), int(r[1]), float(r[2])))
        out.append((f, edges))
    return out


def _read_laplacian(path, sidecar) -> Tuple[np.ndarray, Space]:
    if "nodes" not in sidecar:
        raise _fail("laplacian responses need 'nodes' in the sidecar", "nodes")
    m = int(sidecar["nodes"])
    W = sidecar.get("weight_bound")
    fmt = sidecar.get("format")
    path = Path(path)
    if path.is_dir() or fmt == "edges":
        if not path.is_dir():
            raise InputError(f"edge-list responses must be a directory: {path}", stage=INGEST, field="responses")
        lists = _edge_lists(path, m)
        if W is None:
            ws = [w for _, edges in lists for (_, _, w) in edges]
            W = max(ws) if ws and max(ws) > 0 else 1.0
        mats = []
        for f, edges in lists:
            try:
                mats.append(laplacian_from_edges(edges, m, float(W)).matrix)
            except ValidationError as exc:
                raise _fail(f"{f}: {exc}") from None
    else:
        mats = _matrix_rows(path, m, fmt)
        if W is None:
            off = [-(M - np.diag(np.diag(M))).min() for M in mats]
            W = max(off) if off and max(off) > 0 else 1.0
    space = Space.from_sidecar({**sidecar, "weight_bound": float(W)})
    reps = np.stack([M.ravel() for M in mats])
    for idx, r in enumerate(reps, start=1):
        problem = space.violation(r)
        if problem:
            raise _fail(f"{path}: response {idx} is not a graph Laplacian ({problem})")
    return reps, space


def _read_covariance(path, sidecar) -> Tuple[np.ndarray, Space]:
    if "nodes" not in sidecar:
        raise _fail("covariance responses need 'nodes' (matrix size) in the sidecar", "nodes")
    space = Space.from_sidecar(sidecar)
    mats = _matrix_rows(path, space.nodes, sidecar.get("format"))
    reps = np.stack([M.ravel() for M in mats])
    for idx, r in enumerate(reps, start=1):
        problem = space.violation(r)
        if problem:
            raise _fail(f"{path}: response {idx} is not a covariance matrix ({problem})")
    return reps, space


def read_responses(path, sidecar: dict) -> Tuple[np.ndarray, Space]:
    """Response representation array and the space it lives in."""
    kind = sidecar.get("space")
    if kind == "wasserstein":
        return _read_wasserstein(path, sidecar)
    if kind == "laplacian":
        return _read_laplacian(path, sidecar)
    if kind == "covariance":
        return _read_covariance(path, sidecar)
    raise InputError(
        f"unknown space {kind!r}; expected wasserstein, laplacian or covariance", stage=INGEST, field="space"
    )


def write_responses(path, reps, space: Space) -> Path:
    """Representation rows as CSV (flat matrices for the matrix spaces)."""
    path = Path(path)
    np.savetxt(path, np.atleast_2d(reps), delimiter=",", fmt="%.17g")
    return path


def write_predictions(path, results, space: Space) -> Path:
    """``results``: sequence of ``(vector, "")`` or ``(None, reason)``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for vec, reason in results:
            if vec is None:
                writer.writerow([FAILED, reason])
            else:
                writer.writerow([repr(float(v)) for v in space.to_array(vec)])
    return path


def read_predictions(path, space: Space) -> List[Tuple[Optional[np.ndarray], str]]:
    out = []
    for lineno, row in enumerate(_rows(path), start=1):
        if row[0] == FAILED:
            out.append((None, row[1] if len(row) > 1 else ""))
            continue
        vals = np.array([float(c) for c in row], dtype=np.float64)
        if vals.size != space.rep_size:
            raise _fail(f"{path}: row {lineno} has {vals.size} values, expected {space.rep_size}", "predictions")
        out.append((vals, ""))
    return out
