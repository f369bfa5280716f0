"""Seeded simulation designs and the Monte Carlo runner.

Designs
-------
``distributional``
    Gaussian distributions whose mean and standard deviation depend on nine
    predictors; each response is observed through 100 draws and enters the
    fit as an empirical quantile function.
``network``
    Graph Laplacians whose off-diagonal weights are i.i.d. Beta draws with
    predictor-dependent parameters.
``perturbed``
    Distributional design on twelve predictors with a perturbation level
    ``nu`` on the mean.
``constant``
    Identical responses; a sanity fixture (every method must be exact).

Random streams: every run ``q`` at sample size ``n`` gets its own Philox
streams for training data, test data and fitting, all derived from the
master seed through :func:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .dnn import MlpConfig, make_rng
from .exceptions import BandwidthError, DFRError, InputError, ShapeError
from .metric_spaces import DEFAULT_GRID_SIZE, ProbGrid, Space, quantile_from_samples
from .pipeline import derive_seed, fit_dfr, fit_gfr

log = logging.getLogger(__name__)

GENERATORS = ("distributional", "network", "perturbed", "constant")
METHODS = ("dfr", "gfr")
TEST_SIZE = 100
SAMPLES_PER_RESPONSE = 100
BETA_PARAM_FLOOR = 1e-8
# a test point the kernel window misses is retried at a wider bandwidth
BANDWIDTH_GROWTH = 1.5
MAX_BANDWIDTH_EXPANSIONS = 30


@dataclass
class SimDataset:
    X: np.ndarray
    responses: np.ndarray
    truths: np.ndarray
    space: Space
    generator: str
    seed: object = None
    samples: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _rng(seed):
    return make_rng(seed)


def _gaussian_quantiles(mean, sd, grid: ProbGrid):
    z = ndtri(grid.points)
    return np.asarray(mean)[:, None] + np.asarray(sd)[:, None] * z[None, :]


def _empirical_quantiles(samples, grid):
    return np.stack([quantile_from_samples(s, grid).values for s in samples])


# ---------------------------------------------------------------------------
# distributional design
# ---------------------------------------------------------------------------


def distributional_params(X):
    """Conditional mean ``mu`` of eta and mean ``theta`` of sigma given X."""
    X = np.atleast_2d(X)
    trig = np.sin(np.pi * X[:, 0]) + np.cos(np.pi * X[:, 1])
    quad = 5.0 * X[:, 3] ** 2 + X[:, 4]
    mu = 3.0 * X[:, 7] * trig + X[:, 6] * quad
    theta = 3.0 + 0.5 * X[:, 7] * trig + X[:, 6] * np.abs(quad)
    return mu, theta


def _distributional_X(n, rng):
    return np.column_stack(
        [
            rng.uniform(-1.0, 0.0, n),
            rng.uniform(0.0, 1.0, n),
            rng.uniform(1.0, 2.0, n),
            rng.normal(0.0, 1.0, n),
            rng.normal(-10.0, np.sqrt(3.0), n),
            rng.normal(10.0, np.sqrt(3.0), n),
            rng.binomial(1, 0.6, n),
            rng.binomial(1, 0.7, n),
            rng.binomial(1, 0.3, n),
        ]
    ).astype(np.float64)


def gen_distributional(n: int, seed=0, grid_size: int = DEFAULT_GRID_SIZE, samples_per: int = SAMPLES_PER_RESPONSE):
    """Gaussian responses, ``eta ~ N(mu, 0.5^2)``, ``sigma ~ Gamma(theta^2, scale 1/theta)``.

    The truth is the quantile function of ``N(mu, theta^2)``; responses are
    empirical quantile functions of ``samples_per`` draws from
    ``N(eta, sigma^2)``.
    """
    if n < 1:
        raise InputError("n must be positive")
    rng = _rng(seed)
    grid = ProbGrid(grid_size)
    X = _distributional_X(n, rng)
    mu, theta = distributional_params(X)
    eta = rng.normal(mu, 0.5)
    sigma = rng.gamma(theta**2, 1.0 / theta)
    samples = eta[:, None] + sigma[:, None] * rng.standard_normal((n, samples_per))
    return SimDataset(
        X=X,
        responses=_empirical_quantiles(samples, grid),
        truths=_gaussian_quantiles(mu, theta, grid),
        space=Space("wasserstein", grid_size=grid_size),
        generator="distributional",
        seed=seed,
        samples=samples,
        params={"mu": mu, "theta": theta, "eta": eta, "sigma": sigma},
    )


# ---------------------------------------------------------------------------
# network design
# ---------------------------------------------------------------------------


def network_params(X):
    X = np.atleast_2d(X)
    a1 = X[:, 7] * np.sin(np.pi * X[:, 0]) + (1.0 - X[:, 7]) * np.cos(np.pi * X[:, 1])
    a2 = X[:, 3] ** 2 * X[:, 6] + X[:, 4] ** 2 * (1.0 - X[:, 6])
    return a1, a2


def _network_X(n, rng):
    return np.column_stack(
        [
            rng.uniform(0.0, 1.0, n),
            rng.uniform(-0.5, 0.5, n),
            rng.uniform(1.0, 2.0, n),
            rng.normal(0.0, 1.0, n),
            rng.normal(0.0, 1.0, n),
            rng.normal(5.0, np.sqrt(5.0), n),
            rng.binomial(1, 0.4, n),
            rng.binomial(1, 0.3, n),
            rng.binomial(1, 0.6, n),
        ]
    ).astype(np.float64)


def vech_inverse(values, m: int) -> np.ndarray:
    """Laplacian with the given strict upper triangle (row-major) and zero row sums."""
    L = np.zeros((m, m))
    iu = np.triu_indices(m, 1)
    L[iu] = values
    L = L + L.T
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def gen_network(n: int, m: int = 10, seed=0):
    """Laplacians with off-diagonals ``-l_j``, ``l_j ~ Beta(alpha1, alpha2)`` i.i.d.

    Rows of X whose Beta parameters are numerically zero are redrawn.
    """
    if n < 1 or m < 2:
        raise InputError("need n >= 1 and m >= 2")
    rng = _rng(seed)
    X = _network_X(n, rng)
    redrawn = 0
    while True:
        a1, a2 = network_params(X)
        bad = (a1 <= BETA_PARAM_FLOOR) | (a2 <= BETA_PARAM_FLOOR)
        if not bad.any():
            break
        redrawn += int(bad.sum())
        log.info("redrawing %d predictor rows with non-positive Beta parameters", int(bad.sum()))
        X[bad] = _network_X(int(bad.sum()), rng)
    d = m * (m - 1) // 2
    draws = rng.beta(a1[:, None], a2[:, None], size=(n, d))
    responses = np.stack([vech_inverse(-row, m).ravel() for row in draws])
    mean = a1 / (a1 + a2)
    truths = np.stack([vech_inverse(np.full(d, -mk), m).ravel() for mk in mean])
    return SimDataset(
        X=X,
        responses=responses,
        truths=truths,
        space=Space("laplacian", nodes=m, weight_bound=1.0),
        generator="network",
        seed=seed,
        params={"alpha1": a1, "alpha2": a2, "redrawn": redrawn},
    )


# ---------------------------------------------------------------------------
# perturbed distributional design
# ---------------------------------------------------------------------------


def perturbed_params(X):
    """Mean ``mu`` of eta and (signed) standard deviation formula ``sigma``."""
    X = np.atleast_2d(X)
    mu = 3.0 * X[:, 9] + 3.0 * X[:, 7] * (np.cos(np.pi * X[:, 0]) + np.sin(np.pi * X[:, 1])) + X[:, 6] * (
        X[:, 3] + X[:, 4]
    )
    sigma = (
        3.0 * X[:, 10]
        + 2.0 * X[:, 7] * (np.sin(np.pi * X[:, 0]) + np.cos(np.pi * X[:, 1]))
        + X[:, 6] * (X[:, 3] ** 2 + X[:, 4] ** 2)
    )
    return mu, sigma


def gen_perturbed(n: int, nu: float = 0.0, seed=0, grid_size: int = DEFAULT_GRID_SIZE,
                  samples_per: int = SAMPLES_PER_RESPONSE):
    """``eta ~ N(mu, nu^2)`` with deterministic sigma; ``nu = 0`` gives eta = mu."""
    if nu < 0:
        raise InputError("perturbation level must be nonnegative")
    rng = _rng(seed)
    grid = ProbGrid(grid_size)
    X = np.column_stack(
        [
            rng.uniform(-1.0, 0.0, n),
            rng.uniform(0.0, 1.0, n),
            rng.uniform(1.0, 2.0, n),
            rng.normal(1.0, 1.0, n),
            rng.normal(-1.0, 1.0, n),
            rng.normal(0.0, np.sqrt(3.0), n),
            rng.binomial(1, 0.6, n),
            rng.binomial(1, 0.7, n),
            rng.binomial(1, 0.3, n),
            rng.beta(2.0, 2.0, n),
            rng.beta(3.0, 2.0, n),
            rng.beta(2.0, 3.0, n),
        ]
    ).astype(np.float64)
    mu, sigma = perturbed_params(X)
    eta = mu + nu * rng.standard_normal(n) if nu > 0 else mu.copy()
    # a negative value of the sigma formula is read as the scale |sigma|
    sd = np.abs(sigma)
    samples = eta[:, None] + sd[:, None] * rng.standard_normal((n, samples_per))
    return SimDataset(
        X=X,
        responses=_empirical_quantiles(samples, grid),
        truths=_gaussian_quantiles(mu, sd, grid),
        space=Space("wasserstein", grid_size=grid_size),
        generator="perturbed",
        seed=seed,
        samples=samples,
        params={"mu": mu, "sigma": sigma, "eta": eta, "nu": nu},
    )


def gen_constant(n: int, seed=0, grid_size: int = DEFAULT_GRID_SIZE, p: int = 3):
    """Every response is the standard normal quantile function."""
    rng = _rng(seed)
    grid = ProbGrid(grid_size)
    X = rng.uniform(0.0, 1.0, (n, p))
    q = _gaussian_quantiles(np.zeros(n), np.ones(n), grid)
    return SimDataset(X, q, q.copy(), Space("wasserstein", grid_size=grid_size), "constant", seed)


def generate(generator: str, n: int, seed, **options) -> SimDataset:
    grid_size = options.get("grid_size", DEFAULT_GRID_SIZE)
    if generator == "distributional":
        return gen_distributional(n, seed, grid_size=grid_size)
    if generator == "network":
        return gen_network(n, options.get("nodes", 10), seed)
    if generator == "perturbed":
        return gen_perturbed(n, options.get("nu", 0.0), seed, grid_size=grid_size)
    if generator == "constant":
        return gen_constant(n, seed, grid_size=grid_size)
    raise InputError(f"unknown generator {generator!r}; expected one of {GENERATORS}", field="generator")


# ---------------------------------------------------------------------------
# error measures and the experiment runner
# ---------------------------------------------------------------------------


def mspe(predictions, truths, space: Space) -> float:
    """Mean squared prediction error under the space's metric."""
    P = space.stack(predictions)
    T = space.stack(truths)
    if P.shape != T.shape:
        raise ShapeError(f"{P.shape[0]} predictions but {T.shape[0]} truths")
    return float(np.mean(space.sq_distances(P, T)))


@dataclass
class ExperimentReport:
    generator: str
    methods: list
    n: list
    Q: int
    seed: int
    runs: list
    config: dict = field(default_factory=dict)

    def mspes(self, method, n):
        return [r["mspe"] for r in self.runs if r["method"] == method and r["n"] == n and r["status"] == "ok"]

    def amspe(self, method, n) -> float:
        vals = self.mspes(method, n)
        return float(np.mean(vals)) if vals else float("nan")

    def mmspe(self, method, n) -> float:
        vals = self.mspes(method, n)
        return float(np.median(vals)) if vals else float("nan")

    @property
    def complete(self) -> bool:
        return all(r["status"] == "ok" for r in self.runs)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "methods": list(self.methods),
            "n": list(self.n),
            "Q": self.Q,
            "seeds": {"master": self.seed},
            "config": self.config,
            "complete": self.complete,
            "runs": self.runs,
            "amspe": {m: {str(n): self.amspe(m, n) for n in self.n} for m in self.methods},
            "mmspe": {m: {str(n): self.mmspe(m, n) for n in self.n} for m in self.methods},
        }

    def to_json(self, deterministic: bool = False) -> str:
        data = self.to_dict()
        if deterministic:
            for run in data["runs"]:
                run.pop("wall_ms", None)
        return json.dumps(data, indent=2, allow_nan=True)

    CSV_FIELDS = ("generator", "n", "run", "method", "status", "mspe", "wall_ms", "n_invalid",
                  "bandwidth", "widened_points", "stage", "error")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for run in self.runs:
            writer.writerow({"generator": self.generator, **run})
        return buf.getvalue()

    def table(self) -> str:
        """AMSPE table: one row per sample size, one column per method."""
        header = f"{'n':>6} | " + " ".join(f"{m.upper():>10}" for m in self.methods)
        lines = [header, "-" * len(header)]
        for n in self.n:
            cells = " ".join(f"{self.amspe(m, n):>10.3f}" for m in self.methods)
            lines.append(f"{n:>6} | {cells}")
        return "\n".join(lines)

    def write(self, out_dir) -> Path:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(self.to_json())
        (d / "report.csv").write_text(self.to_csv())
        return d


def _fit_method(method, train, settings, fit_seed):
    if method == "dfr":
        return fit_dfr(
            train.X,
            train.responses,
            train.space,
            k=settings["k"],
            r=settings["r"],
            net_config=settings["net_config"],
            bandwidth=settings.get("bandwidth"),
            grid=settings.get("grid"),
            seed=fit_seed,
        )
    if method == "gfr":
        return fit_gfr(train.X, train.responses, train.space)
    raise InputError(f"unknown method {method!r}; expected one of {METHODS}", field="methods")


def _predict_point(model, x, method):
    """Prediction for one test point; returns (vector, number of bandwidth expansions)."""
    if method != "dfr":
        return model.predict_array(x)[0], 0
    h = model.lfr.kernel.bandwidth
    for expansions in range(MAX_BANDWIDTH_EXPANSIONS + 1):
        try:
            return model.predict_array(x, h)[0], expansions
        except BandwidthError:
            if expansions == MAX_BANDWIDTH_EXPANSIONS:
                raise
            h *= BANDWIDTH_GROWTH


def _run_one(task):
    generator, n, q, methods, seed, settings = task
    options = settings["options"]
    train = generate(generator, n, derive_seed(seed, "train", n, q), **options)
    test = generate(generator, settings["test_size"], derive_seed(seed, "test", n, q), **options)
    records = []
    predictions = {}
    for method in methods:
        t0 = time.perf_counter()
        record = {"n": n, "run": q, "method": method, "status": "ok", "mspe": None,
                  "n_invalid": 0, "bandwidth": None, "widened_points": 0, "stage": "", "error": ""}
        try:
            model = _fit_method(method, train, settings, derive_seed(seed, "fit", n, q))
            if method == "dfr":
                record["bandwidth"] = model.lfr.kernel.bandwidth
            preds = np.empty_like(test.truths)
            for i, x in enumerate(test.X):
                try:
                    preds[i], grown = _predict_point(model, x, method)
                except DFRError as exc:
                    exc.field = f"test point {i}"
                    raise
                if grown:
                    record["widened_points"] += 1
            invalid = [i for i, row in enumerate(preds) if not test.space.is_valid(row)]
            record["n_invalid"] = len(invalid)
            record["mspe"] = mspe(preds, test.truths, test.space)
            if settings.get("keep_predictions"):
                predictions[method] = preds
        except DFRError as exc:
            record.update(status="failed", stage=exc.stage, error=str(exc))
            log.warning("run %d (n=%d, %s) failed at %s: %s", q, n, method, exc.stage, exc)
        record["wall_ms"] = round(1000.0 * (time.perf_counter() - t0), 3)
        records.append(record)
    return records, predictions


def run_experiment(
    generator: str,
    n: Sequence[int],
    Q: int,
    methods: Sequence[str] = METHODS,
    seed: int = 0,
    k: int = 10,
    r: int = 2,
    net_config: MlpConfig = MlpConfig(),
    bandwidth: Optional[float] = None,
    grid=None,
    test_size: int = TEST_SIZE,
    jobs: int = 1,
    keep_predictions: bool = False,
    **options,
) -> ExperimentReport:
    """Monte Carlo comparison of methods on one simulation design.

    For each sample size and each of the ``Q`` runs a fresh training set and
    an independent test set of ``test_size`` points are drawn; every method
    is fitted on the same data and scored by its MSPE against the true
    regression objects. A DFR test point whose fitted embedding falls outside
    the kernel window is predicted at a bandwidth widened by factors of 1.5
    until the window reaches it; the count is kept as ``widened_points``. Failed runs are recorded with their stage and do not
    abort the batch. With ``keep_predictions`` the test predictions are
    attached to the report as ``report.predictions[(n, q, method)]``.
    """
    if Q < 1:
        raise InputError("Q must be at least 1", field="Q")
    if generator not in GENERATORS:
        raise InputError(f"unknown generator {generator!r}", field="generator")
    for m in methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}", field="methods")
    n_list = [int(v) for v in (n if isinstance(n, (list, tuple)) else [n])]
    settings = {
        "k": k,
        "r": r,
        "net_config": net_config,
        "bandwidth": bandwidth,
        "grid": grid,
        "test_size": test_size,
        "keep_predictions": keep_predictions,
        "options": options,
    }
    tasks = [(generator, nn, q, list(methods), int(seed), settings) for nn in n_list for q in range(Q)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    runs = []
    kept = {}
    for task, (records, preds) in zip(tasks, results):
        runs.extend(records)
        for method, arr in preds.items():
            kept[(task[1], task[2], method)] = arr
    config = {
        "k": k,
        "r": r,
        "net_config": net_config.to_dict(),
        "bandwidth": bandwidth,
        "test_size": test_size,
        "grid_size": options.get("grid_size", DEFAULT_GRID_SIZE),
        **{key: val for key, val in options.items() if key != "grid_size"},
    }
    report = ExperimentReport(generator, list(methods), n_list, Q, int(seed), runs, config)
    report.predictions = kept
    return report
