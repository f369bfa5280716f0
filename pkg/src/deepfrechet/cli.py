"""Command-line interface: ``dfr fit``, ``dfr predict``, ``dfr simulate``.

Exit codes: 0 success, 2 invalid input, 3 numeric failure, 4 every
prediction failed. Errors are reported on one line as
``ERROR:<stage>:<field>: message``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .dnn import MlpConfig, hyperparameter_grid
from .exceptions import DFRError, InputError
from .formats import read_predictor_rows, read_predictors, read_responses, read_sidecar, write_predictions
from .pipeline import DfrModel, fit_dfr
from .simharness import GENERATORS, METHODS, run_experiment

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_ALL_FAILED = 4

log = logging.getLogger("deepfrechet")

SPACE_IDS = ("wasserstein", "laplacian", "covariance")


@dataclasses.dataclass
class RunConfig:
    space: Optional[str] = None
    predictors: Optional[str] = None
    responses: Optional[str] = None
    sidecar: Optional[str] = None
    k: int = 10
    r: int = 2
    bandwidth: Optional[float] = None
    seed: int = 0
    out: Optional[str] = None
    grid: Optional[str] = None
    net: Optional[dict] = None
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise InputError(f"unknown run-config field {key!r}", stage="config", field=key)
        return cls(**data)

    def validate(self) -> None:
        for name in ("predictors", "responses", "out"):
            if getattr(self, name) is None:
                raise InputError(f"--{name} is required", stage="config", field=name)
        if self.space is not None and self.space not in SPACE_IDS:
            raise InputError(f"space must be one of {SPACE_IDS}, got {self.space!r}", stage="config", field="space")
        if self.sidecar is not None and not Path(self.sidecar).is_file():
            raise InputError(f"sidecar not found: {self.sidecar}", stage="config", field="sidecar")
        if self.sidecar is None and self.space is None:
            raise InputError("give --space or a --sidecar naming the space", stage="config", field="space")
        for name in ("predictors", "responses"):
            if not Path(getattr(self, name)).exists():
                raise InputError(f"{name} path not found: {getattr(self, name)}", stage="config", field=name)
        if self.grid is not None and not Path(self.grid).is_file():
            raise InputError(f"grid file not found: {self.grid}", stage="config", field="grid")
        if self.k < 1:
            raise InputError("k must be positive", stage="config", field="k")
        if self.r < 1:
            raise InputError("r must be positive", stage="config", field="r")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise InputError("bandwidth must be positive", stage="config", field="bandwidth")


def _error(exc: DFRError) -> int:
    field = exc.field or "-"
    msg = " ".join(str(exc).split())
    print(f"ERROR:{exc.stage}:{field}: {msg}", file=sys.stderr)
    return EXIT_INPUT if isinstance(exc, ValueError) else EXIT_NUMERIC


def _load_grid(path) -> List[MlpConfig]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"grid file {path} is not valid JSON: {exc}", stage="config", field="grid") from None
    if data == "default":
        return hyperparameter_grid()
    if not isinstance(data, list) or not data:
        raise InputError("grid file must hold a nonempty list of network configs", stage="config", field="grid")
    return [MlpConfig.from_dict(d) for d in data]


def _run_config(args) -> RunConfig:
    flags = {
        name: getattr(args, name)
        for name in ("space", "predictors", "responses", "sidecar", "k", "r", "bandwidth", "seed", "out", "grid", "jobs")
    }
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise InputError(f"config not found: {path}", stage="config", field="config")
        try:
            overrides = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}", stage="config", field="config") from None
        cfg = RunConfig.from_dict({**{k: v for k, v in flags.items() if v is not None}, **overrides})
    else:
        cfg = RunConfig.from_dict({k: v for k, v in flags.items() if v is not None})
    cfg.validate()
    return cfg


def cmd_fit(args) -> int:
    cfg = _run_config(args)
    sidecar = read_sidecar(cfg.sidecar) if cfg.sidecar else {}
    if cfg.space is not None:
        if sidecar.get("space", cfg.space) != cfg.space:
            raise InputError(
                f"--space {cfg.space} contradicts sidecar space {sidecar['space']!r}", stage="config", field="space"
            )
        sidecar["space"] = cfg.space
    X = read_predictors(cfg.predictors)
    reps, space = read_responses(cfg.responses, sidecar)
    n = reps.shape[0]
    if X.shape[0] != n:
        raise InputError(f"{X.shape[0]} predictor rows but {n} responses", stage="ingest", field="predictors")
    if cfg.k >= n:
        raise InputError(f"k = {cfg.k} needs k < n = {n} for the neighbour graph", stage="isomap", field="k")

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "fit.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        net = MlpConfig.from_dict(cfg.net) if cfg.net else MlpConfig()
        grid = _load_grid(cfg.grid) if cfg.grid else None
        log.info("fitting n=%d p=%d space=%s k=%d r=%d seed=%d", n, X.shape[1], space.kind, cfg.k, cfg.r, cfg.seed)
        model = fit_dfr(X, reps, space, k=cfg.k, r=cfg.r, net_config=net, bandwidth=cfg.bandwidth,
                        grid=grid, seed=cfg.seed, jobs=cfg.jobs)
        model.save(out)
        log.info("model written to %s (bandwidth %.6g)", out, model.lfr.kernel.bandwidth)
    finally:
        log.removeHandler(handler)
        handler.close()
    print(f"model written to {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.model is None or args.predictors is None or args.out is None:
        raise InputError("predict needs --model, --predictors and --out", stage="config", field="model")
    model = DfrModel.load(args.model)
    rows = read_predictor_rows(args.predictors)
    p = model.nets[0].input_dim
    results = []
    for i, (x, reason) in enumerate(rows, start=1):
        if x is None:
            results.append((None, reason))
            continue
        if x.size != p:
            results.append((None, f"row {i} has {x.size} predictors, expected {p}"))
            continue
        try:
            vec, _ = model.predict_array(x)
        except DFRError as exc:
            results.append((None, " ".join(str(exc).split())))
            continue
        results.append((vec, ""))
    write_predictions(args.out, results, model.space)
    failed = sum(vec is None for vec, _ in results)
    if failed:
        print(f"{failed} of {len(results)} rows failed", file=sys.stderr)
    if results and failed == len(results):
        print(f"ERROR:predict:predictors: all {failed} rows failed", file=sys.stderr)
        return EXIT_ALL_FAILED
    return EXIT_OK


EXPERIMENT_KEYS = {"generator", "n", "Q", "methods", "seed", "k", "r", "bandwidth", "grid", "net",
                   "test_size", "nodes", "nu", "grid_size"}


def cmd_simulate(args) -> int:
    path = Path(args.experiment)
    if not path.is_file():
        raise InputError(f"experiment file not found: {path}", stage="config", field="experiment")
    try:
        exp = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"experiment file {path} is not valid JSON: {exc}", stage="config", field="experiment") from None
    for key in exp:
        if key not in EXPERIMENT_KEYS:
            raise InputError(f"unknown experiment field {key!r}", stage="config", field=key)
    for key in ("generator", "n", "Q"):
        if key not in exp:
            raise InputError(f"experiment file lacks {key!r}", stage="config", field=key)
    if exp["generator"] not in GENERATORS:
        raise InputError(f"generator must be one of {GENERATORS}", stage="config", field="generator")
    grid = exp.get("grid")
    if grid == "default":
        grid = hyperparameter_grid()
    elif isinstance(grid, list):
        grid = [MlpConfig.from_dict(d) for d in grid]
    elif grid is not None:
        raise InputError("grid must be \"default\" or a list of network configs", stage="config", field="grid")
    options = {key: exp[key] for key in ("nodes", "nu", "grid_size") if key in exp}
    seed = args.seed if args.seed is not None else exp.get("seed", 0)
    report = run_experiment(
        exp["generator"],
        exp["n"],
        int(exp["Q"]),
        methods=exp.get("methods", list(METHODS)),
        seed=int(seed),
        k=int(exp.get("k", 10)),
        r=int(exp.get("r", 2)),
        net_config=MlpConfig.from_dict(exp["net"]) if exp.get("net") else MlpConfig(),
        bandwidth=exp.get("bandwidth"),
        grid=grid,
        test_size=int(exp.get("test_size", 100)),
        jobs=args.jobs,
        **options,
    )
    out = report.write(args.out)
    print(f"AMSPE, {report.generator} design, Q = {report.Q}")
    print(report.table())
    if not report.complete:
        failed = sum(r["status"] != "ok" for r in report.runs)
        print(f"WARNING: {failed} of {len(report.runs)} runs failed; see {out / 'report.json'}", file=sys.stderr)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"ERROR:cli:-: {message}", file=sys.stderr)
        self.exit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dfr", description="Deep Fréchet regression for metric-space responses.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    jobs_default = os.cpu_count() or 1

    fit = sub.add_parser("fit", help="fit a model and write a model bundle")
    fit.add_argument("--space", choices=SPACE_IDS)
    fit.add_argument("--predictors", help="predictor CSV")
    fit.add_argument("--responses", help="response CSV, or a directory of edge lists")
    fit.add_argument("--sidecar", help="JSON sidecar with the space's shape parameters")
    fit.add_argument("--k", type=int, help="ISOMAP neighbour count (default 10)")
    fit.add_argument("--r", type=int, help="embedding dimension (default 2)")
    fit.add_argument("--bandwidth", type=float, help="override the kernel bandwidth")
    fit.add_argument("--seed", type=int, help="master seed (default 0)")
    fit.add_argument("--out", help="model bundle directory")
    fit.add_argument("--grid", help='network-config grid JSON (a list of configs, or "default")')
    fit.add_argument("--config", help="RunConfig JSON; its fields override the flags")
    fit.add_argument("--jobs", type=int, default=jobs_default, help="worker processes")
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="predict at the rows of a predictor CSV")
    pred.add_argument("--model", help="model bundle directory")
    pred.add_argument("--predictors", help="predictor CSV")
    pred.add_argument("--out", help="predictions CSV")
    pred.set_defaults(func=cmd_predict)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("experiment", help="experiment JSON")
    sim.add_argument("--out", default="report", help="report directory")
    sim.add_argument("--seed", type=int, help="override the experiment's seed")
    sim.add_argument("--jobs", type=int, default=jobs_default, help="worker processes")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DFRError as exc:
        return _error(exc)
    except OSError as exc:
        print(f"ERROR:io:{getattr(exc, 'filename', None) or '-'}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
