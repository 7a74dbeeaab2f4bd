"""Experiment runner and CLI: dataset I/O, the (solver x rho x
hyperparameter x seed) grid, metric collection, and results emission.

Every grid cell derives three independent RNG streams (data, mask, factor
init) from its own seed, so cells are reproducible in isolation and the
grid can run cells in any order or in parallel without changing a single
metric value. Timing columns measure the solver loop only.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .errors import DegenerateBaseline, ParseError, RaggedRows
from .linalg import gram_effective_rank
from .simdata import (
    DEFAULT_EPSILON,
    MaskSpec,
    MaskedDataset,
    generate_mask,
    generate_synthetic,
    initial_similarity,
    true_similarity,
)
from .solvers import (
    SolverConfig,
    SolverKind,
    impute_with_search_means,
    solve,
)

log = logging.getLogger("simcomplete")

RESULT_COLUMNS = [
    "dataset",
    "solver",
    "n_search",
    "n_query",
    "d",
    "rho",
    "rank",
    "lambda",
    "gamma",
    "iters",
    "seed",
    "rmse",
    "recall",
    "ndcg",
    "rank_hat",
    "total_seconds",
    "seconds_per_iter",
    "error",
]

# columns whose values may differ between repeated runs of the same grid
TIMING_COLUMNS = ("total_seconds", "seconds_per_iter")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SyntheticDataset:
    d: int
    latent_rank: int
    noise_sigma: float = 0.0
    label: str = "synthetic"


@dataclass
class CsvDataset:
    path: str

    @property
    def label(self) -> str:
        return Path(self.path).stem


@dataclass
class SolverSpec:
    """Per-solver template; grid lists supply r, lambda, gamma, iters."""

    kind: SolverKind
    tau: float | None = None
    grad_tol: float = 0.0

    def __post_init__(self):
        self.kind = SolverKind(self.kind)


@dataclass
class ExperimentConfig:
    dataset: SyntheticDataset | CsvDataset
    n_search: int
    n_query: int
    rho_list: list[float]
    solver_list: list[SolverSpec]
    r_list: list[int]
    lambda_list: list[float]
    gamma_list: list[float]
    iters: int
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    k_fraction: float = 0.2
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        for name in ("rho_list", "solver_list", "r_list", "lambda_list", "gamma_list", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")
        for rho in self.rho_list:
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"rho values must lie in [0, 1), got {rho}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    ds_doc = doc.pop("dataset", None)
    if not isinstance(ds_doc, dict):
        raise ValueError("config requires a 'dataset' object")
    if "synthetic" in ds_doc:
        syn = ds_doc["synthetic"]
        dataset = SyntheticDataset(
            d=int(syn["d"]),
            latent_rank=int(syn["latent_rank"]),
            noise_sigma=float(syn.get("noise_sigma", 0.0)),
        )
    elif "csv_path" in ds_doc:
        dataset = CsvDataset(path=str(ds_doc["csv_path"]))
    else:
        raise ValueError("dataset must contain 'synthetic' or 'csv_path'")
    solver_list = []
    for entry in doc.pop("solver_list", []):
        if isinstance(entry, str):
            solver_list.append(SolverSpec(kind=SolverKind(entry)))
        else:
            solver_list.append(
                SolverSpec(
                    kind=SolverKind(entry["kind"]),
                    tau=entry.get("tau"),
                    grad_tol=float(entry.get("grad_tol", 0.0)),
                )
            )
    known = {
        "n_search",
        "n_query",
        "rho_list",
        "r_list",
        "lambda_list",
        "gamma_list",
        "iters",
        "seeds",
        "k_fraction",
        "epsilon",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(
            dataset=dataset,
            n_search=int(doc["n_search"]),
            n_query=int(doc["n_query"]),
            rho_list=[float(r) for r in doc["rho_list"]],
            solver_list=solver_list,
            r_list=[int(r) for r in doc["r_list"]],
            lambda_list=[float(v) for v in doc["lambda_list"]],
            gamma_list=[float(v) for v in doc["gamma_list"]],
            iters=int(doc["iters"]),
            seeds=[int(s) for s in doc.get("seeds", [0, 1, 2, 3, 4])],
            k_fraction=float(doc.get("k_fraction", 0.2)),
            epsilon=float(doc.get("epsilon", DEFAULT_EPSILON)),
        )
    except KeyError as exc:
        raise ValueError(f"config missing required key: {exc.args[0]}") from None


def config_from_json(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# matrix CSV I/O


def load_matrix_csv(path) -> np.ndarray:
    """Headerless numeric CSV into a float64 matrix; empty cells rejected."""
    x, mask = _load_csv(path, allow_missing=False)
    del mask
    return x


def load_masked_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Numeric CSV where empty fields mark missing entries.

    Missing entries are stored as 0.0 with the mask flag cleared.
    """
    return _load_csv(path, allow_missing=True)


def _load_csv(path, allow_missing: bool) -> tuple[np.ndarray, np.ndarray]:
    rows: list[list[float]] = []
    flags: list[list[bool]] = []
    width = None
    blank_at = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line == "":
                if blank_at is None:
                    blank_at = lineno
                continue
            if blank_at is not None:
                raise ParseError(f"blank line {blank_at} inside data", row=blank_at)
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise RaggedRows(
                    f"row {lineno} has {len(fields)} fields, expected {width}",
                    row=lineno,
                )
            vals, seen = [], []
            for colno, cell in enumerate(fields, start=1):
                cell = cell.strip()
                if cell == "":
                    if not allow_missing:
                        raise ParseError(
                            f"empty cell at row {lineno}, column {colno}",
                            row=lineno,
                            col=colno,
                        )
                    vals.append(0.0)
                    seen.append(False)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"cannot parse {cell!r} at row {lineno}, column {colno}",
                        row=lineno,
                        col=colno,
                    ) from None
                seen.append(True)
            rows.append(vals)
            flags.append(seen)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), np.array(flags, dtype=bool)


def _fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def save_matrix_csv(path, x) -> None:
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in x:
            fh.write(",".join(_fmt_float(v) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# grid execution


@dataclass
class ResultRow:
    dataset: str
    solver: str
    n_search: int
    n_query: int
    d: int | None
    rho: float
    rank: int
    lam: float
    gamma: float
    iters: int | None
    seed: int
    rmse: float | None = None
    recall: float | None = None
    ndcg: float | None = None
    rank_hat: int | None = None
    total_seconds: float | None = None
    seconds_per_iter: float | None = None
    error: str = ""

    def as_record(self) -> dict:
        return {
            "dataset": self.dataset,
            "solver": self.solver,
            "n_search": self.n_search,
            "n_query": self.n_query,
            "d": self.d,
            "rho": self.rho,
            "rank": self.rank,
            "lambda": self.lam,
            "gamma": self.gamma,
            "iters": self.iters,
            "seed": self.seed,
            "rmse": self.rmse,
            "recall": self.recall,
            "ndcg": self.ndcg,
            "rank_hat": self.rank_hat,
            "total_seconds": self.total_seconds,
            "seconds_per_iter": self.seconds_per_iter,
            "error": self.error,
        }


@dataclass
class CellSpec:
    dataset: SyntheticDataset | CsvDataset
    n_search: int
    n_query: int
    rho: float
    solver: SolverSpec
    r: int
    lam: float
    gamma: float
    iters: int
    seed: int
    k_fraction: float
    epsilon: float
    global_topk: bool = False
    trace_stride: int = 1


def derive_cell_seeds(seed: int) -> tuple[int, int, int]:
    """Three decorrelated integer seeds (data, mask, factor init) from one
    cell seed."""
    state = np.random.SeedSequence(seed).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def prepare_cell_data(
    dataset: SyntheticDataset | CsvDataset,
    n_search: int,
    n_query: int,
    rho: float,
    seed: int,
    epsilon: float = DEFAULT_EPSILON,
):
    """Build (X, S*, masked dataset, S0, init_seed) for one grid cell."""
    data_seed, mask_seed, init_seed = derive_cell_seeds(seed)
    if isinstance(dataset, SyntheticDataset):
        x = generate_synthetic(
            n_search, n_query, dataset.d, dataset.latent_rank, dataset.noise_sigma, data_seed
        )
    else:
        x = load_matrix_csv(dataset.path)
        if x.shape[0] != n_search + n_query:
            raise ValueError(
                f"{dataset.path}: {x.shape[0]} rows but n_search+n_query="
                f"{n_search + n_query}"
            )
    s_star = true_similarity(x, epsilon)
    qmask = generate_mask((n_query, x.shape[1]), MaskSpec(rho, mask_seed))
    mask = np.ones(x.shape, dtype=bool)
    mask[n_search:] = qmask
    ds = MaskedDataset(x, mask, n_search, n_query, epsilon)
    s0 = initial_similarity(ds)
    return x, s_star, ds, s0, init_seed


def run_cell(spec: CellSpec) -> ResultRow:
    row = ResultRow(
        dataset=spec.dataset.label,
        solver=spec.solver.kind.value,
        n_search=spec.n_search,
        n_query=spec.n_query,
        d=None,
        rho=spec.rho,
        rank=spec.r,
        lam=spec.lam,
        gamma=spec.gamma,
        iters=None,
        seed=spec.seed,
    )
    try:
        x, s_star, ds, s0, init_seed = prepare_cell_data(
            spec.dataset, spec.n_search, spec.n_query, spec.rho, spec.seed, spec.epsilon
        )
        row.d = x.shape[1]
        rank_factor = None
        if spec.solver.kind == SolverKind.MEAN_IMPUTE:
            tick = time.perf_counter()
            filled = impute_with_search_means(ds)
            s_hat = true_similarity(filled, spec.epsilon)
            row.total_seconds = time.perf_counter() - tick
            row.iters = 0
            norms = np.sqrt((filled * filled).sum(axis=1))
            rank_factor = filled / np.maximum(norms, spec.epsilon)[:, None]
        else:
            cfg = SolverConfig(
                kind=spec.solver.kind,
                r=spec.r,
                lam=spec.lam,
                gamma=spec.gamma,
                iters=spec.iters,
                seed=init_seed,
                tau=spec.solver.tau,
                grad_tol=spec.solver.grad_tol,
                trace_stride=spec.trace_stride,
            )
            tick = time.perf_counter()
            outcome = solve(s0, cfg)
            row.total_seconds = time.perf_counter() - tick
            s_hat = outcome.estimate
            rank_factor = outcome.factor
            row.iters = outcome.trace.iterations
            if outcome.trace.iterations > 0:
                row.seconds_per_iter = (
                    float(outcome.trace.wall_nanos_per_iter.sum())
                    / outcome.trace.iterations
                    / 1e9
                )
        try:
            row.rmse = metrics_mod.rmse(s_hat, s_star, s0)
        except DegenerateBaseline:
            row.error = "DegenerateBaseline"
        row.recall = metrics_mod.recall_at_topk(
            s_hat, s_star, spec.n_search, spec.n_query, spec.k_fraction, spec.global_topk
        )
        row.ndcg = metrics_mod.ndcg_at_topk(
            s_hat, s_star, spec.n_search, spec.n_query, spec.k_fraction, spec.global_topk
        )
        if rank_factor is not None:
            row.rank_hat = gram_effective_rank(rank_factor)
        else:
            row.rank_hat = metrics_mod.rank_report(s_hat)
    except Exception as exc:  # record the failure, keep the grid alive
        row.error = f"{type(exc).__name__}: {exc}"
        log.info("cell failed: %s", row.error)
    return row


def _grid_cells(cfg: ExperimentConfig, global_topk: bool, trace_stride: int) -> list[CellSpec]:
    cells = []
    for rho, solver, r, lam, gamma, seed in itertools.product(
        cfg.rho_list, cfg.solver_list, cfg.r_list, cfg.lambda_list, cfg.gamma_list, cfg.seeds
    ):
        cells.append(
            CellSpec(
                dataset=cfg.dataset,
                n_search=cfg.n_search,
                n_query=cfg.n_query,
                rho=rho,
                solver=solver,
                r=r,
                lam=lam,
                gamma=gamma,
                iters=cfg.iters,
                seed=seed,
                k_fraction=cfg.k_fraction,
                epsilon=cfg.epsilon,
                global_topk=global_topk,
                trace_stride=trace_stride,
            )
        )
    return cells


def run_grid(
    cfg: ExperimentConfig,
    jobs: int = 1,
    global_topk: bool = False,
    trace_stride: int = 1,
) -> list[ResultRow]:
    """Execute every grid cell; failed cells carry their error in-row.

    Rows come back in deterministic grid order (rho, solver, r, lambda,
    gamma, seed) regardless of ``jobs``.
    """
    cells = _grid_cells(cfg, global_topk, trace_stride)
    log.info("running %d grid cells (jobs=%d)", len(cells), jobs)
    if jobs <= 1:
        rows = []
        for i, cell in enumerate(cells):
            rows.append(run_cell(cell))
            log.info("cell %d/%d done (%s)", i + 1, len(cells), cell.solver.kind.value)
        return rows
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells))


# ---------------------------------------------------------------------------
# results emission and reporting


def _cell_text(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return _fmt_float(v)
    return str(v)


def emit_results(rows: list[ResultRow], path, fmt: str = "csv") -> None:
    """Write rows as CSV (fixed column order) or a JSON array.

    Floats carry 17 significant digits so values round-trip exactly.
    """
    if not rows:
        raise ValueError("no rows to emit")
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(RESULT_COLUMNS) + "\n")
            for row in rows:
                rec = row.as_record()
                fh.write(",".join(_csv_escape(_cell_text(rec[c])) for c in RESULT_COLUMNS))
                fh.write("\n")
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("[\n")
            for i, row in enumerate(rows):
                rec = row.as_record()
                parts = []
                for c in RESULT_COLUMNS:
                    parts.append(f"{json.dumps(c)}: {_json_value(rec[c])}")
                fh.write("  {" + ", ".join(parts) + "}")
                fh.write(",\n" if i + 1 < len(rows) else "\n")
            fh.write("]\n")
    else:
        raise ValueError(f"unknown results format: {fmt!r}")


def _csv_escape(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _json_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, int):
        return str(v)
    return json.dumps(v)


_INT_FIELDS = {"n_search", "n_query", "d", "rank", "iters", "seed", "rank_hat"}
_FLOAT_FIELDS = {"rho", "lambda", "gamma", "rmse", "recall", "ndcg", "total_seconds", "seconds_per_iter"}


def read_results(path) -> list[dict]:
    """Read back an emitted results file (CSV or JSON) into typed records."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        return json.loads(text)
    import csv as _csv

    records = []
    reader = _csv.DictReader(text.splitlines())
    for raw in reader:
        rec = {}
        for key, val in raw.items():
            if val == "" or val is None:
                rec[key] = None if key != "error" else ""
            elif key in _INT_FIELDS:
                rec[key] = int(val)
            elif key in _FLOAT_FIELDS:
                rec[key] = float(val)
            else:
                rec[key] = val
        records.append(rec)
    return records


def summarize(records: list[dict], group_by: list[str]) -> str:
    """Tabulate per-group metric means (over non-failed rows) plus a
    per-solver timing summary."""
    unknown = [c for c in group_by if c not in RESULT_COLUMNS]
    if unknown:
        raise ValueError(f"unknown group-by columns: {unknown}")
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        key = tuple(str(rec.get(col)) for col in group_by)
        groups.setdefault(key, []).append(rec)

    def mean_of(rows, field_name):
        vals = [r[field_name] for r in rows if r.get(field_name) is not None]
        return sum(vals) / len(vals) if vals else None

    lines = []
    header = [*group_by, "runs", "errors", "rmse", "recall", "ndcg", "rank_hat"]
    lines.append("  ".join(f"{h:>12}" for h in header))
    for key in sorted(groups):
        rows = groups[key]
        errors = sum(1 for r in rows if r.get("error"))
        cells = [*key, str(len(rows)), str(errors)]
        for field_name in ("rmse", "recall", "ndcg", "rank_hat"):
            m = mean_of(rows, field_name)
            cells.append("-" if m is None else f"{m:.4f}")
        lines.append("  ".join(f"{c:>12}" for c in cells))

    lines.append("")
    lines.append("timing by solver")
    lines.append("  ".join(f"{h:>16}" for h in ("solver", "runs", "total_seconds", "seconds_per_iter")))
    by_solver: dict[str, list[dict]] = {}
    for rec in records:
        by_solver.setdefault(str(rec.get("solver")), []).append(rec)
    for solver in sorted(by_solver):
        rows = by_solver[solver]
        tot = mean_of(rows, "total_seconds")
        spi = mean_of(rows, "seconds_per_iter")
        lines.append(
            "  ".join(
                f"{c:>16}"
                for c in (
                    solver,
                    str(len(rows)),
                    "-" if tot is None else f"{tot:.6f}",
                    "-" if spi is None else f"{spi:.3e}",
                )
            )
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# CLI


def _configure_logging():
    level_name = os.environ.get("SMC_LOG", "error").lower()
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        level_name, logging.ERROR
    )
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers.clear()
    log.addHandler(handler)
    log.setLevel(level)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simcomplete",
        description="Similarity-matrix completion benchmark runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic sample matrix as CSV")
    gen.add_argument("--n-search", type=int, required=True)
    gen.add_argument("--n-query", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--latent-rank", type=int, required=True)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="execute an experiment grid from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--trace-stride", type=int, default=1)
    run.add_argument("--global-topk", action="store_true")

    rep = sub.add_parser("report", help="summarize a results file")
    rep.add_argument("results")
    rep.add_argument("--group-by", default="solver,rho")
    return parser


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging()
    try:
        if args.command == "gen-data":
            x = generate_synthetic(
                args.n_search, args.n_query, args.d, args.latent_rank, args.noise, args.seed
            )
            save_matrix_csv(args.out, x)
            log.info("wrote %s (%d x %d)", args.out, x.shape[0], x.shape[1])
        elif args.command == "run":
            cfg = config_from_json(args.config)
            rows = run_grid(
                cfg,
                jobs=args.jobs,
                global_topk=args.global_topk,
                trace_stride=args.trace_stride,
            )
            emit_results(rows, args.out, args.format)
            log.info("wrote %d rows to %s", len(rows), args.out)
        elif args.command == "report":
            records = read_results(args.results)
            group_by = [c.strip() for c in args.group_by.split(",") if c.strip()]
            print(summarize(records, group_by))
    except Exception as exc:
        print(f"simcomplete: error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
