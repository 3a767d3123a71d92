"""Batch experiments over strategies, query budgets and objective weights.

Every run writes three files into ``output_dir``:

``designs.csv``
    one row per design: ``strategy, K, w, seed, design, aar, rmsd,
    reward:<name>..., queries_used, error``
``summary.csv``
    one row per (strategy, K, w) cell with ``n``, ``n_failed`` and the mean
    and population std of every numeric design column
``run.json``
    the resolved config, its SHA-256 hash, schedule parameters, objective
    normalizers and the package version

Floats are written with ``repr`` and the sidecar carries no timestamps, so an
identical config and seed reproduce the files byte for byte.

Run ``python -m lead.harness --help`` for the command line.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import functools
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .denoiser import OracleDenoiser, load_checkpoint, train_toy_denoiser
from .diffusion import CdrState
from .evaluators import (Component, ExternalEvaluator, ExternalEvaluatorHandle,
                         HydropathyEvaluator, QuadraticEvaluator, WeightedEvaluator,
                         WeightedObjective, calibrate_normalizers)
from .evaluators.external import ExternalEvaluatorError
from .guidance import SIGMA_POLICIES, STRATEGIES, GuidanceConfig
from .pipeline import DesignError, RunSpec, default_t_init, design_rng, sample_design, \
    sample_unconditional_batch
from .schedule import build_schedule
from .synthetic import SyntheticMixtureTask, make_context

BUILTIN_EVALUATORS = ("quadratic", "coord", "hydro", "tradeoff")
DEFAULT_K_SWEEP = (1, 2, 4, 8, 16, 32)
DEFAULT_WEIGHTS = (0.0, 0.25, 0.5, 0.75, 1.0)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything that determines a run; ``evaluator`` is a built-in name or
    ``external:<command line>``."""

    task: str = "synthetic_mixture"
    task_file: str | None = None
    strategies: list = field(default_factory=lambda: ["H"])
    K: int = 20
    K_sweep: list = field(default_factory=list)
    weight_sweep: list = field(default_factory=list)
    n_designs: int = 10
    seed: int = 0
    output_dir: str = "results"
    evaluator: str = "quadratic"
    T: int = 100
    T_init: int | None = None
    sigma: float | None = None
    sigma_policy: str = "beta_t"
    denoiser: str = "toy"
    train_seed: int = 0
    workers: int = 1
    calibration_samples: int = 200
    timeout: float = 30.0

    def __post_init__(self):
        self.strategies = list(self.strategies)
        self.K_sweep = [int(k) for k in self.K_sweep]
        self.weight_sweep = [float(w) for w in self.weight_sweep]
        if not self.strategies:
            raise ConfigError("strategies must be nonempty")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {list(STRATEGIES)}")
        if self.task not in ("synthetic_mixture", "custom"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task == "custom" and not self.task_file:
            raise ConfigError("task 'custom' needs task_file")
        if any(not 0.0 <= w <= 1.0 for w in self.weight_sweep):
            raise ConfigError("weights must lie in [0, 1]")
        if self.weight_sweep and self.evaluator != "tradeoff":
            raise ConfigError("a weight sweep needs the two-component 'tradeoff' evaluator")
        if any(k < 1 for k in self.K_sweep + [self.K]):
            raise ConfigError("K must be >= 1")
        if self.n_designs < 1:
            raise ConfigError("n_designs must be >= 1")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.T_init is not None and not 0 <= self.T_init <= self.T:
            raise ConfigError(f"T_init must lie in [0, {self.T}]")
        if self.sigma_policy not in SIGMA_POLICIES:
            raise ConfigError(f"sigma_policy must be one of {SIGMA_POLICIES}")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if not (self.evaluator in BUILTIN_EVALUATORS or self.evaluator.startswith("external:")):
            raise ConfigError(f"evaluator must be one of {BUILTIN_EVALUATORS} or 'external:CMD'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of everything except where the results go and how many workers."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


# -- building blocks --------------------------------------------------------

@functools.lru_cache(maxsize=4)
def reference_toy_denoiser(T: int = 100, seed: int = 0, n_train: int = 1500, epochs: int = 20):
    """The toy network fit to the default synthetic task (about 10 s)."""
    sched = build_schedule(T)
    task = SyntheticMixtureTask()
    ctx = make_context(m=task.m)
    rng = np.random.default_rng(seed)
    data = task.sample(n_train, rng)
    return train_toy_denoiser([(data[i], ctx) for i in range(n_train)], sched, epochs, rng)


def load_task(cfg: ExperimentConfig) -> SyntheticMixtureTask:
    if cfg.task == "custom":
        return SyntheticMixtureTask.from_dict(json.loads(Path(cfg.task_file).read_text()))
    return SyntheticMixtureTask()


def build_denoiser(cfg: ExperimentConfig, task: SyntheticMixtureTask, sched):
    if cfg.denoiser == "oracle":
        return OracleDenoiser(task, sched)
    if cfg.denoiser == "toy":
        if cfg.task != "synthetic_mixture":
            raise ConfigError("the built-in toy model is fit to the default task; "
                              "pass a checkpoint path for custom tasks")
        return reference_toy_denoiser(cfg.T, cfg.train_seed)
    den = load_checkpoint(cfg.denoiser)
    if den.sched.T != cfg.T:
        raise ConfigError(f"checkpoint was trained with T={den.sched.T}, config has T={cfg.T}")
    return den


def tradeoff_objective(task: SyntheticMixtureTask, w: float = 0.5) -> WeightedObjective:
    """Hydropathy against closeness to the hydrophobic mode.

    Component 1 rewards a hydrophilic loop; component 2 rewards matching
    ``task.mode(0)``, whose pattern is strongly hydrophobic, so the optima
    genuinely conflict.
    """
    return WeightedObjective([
        Component(HydropathyEvaluator(), w),
        Component(QuadraticEvaluator(task.mode(0), name="structure"), 1.0 - w),
    ])


def build_evaluator(cfg: ExperimentConfig, task, objective: WeightedObjective | None = None,
                    w: float | None = None):
    name = cfg.evaluator
    if name == "quadratic":
        return QuadraticEvaluator(task.mode(0))
    if name == "coord":
        return QuadraticEvaluator(task.mode(0), seq_weight=0.0, rot_weight=0.0, name="coord")
    if name == "hydro":
        return HydropathyEvaluator()
    if name == "tradeoff":
        obj = objective if objective is not None else tradeoff_objective(task)
        return WeightedEvaluator(obj if w is None else obj.with_weights([w, 1.0 - w]))
    return ExternalEvaluator(name[len("external:"):], timeout=cfg.timeout)


def calibrate(cfg: ExperimentConfig, task=None, den=None) -> WeightedObjective:
    """Fit tradeoff normalizers on unconditional designs from the same model."""
    task = task if task is not None else load_task(cfg)
    sched = build_schedule(cfg.T)
    den = den if den is not None else build_denoiser(cfg, task, sched)
    ctx = make_context(m=task.m)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**31 - 1]))
    batch = sample_unconditional_batch(den, ctx, sched, task.m, cfg.calibration_samples, rng)
    samples = [batch[i] for i in range(len(batch))]
    return calibrate_normalizers(tradeoff_objective(task), samples)


# -- execution --------------------------------------------------------------

@dataclass
class Cell:
    strategy: str
    K: int
    w: float | None


def _cells(cfg: ExperimentConfig) -> list[Cell]:
    ks = cfg.K_sweep or [cfg.K]
    ws = cfg.weight_sweep or [None]
    out = []
    for s in cfg.strategies:
        for k in ([0] if s == "none" else ks):
            for w in ws:
                out.append(Cell(s, k, w))
    return out


def _guidance(cfg: ExperimentConfig, cell: Cell) -> GuidanceConfig:
    t_init = cfg.T_init if cfg.T_init is not None else default_t_init(cell.strategy, cfg.T)
    if cell.strategy == "none":
        t_init = 0
    return GuidanceConfig(K=max(cell.K, 1), sigma=cfg.sigma, T_init=t_init,
                          strategy=cell.strategy, seed=cfg.seed, sigma_policy=cfg.sigma_policy)


def _run_one(job):
    spec, seed, index = job
    try:
        design, rep = sample_design(spec, design_rng(seed, index))
    except DesignError as exc:
        root = exc
        while root.__cause__ is not None:
            root = root.__cause__
        return None, f"{type(root).__name__}: {exc}"
    return rep, ""


def _run_cell(spec: RunSpec, seed: int, n: int, workers: int) -> list:
    jobs = [(spec, seed, i) for i in range(n)]
    if workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so rows stay in design-index order
        return list(pool.map(_run_one, jobs))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def aggregate(rows: list[dict], value_cols: list[str]) -> list[dict]:
    """Group design rows by (strategy, K, w); mean and population std per column."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["strategy"], r["K"], r["w"]), []).append(r)
    out = []
    for (s, k, w), rs in groups.items():
        agg = {"strategy": s, "K": k, "w": w, "n": len(rs),
               "n_failed": sum(1 for r in rs if r["error"])}
        ok = [r for r in rs if not r["error"]]
        for c in value_cols:
            vals = np.array([r[c] for r in ok if r.get(c) is not None], dtype=float)
            agg[f"mean_{c}"] = float(vals.mean()) if vals.size else None
            agg[f"std_{c}"] = float(vals.std()) if vals.size else None
        out.append(agg)
    return out


def run_experiment(cfg: ExperimentConfig, log=None) -> dict:
    """Run every cell of ``cfg`` and write the result files.

    Returns ``{"designs": rows, "summary": rows, "metadata": dict,
    "paths": {...}}``. Designs that raise are recorded with an ``error``
    string and the run continues.
    """
    task = load_task(cfg)
    sched = build_schedule(cfg.T)
    den = build_denoiser(cfg, task, sched)
    ctx = make_context(m=task.m)
    reference = task.mode(0)
    objective = calibrate(cfg, task, den) if cfg.evaluator == "tradeoff" else None

    designs: list[dict] = []
    reward_names: list[str] = []
    for cell in _cells(cfg):
        f = build_evaluator(cfg, task, objective, cell.w)
        spec = RunSpec(sched, _guidance(cfg, cell), f, den, ctx, task.m, cfg.n_designs,
                       reference, cfg.denoiser)
        t0 = time.perf_counter()
        try:
            results = _run_cell(spec, cfg.seed, cfg.n_designs, cfg.workers)
        finally:
            if isinstance(f, ExternalEvaluator):
                f.close()
        if log:
            log(f"{cell.strategy:>10} K={cell.K:<3} w={_fmt(cell.w) or '-':<5} "
                f"{cfg.n_designs} designs in {time.perf_counter() - t0:.1f}s")
        for i, (rep, err) in enumerate(results):
            row = {"strategy": cell.strategy, "K": cell.K, "w": cell.w, "seed": cfg.seed,
                   "design": i, "error": err}
            if rep is not None:
                row.update(aar=rep.aar, rmsd=rep.rmsd, queries_used=rep.queries_used)
                for name, v in rep.rewards.items():
                    row[f"reward:{name}"] = v
                    if f"reward:{name}" not in reward_names:
                        reward_names.append(f"reward:{name}")
            designs.append(row)

    value_cols = ["aar", "rmsd"] + reward_names + ["queries_used"]
    summary = aggregate(designs, value_cols)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = ["strategy", "K", "w", "seed", "design"] + value_cols + ["error"]
    _write_csv(out / "designs.csv", head, [[r.get(c) for c in head] for r in designs])
    shead = ["strategy", "K", "w", "n", "n_failed"] + \
        [f"{p}_{c}" for c in value_cols for p in ("mean", "std")]
    _write_csv(out / "summary.csv", shead, [[r.get(c) for c in shead] for r in summary])
    meta = {
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "schedule": sched.as_dict(),
        "normalizers": objective.normalizers() if objective is not None else {},
        "task": task.to_dict(),
        "version": __version__,
        "T_init": {c.strategy: _guidance(cfg, c).T_init for c in _cells(cfg)},
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {"designs": designs, "summary": summary, "metadata": meta,
            "paths": {"designs": out / "designs.csv", "summary": out / "summary.csv",
                      "metadata": out / "run.json"}}


# -- plot data --------------------------------------------------------------

def emit_tradeoff_data(results: dict, path=None) -> list[tuple]:
    """Rows ``(w, mean1, mean2, std1, std2)`` sorted by ``w``.

    The components are the two raw (unnormalized) tradeoff rewards.
    """
    rows = [r for r in results["summary"] if r["w"] is not None]
    if not rows:
        raise ValueError("results contain no weight sweep")
    comps = list(results["metadata"]["normalizers"])
    if len(comps) != 2:
        raise ValueError("trade-off data needs a two-component objective")
    c1, c2 = (f"reward:{c}" for c in comps)
    if f"mean_{c1}" not in rows[0] or f"mean_{c2}" not in rows[0]:
        raise ValueError(f"results lack component columns {c1}, {c2}")
    out = sorted((r["w"], r[f"mean_{c1}"], r[f"mean_{c2}"], r[f"std_{c1}"], r[f"std_{c2}"])
                 for r in rows)
    if path is not None:
        _write_csv(Path(path), ["w", f"mean_{comps[0]}", f"mean_{comps[1]}",
                                f"std_{comps[0]}", f"std_{comps[1]}"], [list(r) for r in out])
    return out


def emit_query_curve(results: dict, path=None) -> list[tuple]:
    """Rows ``(strategy, K, mean reward, std, total queries per design)``.

    Strategies keep config order and ``K`` follows the configured sweep.
    """
    cfg = results["metadata"]["config"]
    if not cfg["K_sweep"]:
        raise ValueError("results contain no K sweep")
    name = _primary_reward(results)
    out = []
    for r in results["summary"]:
        if r["strategy"] == "none":
            continue
        out.append((r["strategy"], r["K"], r[f"mean_{name}"], r[f"std_{name}"],
                    r["mean_queries_used"]))
    if path is not None:
        _write_csv(Path(path), ["strategy", "K", "mean_reward", "std_reward", "total_queries"],
                   [list(r) for r in out])
    return out


def _primary_reward(results: dict) -> str:
    cols = [k[5:] for k in results["summary"][0] if k.startswith("mean_reward:")]
    if not cols:
        raise ValueError("results carry no reward column")
    return cols[0]


# -- protocol check ---------------------------------------------------------

def eval_protocol_test(command, n: int = 1000, timeout: float = 10.0, m: int = 6,
                       seed: int = 0) -> dict:
    """Send ``n`` random designs to an external evaluator and tally failures."""
    rng = np.random.default_rng(seed)
    errors: dict[str, int] = {}
    scores = []
    t0 = time.perf_counter()
    with ExternalEvaluatorHandle(command, timeout) as h:
        for _ in range(n):
            a = CdrState(rng.integers(0, 20, m), rng.standard_normal((m, 3)),
                         np.broadcast_to(np.eye(3), (m, 3, 3)))
            try:
                scores.append(h.request(a))
            except ExternalEvaluatorError as exc:
                errors[type(exc).__name__] = errors.get(type(exc).__name__, 0) + 1
    return {"requests": n, "ok": len(scores), "errors": errors,
            "seconds": time.perf_counter() - t0}


# -- command line -----------------------------------------------------------

ECHO_COMMAND = f"{sys.executable} -m lead.evaluators.echo --mode zero"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file; its keys override flags")
    common.add_argument("--strategies", nargs="+")
    common.add_argument("--K", type=int)
    common.add_argument("--T", type=int)
    common.add_argument("--T-init", dest="T_init", type=int)
    common.add_argument("--sigma", type=float)
    common.add_argument("--sigma-policy", dest="sigma_policy", choices=SIGMA_POLICIES)
    common.add_argument("--n-designs", dest="n_designs", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--evaluator", help="quadratic, coord, hydro, tradeoff or external:CMD")
    common.add_argument("--denoiser", help="toy, oracle or a checkpoint path")
    common.add_argument("--task", choices=["synthetic_mixture", "custom"])
    common.add_argument("--task-file", dest="task_file")
    common.add_argument("--workers", type=int)
    common.add_argument("--timeout", type=float)

    ap = argparse.ArgumentParser(prog="python -m lead.harness",
                                 description="Latent black-box guidance experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run each strategy at one K")
    p = sub.add_parser("sweep-k", parents=[common], help="query-budget curve")
    p.add_argument("--K-sweep", dest="K_sweep", type=int, nargs="+")
    p = sub.add_parser("sweep-w", parents=[common], help="two-objective trade-off sweep")
    p.add_argument("--weights", dest="weight_sweep", type=float, nargs="+")
    p = sub.add_parser("calibrate", parents=[common], help="fit tradeoff normalizers")
    p.add_argument("--samples", dest="calibration_samples", type=int)
    p = sub.add_parser("eval-protocol-test", help="exercise an external evaluator")
    p.add_argument("--command", dest="eval_command", default=ECHO_COMMAND)
    p.add_argument("--requests", type=int, default=1000)
    p.add_argument("--timeout", type=float, default=10.0)
    return ap


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {k: v for k, v in vars(args).items() if k in names and v is not None}
    if args.command == "sweep-k":
        values.setdefault("K_sweep", list(DEFAULT_K_SWEEP))
    if args.command == "sweep-w":
        values.setdefault("weight_sweep", list(DEFAULT_WEIGHTS))
        values.setdefault("evaluator", "tradeoff")
    if getattr(args, "config", None):
        extra = json.loads(Path(args.config).read_text())
        unknown = set(extra) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        values.update(extra)
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    say = lambda msg: print(msg, file=sys.stderr)
    try:
        if args.command == "eval-protocol-test":
            rep = eval_protocol_test(args.eval_command, args.requests, args.timeout)
            print(json.dumps(rep, sort_keys=True))
            return 0 if rep["ok"] == rep["requests"] else 1
        cfg = config_from_args(args)
        if args.command == "calibrate":
            obj = calibrate(cfg)
            out = Path(cfg.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "normalizers.json").write_text(
                json.dumps(obj.normalizers(), indent=2, sort_keys=True) + "\n")
            print(json.dumps(obj.normalizers(), sort_keys=True))
            return 0
        res = run_experiment(cfg, log=say)
        out = Path(cfg.output_dir)
        if args.command == "sweep-k":
            emit_query_curve(res, out / "query_curve.csv")
        if args.command == "sweep-w":
            emit_tradeoff_data(res, out / "tradeoff.csv")
        say(f"wrote results to {out}")
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        say(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
