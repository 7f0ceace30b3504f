"""Command-line driver: simulate, train, evaluate, experiment, report.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, NumericalError, TrainingAborted
from .estimator import MeanReversionTrader
from .eval import EvalReport, convergence_steps, kde, t_test, write_kde_csv
from .ppo import read_training_log, write_training_log
from .process_sim import simulate, write_path_csv

__all__ = ["main", "run_simulate", "run_train", "run_evaluate", "run_experiment", "read_report"]

logger = logging.getLogger("revertrl")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SUMMARY_COLUMNS = (
    "process", "model", "penalty", "penalty_weight", "mean_sharpe", "std_sharpe", "n_paths",
    "n_excluded", "convergence_env_steps", "t_statistic", "degrees_of_freedom", "p_value_one_sided",
)

# Full-scale results of the original 10,000-path study, shown by `report` for context
REFERENCE = {
    "ou": {"Q-learning": (2.07, None, 1_000_000), "A": (2.10, 0.375, 7_000), "B": (2.78, 0.329, 4_000)},
    "arma": {"A": (2.46, 0.479, 4_000), "B": (3.22, 0.268, 10_000)},
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _header(cfg: ExperimentConfig, **extra) -> str:
    items = {"config_hash": cfg.hash(), "seed": cfg.seed, **extra}
    return " ".join(f"{k}={v}" for k, v in items.items())


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(dest: Path, payload: dict) -> None:
    dest.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _prepare_out(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


# -- simulate ------------------------------------------------------------------


def run_simulate(cfg: ExperimentConfig, count: int, out: Path, horizon: int | None = None,
                 seed_base: int | None = None) -> Path:
    """Write ``count`` seeded price paths plus ``manifest.json``; returns the manifest path."""
    if count < 0:
        raise ConfigError("--count must be >= 0")
    out = _prepare_out(out)
    horizon = horizon or cfg.env.episode_length
    base = cfg.eval.seed_base if seed_base is None else seed_base
    width = max(4, len(str(max(count - 1, 0))))
    entries = []
    for k in range(count):
        seed = base + k
        path = simulate(cfg.process, horizon, seed, mode=cfg.sim_mode)
        name = f"path_{k:0{width}d}.csv"
        write_path_csv(path, out / name, header=_header(cfg, path_seed=seed))
        entries.append({"file": name, "seed": seed})
    manifest = {
        "command": "simulate",
        "config_hash": cfg.hash(),
        "process": cfg.to_dict()["process"],
        "horizon": horizon,
        "count": count,
        "paths": entries,
    }
    dest = out / "manifest.json"
    _write_json(dest, manifest)
    return dest


# -- train / evaluate ------------------------------------------------------------


def _trader(cfg: ExperimentConfig, model: str, n_jobs: int) -> MeanReversionTrader:
    env = cfg.env_for(model)
    return MeanReversionTrader(process=cfg.process, env_config=env, train_config=cfg.train,
                               penalty=env.penalty, penalty_weight=env.penalty_weight,
                               seed=cfg.seed, n_jobs=n_jobs, mode=cfg.mode)


def run_train(cfg: ExperimentConfig, model: str, out: Path, n_jobs: int = 1) -> Path:
    """Train one arm; writes ``model.npz`` and ``training_log.csv`` into ``out``."""
    out = _prepare_out(out)
    trader = _trader(cfg, model, n_jobs)
    logger.info("training model %s (penalty weight %g)", model, trader.penalty_weight)
    trader.fit()
    trader.save(out / "model.npz")
    write_training_log(trader.training_log_, out / "training_log.csv", header=_header(cfg, model=model))
    return out / "model.npz"


def run_evaluate(cfg: ExperimentConfig, checkpoint: Path, out: Path, model: str = "A",
                 n_jobs: int = 1) -> EvalReport:
    """Evaluate a saved policy on held-out paths; writes ``report.csv`` and ``kde.csv``."""
    out = _prepare_out(out)
    trader = _trader(cfg, model, n_jobs).load(checkpoint)
    if cfg.eval.n_paths < 2:
        raise ConfigError("eval.n_paths must be >= 2 to report a Sharpe spread")
    report = trader.evaluate(cfg.eval.n_paths, seed_base=cfg.eval.seed_base, n_jobs=n_jobs)
    report.write_csv(out / "report.csv", header=_header(cfg, model=model))
    valid = report.valid_sharpe
    if valid.size >= 2 and np.ptp(valid) > 0:
        write_kde_csv(*kde(valid), out / "kde.csv", header=_header(cfg, model=model))
    return report


def read_report(src: Path) -> tuple[np.ndarray, np.ndarray]:
    """Seeds and per-path Sharpe ratios from a ``report.csv``."""
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    seeds = np.array([int(r["seed"]) for r in rows], dtype=np.uint64)
    return seeds, np.array([float(r["sharpe"]) for r in rows])


# -- experiment ------------------------------------------------------------------


def _stage_done(stages: Path, name: str, cfg_hash: str) -> bool:
    marker = stages / f"{name}.json"
    if not marker.exists():
        return False
    recorded = json.loads(marker.read_text()).get("config_hash")
    if recorded != cfg_hash:
        raise ConfigError(
            f"{marker} was produced by config {recorded}, not {cfg_hash}; use a fresh --out or --force"
        )
    return True


def _mark(stages: Path, name: str, cfg_hash: str, artifacts: list[Path]) -> None:
    _write_json(stages / f"{name}.json", {
        "stage": name,
        "config_hash": cfg_hash,
        "artifacts": {p.name: _sha256(p) for p in artifacts if p.exists()},
    })


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _summary_rows(cfg: ExperimentConfig, out: Path) -> list[dict]:
    rows, sharpes = [], {}
    for model in ("A", "B"):
        _, per_path = read_report(out / model / "report.csv")
        valid = per_path[np.isfinite(per_path)]
        sharpes[model] = valid
        log = read_training_log(out / model / "training_log.csv")
        window = min(10, len(log))
        env = cfg.env_for(model)
        rows.append({
            "process": cfg.process_type,
            "model": model,
            "penalty": env.penalty if env.penalty_active else "none",
            "penalty_weight": env.penalty_weight,
            "mean_sharpe": float(valid.mean()) if valid.size else float("nan"),
            "std_sharpe": float(valid.std(ddof=1)) if valid.size > 1 else float("nan"),
            "n_paths": int(per_path.size),
            "n_excluded": int(per_path.size - valid.size),
            "convergence_env_steps": convergence_steps(log, window=window) if log else None,
            "t_statistic": None, "degrees_of_freedom": None, "p_value_one_sided": None,
        })
    a, b = sharpes["A"], sharpes["B"]
    if a.size >= 2 and b.size >= 2 and (a.var() + b.var()) > 0:
        res = t_test(a, b)
        rows[1].update(t_statistic=res.t_statistic, degrees_of_freedom=res.degrees_of_freedom,
                       p_value_one_sided=res.p_value_greater)
    elif a.size and b.size and np.array_equal(a, b):
        rows[1].update(t_statistic=0.0, p_value_one_sided=0.5)
    return rows


def write_summary(rows: list[dict], dest: Path, header: str) -> None:
    with open(dest, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def run_experiment(cfg: ExperimentConfig, out: Path, n_jobs: int = 1, force: bool = False) -> Path:
    """Train and evaluate both arms, then write ``summary.csv``. Completed stages are reused.

    Returns the summary path. A failing stage raises :class:`StageError`;
    rerunning with the same configuration resumes after the last completed stage.
    """
    out = _prepare_out(out)
    stages = out / "stages"
    stages.mkdir(exist_ok=True)
    cfg_hash = cfg.hash()
    if force:
        for marker in stages.glob("*.json"):
            marker.unlink()
    cfg.write_ini(out / "config.ini")

    plan = []
    for model in ("A", "B"):
        arm = out / model
        plan.append((f"train_{model}", lambda m=model, d=arm: run_train(cfg, m, d, n_jobs),
                     [arm / "model.npz", arm / "training_log.csv"]))
        plan.append((f"evaluate_{model}",
                     lambda m=model, d=arm: run_evaluate(cfg, d / "model.npz", d, m, n_jobs),
                     [arm / "report.csv", arm / "kde.csv"]))
    for name, action, artifacts in plan:
        if _stage_done(stages, name, cfg_hash):
            logger.info("stage %s already complete", name)
            continue
        logger.info("running stage %s", name)
        try:
            action()
        except (NumericalError, TrainingAborted) as exc:
            raise StageError(name, exc) from exc
        _mark(stages, name, cfg_hash, artifacts)

    summary = out / "summary.csv"
    write_summary(_summary_rows(cfg, out), summary, _header(cfg))
    artifacts = sorted(p for p in out.rglob("*") if p.is_file() and p.parent != stages
                       and p.name != "manifest.json")
    _write_json(out / "manifest.json", {
        "command": "experiment",
        "config_hash": cfg_hash,
        "seed": cfg.seed,
        "artifacts": {str(p.relative_to(out)): _sha256(p) for p in artifacts},
    })
    return summary


# -- report ------------------------------------------------------------------------


def run_report(out: Path, stream=None) -> None:
    stream = stream or sys.stdout
    summary = out / "summary.csv"
    if not summary.exists():
        raise ConfigError(f"{summary} not found; run `experiment` first")
    with open(summary, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    print(f"{'model':<12}{'mean':>8}{'std':>8}{'paths':>7}{'conv. steps':>13}{'t (B-A)':>10}{'p':>10}", file=stream)
    for r in rows:
        print(f"{r['model']:<12}{float(r['mean_sharpe']):>8.3f}{float(r['std_sharpe']):>8.3f}"
              f"{r['n_paths']:>7}{r['convergence_env_steps']:>13}{r['t_statistic'][:8]:>10}"
              f"{r['p_value_one_sided'][:8]:>10}", file=stream)
    process = rows[0]["process"] if rows else "ou"
    print(f"\nfull-scale reference ({process}, 10,000 paths):", file=stream)
    for name, (mean, std, steps) in REFERENCE.get(process, {}).items():
        std_txt = f"{std:.3f}" if std is not None else "NA"
        print(f"{name:<12}{mean:>8.2f}{std_txt:>8}{'':>7}{steps:>13}", file=stream)


# -- entry point ---------------------------------------------------------------------


def _parse_set(items: list[str]) -> dict[str, str]:
    overrides = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides [io] out)")
    common.add_argument("--seed", type=int, help="experiment seed (overrides [train] seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--fast", action="store_true", help="desk-scale learning rate and budget")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="revertrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="write seeded price paths")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--horizon", type=int, help="steps per path (default: episode length)")
    p.add_argument("--seed-base", type=int, help="seed of the first path (default: [eval] seed_base)")
    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--model", choices=("A", "B"), default="A", help="A: no penalty, B: penalised")
    p = sub.add_parser("evaluate", parents=[common], help="evaluate a trained checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p = sub.add_parser("experiment", parents=[common], help="train and compare models A and B")
    p.add_argument("--force", action="store_true", help="discard completed stages")
    sub.add_parser("report", parents=[common], help="print the summary table of an experiment")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        overrides = _parse_set(args.set)
        if args.seed is not None:
            overrides["train.seed"] = str(args.seed)
        cfg = load_config(args.config, fast=args.fast, overrides=overrides)
        out = args.out or Path(cfg.out)
        if args.command == "simulate":
            run_simulate(cfg, args.count, out, args.horizon, args.seed_base)
        elif args.command == "train":
            run_train(cfg, args.model, out, args.jobs)
        elif args.command == "evaluate":
            if not args.checkpoint.exists():
                raise ConfigError(f"checkpoint {args.checkpoint} not found")
            run_evaluate(cfg, args.checkpoint, out, n_jobs=args.jobs)
        elif args.command == "experiment":
            run_experiment(cfg, out, args.jobs, force=args.force)
        elif args.command == "report":
            run_report(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"numerical failure: {exc} (completed stages are kept; rerun to resume)", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NumericalError, TrainingAborted) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
