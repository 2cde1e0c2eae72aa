"""Command-line harness: single runs, paired-trial campaigns, timing and data generation.

Usage::

    replikit run|paired|bench|gen --config CONFIG.json [--seed S] [--out DIR]
                                  [--trials N] [--budget-scale F]

Exit codes: 0 success, 1 usage or configuration error, 2 algorithmic
failure (OPT indistinguishable from zero, budget exceeded), 3 file IO.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .core import NormSpec, ReplikitError, SharedRandomness, canonical_json
from .kcenters import KCentersParams, r_kcenters
from .oracle import OracleSpec, assign
from .pipelines import (STAGE_ORDER, PipelineConfig, paired_trial, run_pipeline,
                        wilson_interval, _seeds)
from .sources import Sampler, source_from_dict, write_points_csv
from .svg import scatter_svg

logger = logging.getLogger("replikit")

EXIT_OK, EXIT_USAGE, EXIT_ALGO, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("run", "paired", "bench", "gen")
OBJECTIVES = ("kmeans", "kmedians", "kcenters")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to regenerate an output.

    ``algorithm`` holds ``objective`` (``kmeans``, ``kmedians`` or
    ``kcenters``), ``preset`` (``desk`` or ``nominal``) and the fields of
    :class:`~replikit.pipelines.PipelineConfig`, or for k-centers the grid
    side ``c``, coverage ``n`` and ``q``, and ``budget_scale``.
    """

    command: str = "run"
    source: dict = field(default_factory=lambda: {"kind": "two_moons"})
    algorithm: dict = field(default_factory=lambda: {"objective": "kmeans"})
    seed: int = 0
    data_seed: int = 0
    trials: int = 10
    budget_scale: float = None
    out: str = "out"
    n_plot: int = 2000
    n_gen: int = 10000
    bench_scales: list = field(default_factory=lambda: [0.25, 0.5, 1.0])

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, obj) -> "RunConfig":
        if not isinstance(obj, dict):
            raise UsageError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise UsageError(f"unknown config keys {unknown}; allowed: {sorted(known)}")
        cfg = cls(**obj)
        if cfg.command not in COMMANDS:
            raise UsageError(f"command must be one of {COMMANDS}")
        if cfg.algorithm.get("objective", "kmeans") not in OBJECTIVES:
            raise UsageError(f"algorithm.objective must be one of {OBJECTIVES}")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(obj)


def pipeline_config(run: RunConfig) -> PipelineConfig:
    alg = dict(run.algorithm)
    objective = alg.pop("objective", "kmeans")
    preset = alg.pop("preset", "desk")
    if objective == "kcenters":
        raise UsageError("k-centers has no pipeline config")
    alg["p"] = 2 if objective == "kmeans" else 1
    if run.budget_scale is not None:
        alg["budget_scale"] = run.budget_scale
    try:
        if preset == "desk":
            return PipelineConfig.desk(**alg)
        if preset == "nominal":
            return PipelineConfig.from_dict(alg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"algorithm: {exc}") from None
    raise UsageError("algorithm.preset must be 'desk' or 'nominal'")


def kcenters_params(run: RunConfig, d: int) -> KCentersParams:
    alg = dict(run.algorithm)
    alg.pop("objective")
    alg.pop("preset", None)
    if run.budget_scale is not None:
        alg["budget_scale"] = run.budget_scale
    alg.setdefault("c", 1 / 16)
    alg.setdefault("k", 3)
    alg.setdefault("n", alg["k"])
    alg.setdefault("q", 1.0)
    alg.setdefault("rho", 0.2)
    alg.setdefault("delta", 0.05)
    try:
        return KCentersParams(d=d, **alg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"algorithm: {exc}") from None


def _source(run: RunConfig):
    try:
        return source_from_dict(run.source)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"source: {exc}") from None


def _solve(run: RunConfig, source, seed: int, data_seed: int):
    """``(artifact dict, centers, label function)`` of one execution."""
    if run.algorithm.get("objective") == "kcenters":
        params = kcenters_params(run, source.d)
        rng, data_rng = _seeds(seed, data_seed)
        info = {}
        C = r_kcenters(source, params, OracleSpec("greedy_kcenters", beta=2.0), rng, data_rng, info)
        spec = NormSpec(params.family, 1, source.d)
        art = {"centers": C, "params": params.to_dict(), "active": info}
        return art, C, lambda X: assign(X, C, spec)[0]
    cfg = pipeline_config(run)
    res = run_pipeline(source, cfg, seed, data_seed)
    if res.function is not None and not res.function.jl.identity:
        labeler = res.function.classify
    else:
        spec = NormSpec(cfg.norm, cfg.p, source.d)
        labeler = lambda X: assign(X, res.centers, spec)[0]  # noqa: E731
    return res.to_dict(), res.centers, labeler


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_run(run: RunConfig) -> dict:
    """One execution: result JSON, centers CSV and a scatter SVG."""
    source = _source(run)
    out = Path(run.out)
    art, C, labeler = _solve(run, source, run.seed, run.data_seed)
    record = {"run_config": run.to_dict(), "result": art}
    _write(out / "result.json", canonical_json(record) + "\n")
    write_points_csv(out / "centers.csv", C, comment=" run_config=" + run.to_json())
    X = Sampler(source, SharedRandomness(run.seed).child("plot")).draw(run.n_plot)
    title = f"{run.algorithm.get('objective', 'kmeans')} seed={run.seed} k={len(C)}"
    _write(out / "scatter.svg", scatter_svg(X, labeler(X), C, title, metadata=run.to_json()))
    print(f"wrote {out / 'result.json'}, {out / 'centers.csv'}, {out / 'scatter.svg'}")
    return record


def _paired_kcenters(run, source, seed, data_seeds):
    import time
    t0 = time.perf_counter()
    a = _solve(run, source, seed, data_seeds[0])[1]
    b = _solve(run, source, seed, data_seeds[1])[1]
    same = canonical_json(a) == canonical_json(b)
    return same, "" if same else "centers", time.perf_counter() - t0


def cmd_paired(run: RunConfig) -> dict:
    """``trials`` paired executions sharing internal randomness."""
    if run.trials < 2:
        raise UsageError("paired needs trials >= 2")
    source = _source(run)
    kc = run.algorithm.get("objective") == "kcenters"
    cfg = None if kc else pipeline_config(run)
    rows = []
    for t in range(run.trials):
        seed = run.seed + t
        ds = (2 * t, 2 * t + 1)
        if kc:
            match, div, secs = _paired_kcenters(run, source, seed, ds)
        else:
            o = paired_trial(source, cfg, seed, ds)
            match, div, secs = o.match, o.divergence, o.seconds
        rows.append({"trial": t, "seed": seed, "data_seeds": f"{ds[0]};{ds[1]}",
                     "match": int(match), "divergence": div, "seconds": round(secs, 3)})
    n_match = sum(r["match"] for r in rows)
    lo, hi = wilson_interval(n_match, run.trials)
    stages = ("centers",) if kc else STAGE_ORDER + ("function",)
    secs = [r["seconds"] for r in rows]
    summary = {"trials": run.trials, "matches": n_match, "match_rate": n_match / run.trials,
               "interval95": [lo, hi],
               "first_divergence": {s: sum(r["divergence"] == s for r in rows) for s in stages},
               "seconds_mean": statistics.fmean(secs), "seconds_max": max(secs),
               "run_config": run.to_dict()}
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "paired.csv", "w", newline="") as fh:
        fh.write("#run_config=" + run.to_json() + "\n")
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    _write(out / "paired_summary.json", canonical_json(summary) + "\n")
    print(f"match rate {n_match}/{run.trials} = {n_match / run.trials:.3f} "
          f"(95% interval {lo:.3f}..{hi:.3f})")
    for s, c in summary["first_divergence"].items():
        if c:
            print(f"  first divergence at {s}: {c}")
    print(f"  seconds per pair: mean {summary['seconds_mean']:.2f}, max {summary['seconds_max']:.2f}")
    return summary


def cmd_bench(run: RunConfig) -> list:
    """Per-stage wall-clock time at each multiple of the budget scale."""
    source = _source(run)
    if run.algorithm.get("objective") == "kcenters":
        raise UsageError("bench covers the k-means/k-medians pipelines")
    base = pipeline_config(run)
    rows = []
    for mult in run.bench_scales:
        cfg = replace(base, budget_scale=base.budget_scale * mult)
        res = run_pipeline(source, cfg, run.seed, run.data_seed, evaluate_cost=False)
        n = res.coreset.provenance["samples"] if res.coreset is not None else 0
        for stage, secs in res.timings.items():
            rows.append({"stage": stage, "budget_scale": cfg.budget_scale,
                         "seconds": round(secs, 4), "coreset_samples": n})
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        fh.write("#run_config=" + run.to_json() + "\n")
        w = csv.DictWriter(fh, fieldnames=["stage", "budget_scale", "seconds", "coreset_samples"])
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['stage']:>8} scale={r['budget_scale']:.3g} {r['seconds']:.3f}s")
    return rows


def cmd_gen(run: RunConfig) -> Path:
    """Write ``n_gen`` samples of the source to ``data.csv``."""
    source = _source(run)
    X = Sampler(source, SharedRandomness(run.seed).child("gen")).draw(run.n_gen)
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    write_points_csv(out / "data.csv", X, comment=" run_config=" + run.to_json())
    print(f"wrote {len(X)} rows to {out / 'data.csv'}")
    return out / "data.csv"


HANDLERS = {"run": cmd_run, "paired": cmd_paired, "bench": cmd_bench, "gen": cmd_gen}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="replikit", description="Replicable clustering experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--trials", type=int, help="number of paired trials")
    ap.add_argument("--budget-scale", type=float, help="multiplier on nominal sample sizes")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = RunConfig.load(args.config)
        over = {"command": args.command}
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise UsageError("--seed must be an unsigned 64-bit integer")
            over["seed"] = args.seed
        if args.out is not None:
            over["out"] = args.out
        if args.trials is not None:
            over["trials"] = args.trials
        if args.budget_scale is not None:
            if not args.budget_scale > 0:
                raise UsageError("--budget-scale must be positive")
            over["budget_scale"] = args.budget_scale
        run = replace(run, **over)
        HANDLERS[run.command](run)
    except UsageError as exc:
        print(f"replikit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReplikitError as exc:
        print(f"replikit: algorithm failed: {exc}", file=sys.stderr)
        return EXIT_ALGO
    except OSError as exc:
        print(f"replikit: IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
