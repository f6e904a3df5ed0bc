"""Experiment orchestration: org sampling, environment construction, run and
sweep commands, CSV/JSONL persistence, checkpoints, and chart emission.

All artifacts of one invocation live under a single run directory. The run
id is a digest of (resolved config, seed, modes) so that identical
invocations produce byte-identical metrics.csv files; the directory name is
suffixed if it already exists so reruns never overwrite.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
import traceback
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, dump_config
from .env import AlphaSchedule, ContributionEnv
from .game import OrgProfile
from .marl import MetricsRow, TrainResult, canonical_mode, train
from .nets import save_checkpoint
from .precision import (AnalyticPrecision, ExpSaturation, LogSaturation,
                        MicroFLPrecision, SyntheticFLTask)
from .rng import substream
from .svg import Series, emit_svg

DEFAULT_ALPHA_SWEEP = (1.0, 2.0, 4.0, 8.0, 16.0)


def _truncated_normal(rng, mean, std, lower, count):
    """Draws from N(mean, std) conditioned on x >= lower (resample)."""
    out = rng.normal(mean, std, count)
    for _ in range(100):
        bad = out < lower
        if not bad.any():
            return out
        out[bad] = rng.normal(mean, std, int(bad.sum()))
    return np.maximum(out, lower)


def sample_orgs(cfg: ExperimentConfig, seed: int) -> list[OrgProfile]:
    """Org economics are drawn once per experiment; the per-slot comm
    overhead stream is the environment's job."""
    rng = substream(seed, "org-params")
    op = cfg.org_params
    n = cfg.num_orgs
    profits = _truncated_normal(rng, op.profit_mean, op.profit_std, 1e-9, n)
    energies = _truncated_normal(rng, op.energy_mean, op.energy_std, 0.0, n)
    sizes = np.maximum(np.round(
        _truncated_normal(rng, op.dataset_mean, op.dataset_std, 1.0, n)), 1.0)
    return [OrgProfile(profit_rate=float(p), unit_energy_cost=float(v),
                       dataset_size=float(s), comm_overhead=0.0)
            for p, v, s in zip(profits, energies, sizes)]


def build_precision_source(cfg: ExperimentConfig, orgs):
    pr = cfg.precision
    sizes = [o.dataset_size for o in orgs]
    if pr.kind == "exp_saturation":
        return AnalyticPrecision(ExpSaturation(pr.p_lo, pr.p_hi, pr.beta), sizes)
    if pr.kind == "log_saturation":
        return AnalyticPrecision(LogSaturation(pr.p_lo, pr.p_hi, pr.beta), sizes)
    task = SyntheticFLTask(feature_dim=pr.feature_dim,
                           per_org_sizes=tuple(int(s) for s in sizes),
                           class_separation=pr.class_separation,
                           test_set_size=pr.test_set_size, seed=cfg.seed)
    return MicroFLPrecision(task, local_epochs=pr.local_epochs,
                            lr=pr.learning_rate)


def build_env(cfg: ExperimentConfig, orgs, seed: int) -> ContributionEnv:
    schedule = AlphaSchedule(alpha0=cfg.alpha.alpha0,
                             alpha_max=cfg.alpha.resolved_max(),
                             mode=cfg.alpha.mode)
    return ContributionEnv(orgs=orgs, schedule=schedule,
                           precision_source=build_precision_source(cfg, orgs),
                           horizon=cfg.slots_per_episode, window=cfg.window,
                           comm_mean=cfg.org_params.comm_mean,
                           comm_std=cfg.org_params.comm_std,
                           master_seed=seed)


# ---------------------------------------------------------------------------
# Persistence


def _csv_header(num_orgs: int) -> list[str]:
    head = ["run_id", "mode", "seed", "batch", "global_step",
            "overall_payoff", "precision", "alpha"]
    head += [f"payoff_mean_{i}" for i in range(num_orgs)]
    head += [f"contrib_mean_{i}" for i in range(num_orgs)]
    head += [f"entropy_{i}" for i in range(num_orgs)]
    return head


def emit_csv(rows: list[MetricsRow], path):
    """Write metrics rows; floats use repr so reloads round-trip exactly."""
    if not rows:
        raise ValueError("no rows to write")
    num_orgs = len(rows[0].payoff_mean)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_csv_header(num_orgs))
        for r in rows:
            record = [r.run_id, r.mode, r.seed, r.batch, r.global_step,
                      repr(r.overall_payoff), repr(r.precision), repr(r.alpha)]
            record += [repr(v) for v in r.payoff_mean]
            record += [repr(v) for v in r.contrib_mean]
            record += [repr(v) for v in r.entropy]
            writer.writerow(record)


class EventLog:
    """Append-only JSONL event stream: {ts, kind, payload} per line."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.write_text("", encoding="utf-8")

    def emit(self, kind: str, payload):
        record = {"ts": time.time(), "kind": kind, "payload": payload}
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def compute_run_id(cfg: ExperimentConfig, seed: int, modes) -> str:
    blob = json.dumps(dump_config(cfg), sort_keys=True)
    blob += f"|seed={seed}|modes={','.join(modes)}"
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _fresh_dir(base: Path, name: str) -> Path:
    candidate = base / name
    suffix = 1
    while candidate.exists():
        suffix += 1
        candidate = base / f"{name}-{suffix}"
    candidate.mkdir(parents=True)
    return candidate


def final_quartile_mean(rows: list[MetricsRow]) -> float:
    """Mean overall payoff over the last quarter of batches (at least one)."""
    tail = max(1, len(rows) // 4)
    return float(np.mean([r.overall_payoff for r in rows[-tail:]]))


# ---------------------------------------------------------------------------
# Commands


def cmd_run(cfg: ExperimentConfig, out_dir, modes=("MPGD",),
            seed: int | None = None) -> Path:
    """Train each requested mode on a shared org draw and persist artifacts:
    metrics.csv, events.jsonl, checkpoints, payoffs.svg."""
    seed = cfg.seed if seed is None else int(seed)
    modes = [canonical_mode(m) for m in modes]
    run_id = compute_run_id(cfg, seed, modes)
    run_dir = _fresh_dir(Path(out_dir), run_id)
    events = EventLog(run_dir / "events.jsonl")
    events.emit("config", {"config": dump_config(cfg), "seed": seed,
                           "modes": modes, "run_id": run_id})
    orgs = sample_orgs(cfg, seed)
    all_rows: list[MetricsRow] = []
    results: dict[str, TrainResult] = {}
    try:
        for mode in modes:
            env = build_env(cfg, orgs, seed)
            result = train(env, cfg.trainer, mode, seed, run_id=run_id)
            results[mode] = result
            all_rows.extend(result.rows)
            if result.actors is not None:
                for i, (actor, critic) in enumerate(
                        zip(result.actors, result.critics)):
                    save_checkpoint(run_dir / f"{mode}_agent{i}_actor.ckpt",
                                    actor.net)
                    save_checkpoint(run_dir / f"{mode}_agent{i}_critic.ckpt",
                                    critic.net)
            events.emit("summary", {
                "mode": mode,
                "final_quartile_overall_payoff": final_quartile_mean(result.rows),
                "batches": len(result.rows)})
    except Exception as exc:
        events.emit("abort", {"cause": repr(exc),
                              "traceback": traceback.format_exc()})
        raise
    emit_csv(all_rows, run_dir / "metrics.csv")
    series = [Series(label=mode,
                     points=[(r.batch, r.overall_payoff)
                             for r in results[mode].rows])
              for mode in modes]
    emit_svg(series, run_dir / "payoffs.svg", title="Overall payoff",
             x_label="batch", y_label="sum of org payoffs")
    return run_dir


def cmd_sweep_alpha(cfg: ExperimentConfig, out_dir,
                    alpha0_list=DEFAULT_ALPHA_SWEEP, seeds=(0, 1, 2),
                    mode: str = "MPGD") -> Path:
    """Run cmd_run per (alpha0, seed) and aggregate converged payoffs."""
    alpha0_list = [float(a) for a in alpha0_list]
    if len(alpha0_list) < 2:
        raise ValueError("need at least 2 alpha0 values to sweep")
    base = Path(out_dir)
    sweep_dir = _fresh_dir(base, "sweep-" + compute_run_id(cfg, cfg.seed,
                                                           [mode]))
    cells = []
    for alpha0 in alpha0_list:
        for seed in seeds:
            sub = dataclasses.replace(
                cfg, alpha=dataclasses.replace(cfg.alpha, alpha0=alpha0,
                                               alpha_max=None))
            run_dir = cmd_run(sub, sweep_dir, modes=(mode,), seed=seed)
            rows = _read_rows(run_dir / "metrics.csv")
            converged = float(np.mean(
                [r["overall_payoff"] for r in rows[-max(1, len(rows) // 4):]]))
            cells.append({"alpha0": alpha0, "seed": int(seed),
                          "converged_overall_payoff": converged})
    with open(sweep_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha0", "seed", "converged_overall_payoff"])
        for c in cells:
            writer.writerow([repr(c["alpha0"]), c["seed"],
                             repr(c["converged_overall_payoff"])])
    summary = summarize_sweep(cells)
    (sweep_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    means = [(a, summary["mean_by_alpha0"][repr(a)]) for a in alpha0_list]
    bands = [(a, summary["min_by_alpha0"][repr(a)],
              summary["max_by_alpha0"][repr(a)]) for a in alpha0_list]
    emit_svg([Series(label=f"{mode} mean (range)", points=means, bands=bands)],
             sweep_dir / "sweep.svg", title="Converged payoff vs alpha0",
             x_label="alpha0", y_label="overall payoff")
    return sweep_dir


def summarize_sweep(cells) -> dict:
    """Mean/min/max per alpha0, per-seed argmax, and a monotonicity flag."""
    alphas = sorted({c["alpha0"] for c in cells})
    seeds = sorted({c["seed"] for c in cells})
    value = {(c["alpha0"], c["seed"]): c["converged_overall_payoff"]
             for c in cells}
    mean_by = {repr(a): float(np.mean([value[(a, s)] for s in seeds]))
               for a in alphas}
    min_by = {repr(a): float(min(value[(a, s)] for s in seeds)) for a in alphas}
    max_by = {repr(a): float(max(value[(a, s)] for s in seeds)) for a in alphas}
    per_seed_argmax = {str(s): float(max(alphas, key=lambda a: value[(a, s)]))
                       for s in seeds}
    means = [mean_by[repr(a)] for a in alphas]
    nondecreasing = all(b >= a for a, b in zip(means, means[1:]))
    nonincreasing = all(b <= a for a, b in zip(means, means[1:]))
    monotone = nondecreasing or nonincreasing
    best = alphas[int(np.argmax(means))]
    return {"alpha0_values": alphas, "seeds": seeds, "mean_by_alpha0": mean_by,
            "min_by_alpha0": min_by, "max_by_alpha0": max_by,
            "per_seed_argmax": per_seed_argmax,
            "mean_curve_monotone": bool(monotone),
            "mean_argmax_alpha0": float(best),
            "interior_maximizer": bool(best not in (alphas[0], alphas[-1]))}


def _read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{k: (float(v) if k not in ("run_id", "mode") else v)
                 for k, v in row.items()} for row in reader]
