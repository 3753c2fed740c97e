"""Command-line front end: seeded, reproducible runs with CSV and SVG reports.

Every command is deterministic given its config (seed included) and its
user-visible output is independent of the worker count.  Exit code 0 means
the run completed and every requested check passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import acceptance, report
from .classify import defect_estimate, strictness_classify
from .compensator import CountingEnsemble, fp_cumulative_hazard, intensity, nelson_aalen
from .config import RunConfig, load_config
from .errors import SlmError
from .market import family_project
from .projection import _project_chunk, project_ensemble
from .rng import RngSpec
from .stochastics import resolve_coupling, sample_first_passage_exact


def _chunked_simulation(cfg: RunConfig):
    """Driver/state blocks with per-stream randomness, ordered by stream id."""
    method = resolve_coupling(cfg.model, cfg.estimator.coupling)
    eval_steps = cfg.estimator.eval_steps or cfg.estimator.bucket_steps
    eval_idx = np.arange(0, cfg.grid.steps + 1, eval_steps)
    block = 1024
    payloads = [
        (
            cfg.model,
            cfg.grid,
            cfg.levels.values,
            cfg.seed,
            lo,
            min(lo + block, cfg.n_paths),
            method,
            cfg.bridge_correction,
            cfg.levels.two_sided,
            eval_idx,
        )
        for lo in range(0, cfg.n_paths, block)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_project_chunk, payloads))
    else:
        results = [_project_chunk(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    return eval_idx, results


def cmd_simulate(cfg: RunConfig) -> int:
    eval_idx, results = _chunked_simulation(cfg)
    times = cfg.grid.times[eval_idx]
    path_rows = []
    obs_rows = []
    sid = 0
    for lo, x_eval, up_times, down_times, floored in results:
        for i in range(x_eval.shape[0]):
            for t, v in zip(times, x_eval[i]):
                path_rows.append((sid, float(t), float(v)))
            events = [
                (float(t), float(level), "up")
                for level, t in zip(cfg.levels.values, up_times[i])
                if not np.isnan(t)
            ]
            if down_times is not None:
                events += [
                    (float(t), float(-level), "down")
                    for level, t in zip(cfg.levels.values, down_times[i])
                    if not np.isnan(t)
                ]
            for t, level, direction in sorted(events):
                obs_rows.append((sid, level, t, direction))
            sid += 1
    report.write_csv(os.path.join(cfg.out_dir, "paths.csv"), ("stream_id", "time", "value"), path_rows)
    report.write_csv(
        os.path.join(cfg.out_dir, "observations.csv"),
        ("stream_id", "level", "time", "direction"),
        obs_rows,
    )
    print(f"simulate: {cfg.n_paths} paths, {len(obs_rows)} passage events -> {cfg.out_dir}")
    return 0


def cmd_project(cfg: RunConfig) -> int:
    ens = project_ensemble(
        cfg.model,
        cfg.levels,
        cfg.grid,
        cfg.n_paths,
        RngSpec(cfg.seed, 0),
        bucket_steps=cfg.estimator.bucket_steps,
        eval_steps=cfg.estimator.eval_steps,
        min_occupancy=cfg.estimator.min_occupancy,
        bridge_correction=cfg.bridge_correction,
        method=cfg.estimator.coupling,
        workers=cfg.workers,
        strictness_override=True,
    )
    proj_rows = []
    for t in cfg.eval_times:
        j = ens.eval_index(t)
        for i in range(ens.n_paths):
            flag = int(ens.low_occupancy[i, j] or ens.floored[i])
            proj_rows.append((i, float(ens.t_eval[j]), float(ens.m[i, j]), flag))
    report.write_csv(
        os.path.join(cfg.out_dir, "projection.csv"),
        ("stream_id", "time", "M_value", "flag"),
        proj_rows,
    )
    jump_rows = ens.jump_table(cfg.estimator.noise_threshold)
    report.write_csv(
        os.path.join(cfg.out_dir, "jumps.csv"),
        ("stream_id", "T_beta", "alpha", "beta", "delta_M"),
        [(r[0], r[1], r[2], r[3], r[4]) for r in jump_rows],
    )
    ok = ens.included
    mean_x = np.array([ens.x[ok, j].astype(float).mean() for j in range(ens.t_eval.size)])
    mean_m = np.array([np.nanmean(ens.m[ok, j].astype(float)) for j in range(ens.t_eval.size)])
    se_x = np.array(
        [ens.x[ok, j].astype(float).std(ddof=1) / np.sqrt(ok.sum()) for j in range(ens.t_eval.size)]
    )
    report.projection_figure(
        os.path.join(cfg.out_dir, "summary.svg"),
        ens.t_eval,
        mean_x,
        se_x,
        mean_m,
        se_x,
        jump_times=[r[1] for r in jump_rows[:400]],
        title="state mean vs projected mean",
    )
    summary = {"eval_times": {}, "n_paths": ens.n_paths, "floored": int(ens.floored.sum()),
               "jumps_above_threshold": len(jump_rows)}
    for t in cfg.eval_times:
        mx, mm, se = ens.means_at(t)
        summary["eval_times"][str(t)] = {"mean_x": mx, "mean_m": mm, "pooled_se": se}
    with open(os.path.join(cfg.out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"project: wrote projection.csv, jumps.csv ({len(jump_rows)} jumps), summary.svg")
    for t in cfg.eval_times:
        s = summary["eval_times"][str(t)]
        print(f"  t={t}: mean X={s['mean_x']:.5f} mean M={s['mean_m']:.5f} pooled SE={s['pooled_se']:.2e}")
    return 0


def cmd_intensity(cfg: RunConfig) -> int:
    spec = cfg.intensity
    samples = sample_first_passage_exact(spec.gap, RngSpec(cfg.seed, 0), n=spec.n_samples)
    grid = np.linspace(spec.window[0], spec.window[1], spec.grid_points)
    curve = nelson_aalen(CountingEnsemble.from_events(samples, entry=0.0), grid)
    factor = 2.0 if spec.negative_control else 1.0
    target = factor * fp_cumulative_hazard(spec.gap, grid)
    sup = float(np.nanmax(np.abs(curve.values - target)))
    passed = sup < spec.sup_norm_tol
    report.write_csv(
        os.path.join(cfg.out_dir, "hazard_empirical.csv"),
        ("time", "value", "ci_low", "ci_high"),
        zip(curve.times, curve.values, curve.ci_low, curve.ci_high),
    )
    lam = intensity(spec.gap, spec.t_alpha, grid + spec.t_alpha)
    report.write_csv(
        os.path.join(cfg.out_dir, "hazard_analytic.csv"),
        ("time", "value", "ci_low", "ci_high"),
        zip(grid, target, target, target),
    )
    report.write_csv(
        os.path.join(cfg.out_dir, "intensity_analytic.csv"),
        ("time", "value", "ci_low", "ci_high"),
        zip(grid, lam, lam, lam),
    )
    report.intensity_figure(
        os.path.join(cfg.out_dir, "intensity.svg"), grid, target, curve,
        title=f"gap={spec.gap} cumulative hazard",
    )
    label = "negative control (doubled intensity)" if spec.negative_control else "intensity check"
    print(f"intensity: sup-norm {sup:.4f} vs tol {spec.sup_norm_tol} -> {'pass' if passed else 'FAIL'} [{label}]")
    return 0 if passed else 1


def cmd_classify(cfg: RunConfig) -> int:
    verdict = strictness_classify(cfg.model)
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "verdict.json"), "w") as f:
        f.write(verdict.to_json() + "\n")
    print(verdict.to_json())
    return 0


def cmd_market(cfg: RunConfig) -> int:
    proj = family_project(
        cfg.model,
        cfg.grid,
        cfg.n_paths,
        cfg.market.renewal,
        RngSpec(cfg.seed, 0),
        h=cfg.market.h_weight,
        eval_steps=cfg.estimator.eval_steps or 8,
        bucket_steps=cfg.estimator.bucket_steps,
        y_bin=cfg.market.y_bin,
        min_occupancy=cfg.market.min_occupancy,
        method=cfg.estimator.coupling,
        workers=cfg.workers,
    )
    obs_rows = []
    for i in range(min(proj.y_eval.shape[0], 2000)):
        for t, y in zip(proj.t_eval, proj.y_eval[i]):
            obs_rows.append((i, float(t), float(y)))
    report.write_csv(
        os.path.join(cfg.out_dir, "market_observation.csv"), ("stream_id", "time", "y"), obs_rows
    )
    proj_rows = []
    for t in cfg.eval_times:
        j = proj.eval_index(t)
        for i in range(proj.x.shape[0]):
            flag = int(proj.low_occupancy[i, j] or proj.floored[i])
            proj_rows.append((i, float(proj.t_eval[j]), float(proj.m[i, j]), flag))
    report.write_csv(
        os.path.join(cfg.out_dir, "projection.csv"),
        ("stream_id", "time", "M_value", "flag"),
        proj_rows,
    )
    jump_rows = [
        (j.path, j.time, j.delta, j.delta_from_freeze, j.renewal_index if j.renewal_index is not None else -1)
        for j in proj.jumps
        if abs(j.delta) > cfg.market.noise_threshold
    ]
    report.write_csv(
        os.path.join(cfg.out_dir, "market_jumps.csv"),
        ("stream_id", "time", "delta_M", "delta_from_freeze", "renewal_index"),
        jump_rows,
    )
    ok = proj.included
    mean_x = np.array([proj.x[ok, j].astype(float).mean() for j in range(proj.t_eval.size)])
    se_x = np.array(
        [proj.x[ok, j].astype(float).std(ddof=1) / np.sqrt(ok.sum()) for j in range(proj.t_eval.size)]
    )
    mean_m = np.array([np.nanmean(proj.m[ok, j].astype(float)) for j in range(proj.t_eval.size)])
    report.market_figure(
        os.path.join(cfg.out_dir, "summary.svg"),
        proj.t_eval, mean_x, se_x, mean_m, se_x,
        jump_times=[r[1] for r in jump_rows[:400]],
        title="masked-observation projection",
    )
    frac, near, total = proj.jump_mass_localization(cfg.market.noise_threshold)
    t_last = cfg.eval_times[-1]
    j = proj.eval_index(t_last)
    rows_ok = proj.included
    est = defect_estimate(
        proj.m[rows_ok, j].astype(float), cfg.model.x0, t=t_last,
        se_values=proj.x[rows_ok, j].astype(float),
    )
    print(
        f"market: jump mass at blackout ends {frac:.4f}; defect(M_{t_last})={est.defect:.4f} "
        f"(3SE={3*est.stderr:.4f}, significant={est.significant}); {len(jump_rows)} jumps"
    )
    return 0


def cmd_selftest(out_dir: str | None) -> int:
    results = acceptance.run_all()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "selftest.txt"), "w") as f:
            for r in results:
                f.write(r.line + "\n")
    failed = [r for r in results if not r.passed]
    print(f"selftest: {len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slmjump",
        description="Strict local martingales with jumps via first-passage filtration shrinkage",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("simulate", True),
        ("project", True),
        ("intensity", True),
        ("classify", True),
        ("market", True),
        ("selftest", False),
    ):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None, help="worker process count")
        p.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)

    try:
        if args.command == "selftest":
            return cmd_selftest(args.out)
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg.seed = int(args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise SlmError("--workers must be >= 1")
            cfg.workers = int(args.workers)
        if args.out is not None:
            cfg.out_dir = args.out
        os.makedirs(cfg.out_dir, exist_ok=True)
        handler = {
            "simulate": cmd_simulate,
            "project": cmd_project,
            "intensity": cmd_intensity,
            "classify": cmd_classify,
            "market": cmd_market,
        }[args.command]
        return handler(cfg)
    except SlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
