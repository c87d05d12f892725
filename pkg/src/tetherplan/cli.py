"""Command line entry point: ``tetherplan <subcommand> [--scene FILE] [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 planning failure, 1 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import runner
from .grasps import generate_grasps, save_grasp_db
from .scene import ConfigError, load_scene

EXIT_OK, EXIT_CONFIG, EXIT_PLANNING = 0, 1, 2


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--scene", help="scene YAML merged over the shipped defaults")
    p.add_argument("--seed", type=int, help="master RNG seed (default: scene seed)")
    p.add_argument("--out", default=out_default, help="output directory (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tetherplan", description="Cable-aware dual-arm tool manipulation planner.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("analyze-workspace", help="reach grid, balancer ranking, manipulability sphere")
    _common(p, "out/workspace")
    p.add_argument("--spacing", type=float, help="grid spacing in mm (default from scene)")

    p = sub.add_parser("plan", help="plan a single task from the start pose through the given goals")
    _common(p, "out/plan")
    p.add_argument("--goals", required=True, help="comma separated goal ids, e.g. 1,6,3")
    p.add_argument("--mode", choices=runner.MODES, default="omms+cmms")

    p = sub.add_parser("benchmark", help="run one of the shipped benchmarks")
    _common(p, "out/benchmarks")
    p.add_argument("--id", type=int, required=True, dest="bench_id")
    p.add_argument("--mode", choices=runner.MODES, default="omms+cmms")

    p = sub.add_parser("obstacle-trials", help="random-box trials in balancer-less mode")
    _common(p, "out/trials")
    p.add_argument("--n", type=int, help="number of trials (default from scene)")

    p = sub.add_parser("gen-grasps", help="write the grasp database for the scene objects")
    _common(p, "out")
    return ap


def _print(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scene = load_scene(args.scene)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = scene.seed if args.seed is None else args.seed
    out = Path(args.out)

    try:
        if args.cmd == "benchmark":
            rep = runner.run_benchmark(scene, args.bench_id, args.mode, seed, out)
            _print(rep.summary)
            return EXIT_OK if rep.success else EXIT_PLANNING
        if args.cmd == "plan":
            ids = [int(g) for g in args.goals.split(",") if g.strip()]
            missing = [g for g in ids if g not in scene.goals]
            if missing:
                raise ConfigError(f"unknown goal ids {missing}; available: {sorted(scene.goals)}")
            rep = runner.run_task(scene, ids, args.mode, seed, f"plan_{args.mode.replace('+', '_')}")
            rep.write(out)
            _print(rep.summary)
            return EXIT_OK if rep.success else EXIT_PLANNING
        if args.cmd == "obstacle-trials":
            res = runner.run_obstacle_trials(scene, args.n, seed, out)
            for row in res["table"]:
                print(f"{row['planner']:<12} success {row['success']:>2}  collisions {row['collisions']:>2}  "
                      f"failures {row['planning_failures']:>2}  mean_acc {row['mean_acc']}")
            return EXIT_OK
        if args.cmd == "analyze-workspace":
            res = runner.analyze_workspace(scene, args.spacing, seed, out)
            print(f"grid {res['dims']}  omega {res['n_omega']}  top column {res['columns'][0] if res['columns'] else None}")
            _print(res["sphere"])
            return EXIT_OK
        if args.cmd == "gen-grasps":
            db = {
                scene.tool.name: generate_grasps(scene.tool, scene.gripper, int(scene.config["tool"].get("grasp_positions", 3))),
                scene.slider.name: generate_grasps(scene.slider, scene.gripper, int(scene.config["slider"].get("grasp_positions", 1))),
            }
            out.mkdir(parents=True, exist_ok=True)
            path = out / "grasps.txt"
            save_grasp_db(path, db)
            print(f"wrote {sum(len(v) for v in db.values())} grasps to {path}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
