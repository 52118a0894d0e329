"""Command-line entry point.

Every stage command takes a point cloud file (or ``--scene`` for a built-in
synthetic scene), runs the pipeline up to that stage and writes its exports
into ``--out``. Exit codes: 0 success, 2 invalid input or configuration,
1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .io import load_cloud
from .pipeline import MODES, bench, format_table, run_ablation, run_pipeline
from .scenes import SCENE_KINDS, synth_scene

log = logging.getLogger("skelcover")

STAGE_OF = {
    "skeletonize": "skeleton",
    "decompose": "decomposition",
    "viewpoints": "viewpoints",
    "plan": "planning",
    "trajectory": "trajectory",
    "run": "trajectory",
}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with pipeline settings")
    common.add_argument("--seed", type=_u64, help="random seed (unsigned 64-bit)")
    common.add_argument("--workers", type=_positive, help="worker pool size")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    source = argparse.ArgumentParser(add_help=False)
    grp = source.add_mutually_exclusive_group(required=True)
    grp.add_argument("cloud", nargs="?", type=Path, help="point cloud (.ply, .pcd, .xyz)")
    grp.add_argument("--scene", choices=SCENE_KINDS, help="use a synthetic scene instead of a file")
    source.add_argument("--format", default="auto", choices=["auto", "ply", "pcd", "xyz"])

    p = argparse.ArgumentParser(prog="skelcover", description="Skeleton-guided coverage path planning.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "skeletonize": "extract the curve skeleton",
        "decompose": "split the scene into per-branch subspaces",
        "viewpoints": "generate the viewpoint set",
        "plan": "plan the coverage path",
        "trajectory": "plan and time a flyable trajectory",
        "run": "full pipeline with report",
    }
    for name, h in helps.items():
        sp = sub.add_parser(name, parents=[common, source], help=h)
        if name in ("plan", "trajectory", "run"):
            sp.add_argument("--mode", choices=MODES, default="full")
    ab = sub.add_parser("ablate", parents=[common, source], help="compare full, NR and GO planning")
    ab.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    bn = sub.add_parser("bench", parents=[common], help="benchmark over synthetic scenes")
    bn.add_argument("--scenes", nargs="+", choices=SCENE_KINDS, default=["cylinder", "y_tube", "tower"])
    bn.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    bn.add_argument("--seeds", nargs="+", type=_u64, default=[0])
    bn.add_argument("--trajectory", action="store_true", help="also time trajectories")
    return p


def _cloud(args, seed: int):
    if args.scene:
        return synth_scene(args.scene, seed=seed)[0]
    return load_cloud(args.cloud, args.format)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, workers=args.workers)
        if args.command == "bench":
            args.out.mkdir(parents=True, exist_ok=True)
            rows = bench(cfg, args.scenes, args.modes, args.seeds, args.out / "bench.csv", args.trajectory)
            sys.stdout.write(format_table(rows))
            return 0
        cloud = _cloud(args, cfg.seed)
        if args.command == "ablate":
            rows = run_ablation(cfg, cloud, args.modes)
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "ablation.json").write_text(json.dumps(rows, indent=2))
            sys.stdout.write(format_table(rows))
            return 0
        stage = STAGE_OF[args.command]
        if args.command == "plan":
            cfg = cfg.replace(trajectory=False)
        art, report = run_pipeline(cfg, cloud, out_dir=args.out, mode=getattr(args, "mode", "full"),
                                   until=stage)
        if report is not None:
            sys.stdout.write(report.to_text())
        else:
            sys.stdout.write(f"wrote {stage} outputs to {args.out}\n")
        if art.feasibility is not None and not art.feasibility.passed:
            log.error("trajectory check failed: %s", ", ".join(art.feasibility.violations))
            return 1
        return 0
    except (ValueError, FileNotFoundError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    except (RuntimeError, OSError) as e:
        # stage failures already wrote their partial artifacts
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
