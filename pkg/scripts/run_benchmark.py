"""Benchmark every synthetic scene under each planning mode and summarise.

    python scripts/run_benchmark.py --seeds 0 1 2 --out results/
"""
import argparse
import statistics
from collections import defaultdict
from pathlib import Path

from skelcover.config import load_config
from skelcover.pipeline import MODES, bench, format_table
from skelcover.scenes import SCENE_KINDS

METRICS = ("viewpoints", "coverage_rate_percent", "path_length_m", "path_cost_s", "comp_time_ms")


def summarise(rows: list[dict]) -> list[dict]:
    groups = defaultdict(list)
    for r in rows:
        groups[r["scene"], r["mode"]].append(r)
    out = []
    for (scene, mode), rs in groups.items():
        row = {"scene": scene, "mode": mode, "runs": len(rs)}
        row.update({m: statistics.fmean(float(r[m]) for r in rs) for m in METRICS})
        out.append(row)
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", nargs="+", default=list(SCENE_KINDS), choices=SCENE_KINDS)
    ap.add_argument("--modes", nargs="+", default=list(MODES), choices=MODES)
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--trajectory", action="store_true", help="also generate trajectories")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config)
    rows = bench(cfg, args.scenes, args.modes, args.seeds, args.out / "bench.csv", args.trajectory)
    table = format_table(summarise(rows))
    (args.out / "bench_summary.txt").write_text(table)
    print(table, end="")


if __name__ == "__main__":
    main()
