"""Run every benchmark config through the CLI and collect the reports.

    python3 scripts/run_benchmarks.py [--paths N] [--workers W] [--out DIR]
"""

import argparse
import time
from pathlib import Path

from rbmhit.cli import main

HERE = Path(__file__).resolve().parent
JOBS = [
    ("estimate", "strip"),
    ("estimate", "annulus3"),
    ("estimate", "disk_arc"),
    ("sweep", "halfplane_sweep"),
    ("fit", "halfplane_fit"),
    ("localize", "halfball_localize"),
    ("oracle", "grid_strip"),
]


def run_all(paths: int | None, workers: int | None, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    for mode, name in JOBS:
        argv = [mode, "--config", str(HERE / "configs" / f"{name}.json"),
                "--out", str(out / f"{name}.{mode}.json")]
        if paths is not None:
            argv += ["--paths", str(paths)]
        if workers is not None:
            argv += ["--workers", str(workers)]
        t = time.perf_counter()
        code = main(argv)
        print(f"{mode:9s} {name:18s} exit {code}  {time.perf_counter() - t:6.1f}s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, help="override n_paths in every config")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    raise SystemExit(run_all(args.paths, args.workers, Path(args.out)))
