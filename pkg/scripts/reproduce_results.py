#!/usr/bin/env python3
"""Reproduce the evaluation protocol at desk scale.

Runs three experiment families and leaves their CSVs under results/:

  results/comparison_stable/    proposed vs RR vs EDF, 25-35 Mbps, 5 seeds
  results/comparison_unstable/  same grid with exponential access-link jitter
  results/ablation_stable/      proposed vs no-order vs single-timescale variants
  results/ablation_unstable/
  results/baselines_no_drop/    RR/EDF without proactive dropping at 25 Mbps
                                (deadline-miss comparison; see README)

Total: 160 simulations, a few minutes single-threaded. Set VRSCHED_WORKERS
or pass --workers to parallelize.
"""

import argparse
import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from vrsched.cli import main as cli_main


def run(args: list[str]) -> None:
    code = cli_main(args)
    if code != 0:
        raise SystemExit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--seeds", default="1,2,3,4,5")
    parser.add_argument("--workers", type=int,
                        default=int(os.environ.get("VRSCHED_WORKERS", "1")))
    args = parser.parse_args()
    out = Path(args.out)
    t0 = time.perf_counter()

    for regime in ("stable", "unstable"):
        run([
            "sweep", "--preset", "comparison", "--seeds", args.seeds,
            "--workers", str(args.workers),
            "--override", f"regime={regime}",
            "--out", str(out / f"comparison_{regime}"),
        ])
        run([
            "sweep", "--preset", "ablation", "--bandwidths", "25",
            "--seeds", args.seeds, "--workers", str(args.workers),
            "--override", f"regime={regime}",
            "--out", str(out / f"ablation_{regime}"),
        ])

    # deadline-miss comparison: baselines as deployed schedulers that cannot
    # parse frame metadata, so expired frames are forwarded, not discarded
    run([
        "sweep", "--bandwidths", "25", "--policies", "rr,edf",
        "--seeds", args.seeds, "--workers", str(args.workers),
        "--override", "proactive_drop=false",
        "--out", str(out / "baselines_no_drop"),
    ])

    print(f"done in {time.perf_counter() - t0:.0f}s -> {out}/")


if __name__ == "__main__":
    main()
