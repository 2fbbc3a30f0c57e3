"""PSNR against the motion threshold R on the mixed benchmark scene.

    python3 scripts/r_sweep.py --seeds 0 1 2 --out runs/r_sweep
"""

import argparse
from pathlib import Path

from neuroshutter.harness import BENCHMARK_R, ExperimentSpec, Method, run_experiment
from neuroshutter.metrics import write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", default="mixed", help="benchmark scene name")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--R", type=int, default=BENCHMARK_R, help="centre of the {R/4 .. 4R} grid")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/r_sweep")
    args = ap.parse_args()

    grid = [args.R // 4, args.R // 2, args.R, 2 * args.R, 4 * args.R]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    for seed in args.seeds:
        spec = ExperimentSpec(
            scene=f"benchmark:{args.scene}@{seed}", seed=seed, sweep=("R", grid),
            methods=(Method.NSC_G, Method.NSC_P), workers=args.workers,
        )
        rows = run_experiment(spec)
        for r in rows:
            table.append({"seed": seed, "method": r["method"], "R": r["R"], "psnr_db": r["psnr_db"],
                          "ssim": r["ssim"], "mean_exposure_us": r["mean_exposure_us"]})
        for method in ("NSC_g", "NSC_p"):
            curve = [r["psnr_db"] for r in rows if r["method"] == method]
            best = grid[max(range(len(curve)), key=curve.__getitem__)]
            print(f"seed {seed} {method:6s} " + " ".join(f"{v:6.2f}" for v in curve) + f"  peak R={best}")
    write_report(table, out / "r_sweep.csv")
    print(f"wrote {out / 'r_sweep.csv'}")


if __name__ == "__main__":
    main()
