"""Method comparison table on the benchmark scenes at a fixed R."""

import argparse
import math

from neuroshutter.harness import ALL_METHODS, ExperimentSpec, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", nargs="+", default=["mixed", "local", "global"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()

    names = [m.value for m in ALL_METHODS]
    print(f"{'scene':8s} {'seed':>4s} " + " ".join(f"{n:>10s}" for n in names) + "   p-g gap")
    for scene in args.scenes:
        for seed in args.seeds:
            rows = run_experiment(ExperimentSpec(scene=f"benchmark:{scene}@{seed}", seed=seed))
            psnr = {r["method"]: r["psnr_db"] for r in rows}
            cells = " ".join(f"{psnr[n]:10.2f}" if math.isfinite(psnr[n]) else f"{'inf':>10s}" for n in names)
            print(f"{scene:8s} {seed:4d} {cells}   {psnr['NSC_p'] - psnr['NSC_g']:+.2f}")


if __name__ == "__main__":
    main()
