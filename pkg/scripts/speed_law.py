"""Mean NSC exposure against pan speed, and its insensitivity to illumination."""

import argparse

from neuroshutter.events import simulate_events
from neuroshutter.harness import benchmark_scene, benchmark_shutter, mean_exposure
from neuroshutter.shutter import plan_exposures, run_controller


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--base-scale", type=float, default=0.25, help="velocity scale of the slowest pan")
    ap.add_argument("--R", type=int, default=20_000)
    ap.add_argument("--tmax-us", type=int, default=64_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = benchmark_shutter(R=args.R, T_max=args.tmax_us)
    first = None
    print("speed_px_s  mean_exposure_us  ratio")
    for k in (1, 2, 4, 8):
        scene = benchmark_scene("global", args.seed, velocity_scale=args.base_scale * k, illumination=0.4)
        events = simulate_events(scene)
        m = mean_exposure(plan_exposures(events, cfg, scene.duration))
        first = first or m
        print(f"{scene.params.velocity[0]:10.0f}  {m:16.0f}  {m / first:5.3f}")
        if k == 1:
            bright = run_controller(scene.with_illumination(0.8), None, events, cfg)
            print(f"{'':10s}  same events, 2x illumination: {mean_exposure(bright):.0f} us")


if __name__ == "__main__":
    main()
