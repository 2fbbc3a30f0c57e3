"""Event-driven shutter control and exposure integration.

The controller consumes fixed-count event slices in arrival order. Each
exposure opens with a fresh motion measure; it closes when a slice pushes
the measure above ``R`` or when the exposure timer reaches ``T_max``.
Threshold closures end ``latency_budget`` after the triggering slice
arrived; timer closures end exactly at ``t_start + T_max``. The next
exposure opens at the previous ``t_end``.

Frames are integrals of the noisy instant intensity. An instant frame of
``instant_us`` microseconds collects ``instant_scale * L`` with variance
``sigma_p * instant_scale * L + sigma_g**2``; an integration step of length
``h`` collects ``h / instant_us`` such instants.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .emm import DEFAULT_SCALES, Mode, MotionMeasureState
from .errors import ConfigError
from .events import DEFAULT_SLICE_COUNT, slice_stream
from .scene import DEFAULT_INSTANT_SCALE, draw_instant, time_key

DEFAULT_R = 20_000
DEFAULT_INSTANT_US = 250
DEFAULT_T_MAX = 64 * DEFAULT_INSTANT_US  # one full-scale exposure
DEFAULT_INTEGRATOR_DT = 250
DEFAULT_LATENCY = 1000


class Closure(str, Enum):
    THRESHOLD_HIT = "ThresholdHit"
    MAX_EXPOSURE = "MaxExposure"
    STREAM_END = "StreamEnd"


@dataclass(frozen=True)
class ShutterConfig:
    R: int = DEFAULT_R
    T_max: int = DEFAULT_T_MAX
    slice_count: int = DEFAULT_SLICE_COUNT
    mode: Mode = Mode.GEA
    integrator_dt: int = DEFAULT_INTEGRATOR_DT
    latency_budget: int = DEFAULT_LATENCY
    instant_us: int = DEFAULT_INSTANT_US
    instant_scale: float = DEFAULT_INSTANT_SCALE
    scales: tuple = DEFAULT_SCALES
    area_normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.R <= 0:
            raise ConfigError(f"R must be positive, got {self.R}")
        if self.T_max <= 0:
            raise ConfigError(f"T_max must be positive, got {self.T_max}")
        if self.slice_count < 1:
            raise ConfigError(f"slice_count must be >= 1, got {self.slice_count}")
        if self.integrator_dt <= 0:
            raise ConfigError(f"integrator_dt must be positive, got {self.integrator_dt}")
        if self.latency_budget < 0:
            raise ConfigError(f"latency_budget must be >= 0, got {self.latency_budget}")
        if self.instant_us <= 0 or self.instant_scale <= 0:
            raise ConfigError("instant_us and instant_scale must be positive")

    def gain(self, exposure):
        """Pixel value per unit radiance collected over ``exposure`` microseconds."""
        return (exposure / self.instant_us) * self.instant_scale


@dataclass(frozen=True)
class ExposurePlan:
    t_start: int
    t_end: int
    closure: Closure
    measure_at_close: int
    measure_before_close: int

    @property
    def exposure(self):
        return self.t_end - self.t_start


@dataclass(eq=False)
class CapturedFrame:
    pixels: np.ndarray = field(repr=False)
    t_start: float
    t_end: float
    closure: Closure = Closure.MAX_EXPOSURE
    measure_at_close: int = 0
    measure_before_close: int = 0

    @property
    def exposure(self):
        return self.t_end - self.t_start

    @property
    def midpoint(self):
        return 0.5 * (self.t_start + self.t_end)

    def replace_pixels(self, pixels):
        return CapturedFrame(
            pixels, self.t_start, self.t_end, self.closure, self.measure_at_close, self.measure_before_close
        )


def plan_exposures(events, cfg, t_stop, t_begin=0):
    """Run the shutter state machine over ``events`` and return frame boundaries."""
    slices = slice_stream(events, cfg.slice_count)
    arrivals = [s.arrival for s in slices]
    state = MotionMeasureState(events.width, events.height, cfg.mode, cfg.scales, cfg.area_normalized)
    plans = []
    i = 0
    t_s = t_begin
    while t_s < t_stop:
        state.reset()
        deadline = t_s + cfg.T_max
        # slices that completed before the shutter opened are not counted
        while i < len(slices) and arrivals[i] <= t_s:
            i += 1
        plan = None
        while i < len(slices):
            a = arrivals[i]
            if a > deadline or a > t_stop:
                break
            before = state.measure()
            m = state.ingest(slices[i])
            i += 1
            # threshold is tested first: a slice landing exactly on the deadline
            # with m > R is reported as a threshold hit
            if m > cfg.R:
                plan = ExposurePlan(t_s, min(a + cfg.latency_budget, t_stop), Closure.THRESHOLD_HIT, m, before)
                break
        if plan is None:
            m = state.measure()
            if deadline <= t_stop:
                plan = ExposurePlan(t_s, deadline, Closure.MAX_EXPOSURE, m, m)
            else:
                plan = ExposurePlan(t_s, t_stop, Closure.STREAM_END, m, m)
        plans.append(plan)
        t_s = plan.t_end
    return plans


def uniform_plans(exposure, t_stop, t_begin=0):
    """Back-to-back exposures of fixed length; the last one may be truncated."""
    if exposure <= 0:
        raise ConfigError(f"exposure must be positive, got {exposure}")
    plans = []
    t = t_begin
    while t < t_stop:
        end = min(t + exposure, t_stop)
        closure = Closure.MAX_EXPOSURE if end - t == exposure else Closure.STREAM_END
        plans.append(ExposurePlan(t, end, closure, 0, 0))
        t = end
    return plans


def _steps(t0, t1, dt):
    span = t1 - t0
    n_full = int(span // dt)
    lengths = [float(dt)] * n_full
    rem = span - n_full * dt
    if rem > 1e-9 or not lengths:
        lengths.append(float(rem) if lengths else float(span))
    mids = []
    t = float(t0)
    for h in lengths:
        mids.append(t + 0.5 * h)
        t += h
    return mids, lengths


def integrate_frame(
    scene,
    noise,
    t0,
    t1,
    dt=DEFAULT_INTEGRATOR_DT,
    instant_us=DEFAULT_INSTANT_US,
    instant_scale=DEFAULT_INSTANT_SCALE,
    rng=None,
):
    """Midpoint Riemann sum of the noisy instant intensity over ``[t0, t1)``.

    ``noise=None`` gives the noise-free integral. Noise draws for different
    steps are independent; the result is clamped to be nonnegative.
    """
    if not t1 > t0:
        raise ConfigError(f"empty exposure [{t0}, {t1})")
    if dt <= 0:
        raise ConfigError(f"integration step must be positive, got {dt}")
    if not (0 <= t0 and t1 <= scene.duration):
        raise ConfigError(f"exposure [{t0}, {t1}) outside scene [0, {scene.duration}]")
    mids, lengths = _steps(t0, t1, dt)
    if noise is not None and noise.sigma_p == 0 and noise.sigma_g == 0:
        noise = None
    if noise is not None and rng is None:
        rng = np.random.default_rng([noise.seed & 0xFFFFFFFFFFFFFFFF, time_key(t0), time_key(t1)])
    if scene.is_static_between(t0, t1):
        # a sum of independent Gaussian steps over a constant latent is one Gaussian
        count = sum(lengths) / instant_us
        latent = scene.render(mids[0])
        if noise is None:
            return count * instant_scale * latent
        return np.maximum(draw_instant(latent, noise, rng, instant_scale, count), 0.0)
    acc = np.zeros((scene.height, scene.width))
    for t, h in zip(mids, lengths):
        latent = scene.render(t)
        if noise is None:
            acc += (h / instant_us) * instant_scale * latent
        else:
            acc += draw_instant(latent, noise, rng, instant_scale, h / instant_us)
    return np.maximum(acc, 0.0)


def capture(scene, noise, plans, cfg):
    return [
        CapturedFrame(
            integrate_frame(
                scene, noise, p.t_start, p.t_end, cfg.integrator_dt, cfg.instant_us, cfg.instant_scale
            ),
            p.t_start,
            p.t_end,
            p.closure,
            p.measure_at_close,
            p.measure_before_close,
        )
        for p in plans
    ]


def run_controller(scene, noise, events, cfg=ShutterConfig()):
    """Drive exposures from ``events`` over the whole scene and integrate each frame."""
    if (events.width, events.height) != (scene.width, scene.height):
        raise ConfigError(
            f"event sensor {events.width}x{events.height} != scene {scene.width}x{scene.height}"
        )
    plans = plan_exposures(events, cfg, scene.duration)
    return capture(scene, noise, plans, cfg)


def to_radiance(frame, cfg):
    """Undo the exposure gain so frames of any length share radiance units."""
    return frame.pixels / cfg.gain(frame.exposure)


SIDECAR_FIELDS = ["frame_idx", "t_start_us", "t_end_us", "exposure_us", "closure", "measure_at_close"]


def write_sidecar(frames, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SIDECAR_FIELDS)
        for k, fr in enumerate(frames):
            w.writerow([k, _num(fr.t_start), _num(fr.t_end), _num(fr.exposure), Closure(fr.closure).value, fr.measure_at_close])


def read_sidecar(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    out = []
    for r in rows:
        out.append(
            {
                "frame_idx": int(r["frame_idx"]),
                "t_start_us": float(r["t_start_us"]),
                "t_end_us": float(r["t_end_us"]),
                "exposure_us": float(r["exposure_us"]),
                "closure": Closure(r["closure"]),
                "measure_at_close": int(r["measure_at_close"]),
            }
        )
    return out


def _num(v):
    return int(v) if float(v).is_integer() else repr(float(v))
