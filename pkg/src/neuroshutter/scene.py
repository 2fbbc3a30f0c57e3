"""Continuous-time latent radiance scenes and the signal-dependent noise model.

A scene is a pure function of time: a periodic band-limited background
texture, optionally translated, with an optional textured object composited
on top. Velocities are piecewise constant over phases, so displacement is a
piecewise-linear function of time.

Times are in microseconds, velocities in pixels per second.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, TimeRangeError

# Scale of the "instant" intensity relative to a full-scale exposure.
# The source data used 64 interpolated frames per sequence.
DEFAULT_INSTANT_SCALE = 1.0 / 64.0

_SNAP = 1e-9


class SceneKind(str, Enum):
    STATIC = "static"
    GLOBAL_TRANSLATE = "global_translate"
    LOCAL_OBJECT = "local_object"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class Phase:
    duration: int
    velocity: tuple = (0.0, 0.0)
    object_velocity: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "object_velocity", tuple(float(v) for v in self.object_velocity))


@dataclass(frozen=True)
class SceneParams:
    velocity: tuple = (0.0, 0.0)
    object_box: tuple = None  # (x, y, w, h) at t=0
    object_velocity: tuple = (0.0, 0.0)
    texture_seed: int = 0
    feature_size: float = 3.0
    contrast: float = 1.0
    phases: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "object_velocity", tuple(float(v) for v in self.object_velocity))
        object.__setattr__(self, "phases", tuple(self.phases))


@dataclass(frozen=True)
class NoiseParams:
    sigma_p: float
    sigma_g: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma_p < 0 or self.sigma_g < 0:
            raise ConfigError(f"noise parameters must be nonnegative, got {self}")


@dataclass
class RadianceFrame:
    width: int
    height: int
    values: np.ndarray = field(repr=False)
    timestamp: float = 0.0

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise ConfigError(
                f"values shape {self.values.shape} != ({self.height}, {self.width})"
            )


def band_limited_texture(height, width, seed, feature_size):
    """Periodic low-pass filtered white noise rescaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((height, width))
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    # Fourier transform of a Gaussian blur with std ``feature_size`` pixels
    transfer = np.exp(-2.0 * np.pi**2 * feature_size**2 * (fx**2 + fy**2))
    tex = np.real(np.fft.ifft2(np.fft.fft2(white) * transfer))
    lo, hi = tex.min(), tex.max()
    if hi - lo <= 0:
        return np.full((height, width), 0.5)
    return (tex - lo) / (hi - lo)


def shift_periodic(image, dx, dy):
    """Sample ``image`` at ``(x - dx, y - dy)`` with wraparound, bilinear in between."""
    out = image
    for axis, d in ((1, dx), (0, dy)):
        if d == 0:
            continue
        i = int(np.floor(d))
        f = d - i
        if f == 0.0:
            out = np.roll(out, i, axis=axis)
        else:
            out = (1.0 - f) * np.roll(out, i, axis=axis) + f * np.roll(out, i + 1, axis=axis)
    return out


def _snap(d):
    r = round(d)
    return float(r) if abs(d - r) < _SNAP else d


@dataclass(frozen=True)
class LatentScene:
    width: int
    height: int
    duration: int
    kind: SceneKind = SceneKind.STATIC
    params: SceneParams = SceneParams()
    base_illumination: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SceneKind(self.kind))
        if self.width < 1 or self.height < 1:
            raise ConfigError("scene dimensions must be positive")
        if self.duration <= 0:
            raise ConfigError("scene duration must be positive")
        if not 0.0 <= self.base_illumination <= 1.0:
            raise ConfigError("base_illumination must lie in [0, 1]")
        if not 0.0 <= self.params.contrast <= 1.0:
            raise ConfigError("contrast must lie in [0, 1]")
        if self.kind is SceneKind.LOCAL_OBJECT and self.params.object_box is None:
            raise ConfigError("local_object scenes need an object_box")
        if self.params.object_box is not None:
            x, y, w, h = self.params.object_box
            if w < 1 or h < 1 or x < 0 or y < 0 or x + w > self.width or y + h > self.height:
                raise ConfigError(f"object_box {self.params.object_box} outside the frame")
        if self.kind is SceneKind.COMPOSITE:
            if not self.params.phases:
                raise ConfigError("composite scenes need at least one phase")
            total = sum(p.duration for p in self.params.phases)
            if total != self.duration:
                raise ConfigError(f"phase durations sum to {total}, scene duration is {self.duration}")

    def with_illumination(self, illumination):
        return LatentScene(self.width, self.height, self.duration, self.kind, self.params, illumination)

    @cached_property
    def phases(self):
        p = self.params
        if self.kind is SceneKind.STATIC:
            return (Phase(self.duration),)
        if self.kind is SceneKind.GLOBAL_TRANSLATE:
            return (Phase(self.duration, tuple(p.velocity), tuple(p.object_velocity)),)
        if self.kind is SceneKind.LOCAL_OBJECT:
            return (Phase(self.duration, (0.0, 0.0), tuple(p.object_velocity)),)
        return tuple(p.phases)

    @cached_property
    def _background(self):
        return band_limited_texture(
            self.height, self.width, self.params.texture_seed, self.params.feature_size
        )

    @cached_property
    def _object_layers(self):
        if self.params.object_box is None:
            return None
        x, y, w, h = self.params.object_box
        tex = band_limited_texture(h, w, self.params.texture_seed + 7919, self.params.feature_size)
        color = np.zeros((self.height, self.width))
        alpha = np.zeros((self.height, self.width))
        color[y : y + h, x : x + w] = tex
        alpha[y : y + h, x : x + w] = 1.0
        return color, alpha

    def displacement(self, t):
        """Background and object displacement in pixels at time ``t``."""
        bg = [0.0, 0.0]
        obj = [0.0, 0.0]
        start = 0
        for ph in self.phases:
            span = min(max(t - start, 0), ph.duration)
            for k in range(2):
                bg[k] += ph.velocity[k] * span / 1e6
                obj[k] += ph.object_velocity[k] * span / 1e6
            start += ph.duration
            if t <= start:
                break
        return (_snap(bg[0]), _snap(bg[1])), (_snap(obj[0]), _snap(obj[1]))

    def is_static_between(self, t0, t1):
        return all(
            ph.velocity == (0.0, 0.0) and ph.object_velocity == (0.0, 0.0)
            for ph in self._phases_overlapping(t0, t1)
        )

    def _phases_overlapping(self, t0, t1):
        start = 0
        for ph in self.phases:
            end = start + ph.duration
            if end > t0 and start < t1:
                yield ph
            start = end

    def render(self, t):
        """Noise-free radiance at time ``t`` without range checking."""
        (bx, by), (ox, oy) = self.displacement(t)
        img = shift_periodic(self._background, bx, by)
        layers = self._object_layers
        if layers is not None:
            color, alpha = layers
            # premultiplied alpha keeps edges continuous under sub-pixel motion
            a = shift_periodic(alpha, ox, oy)
            img = img * (1.0 - a) + shift_periodic(color, ox, oy)
        c = self.params.contrast
        return self.base_illumination * ((1.0 - c) + c * img)


def _check_time(scene, t):
    if not 0 <= t <= scene.duration:
        raise TimeRangeError(f"t={t} outside [0, {scene.duration}]")


def sample_latent(scene, t):
    _check_time(scene, t)
    return RadianceFrame(scene.width, scene.height, scene.render(t), t)


def time_key(t):
    """Integer nanosecond key used to seed per-instant noise."""
    return int(round(float(t) * 1000.0))


def draw_instant(latent, noise, rng, scale=1.0, count=1.0):
    """Sum of ``count`` independent instant frames, each N(sL, sigma_p*sL + sigma_g^2).

    Unclamped; ``count`` may be fractional (a partial instant).
    """
    mean = scale * latent
    var = noise.sigma_p * mean + noise.sigma_g**2
    return count * mean + np.sqrt(count * var) * rng.standard_normal(latent.shape)


def sample_instant(scene, noise, t, scale=1.0):
    """One noisy instant frame; a pure function of ``(scene, noise.seed, t)``."""
    latent = sample_latent(scene, t)
    rng = np.random.default_rng([noise.seed & 0xFFFFFFFFFFFFFFFF, time_key(t)])
    values = np.maximum(draw_instant(latent.values, noise, rng, scale), 0.0)
    return RadianceFrame(scene.width, scene.height, values, t)


def draw_noise_params(rng_seed):
    rng = np.random.default_rng(rng_seed)
    sigma_p, sigma_g = rng.uniform(0.01, 0.04, size=2)
    return NoiseParams(float(sigma_p), float(sigma_g), int(rng_seed))


def _pair(value, name):
    if value is None:
        return (0.0, 0.0)
    if isinstance(value, (int, float)):
        return (float(value), 0.0)
    if len(value) != 2:
        raise ConfigError(f"{name} must be a number or a pair, got {value!r}")
    return (float(value[0]), float(value[1]))


def scene_from_dict(cfg):
    try:
        kind = SceneKind(cfg.get("kind", "static"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    missing = [k for k in ("width", "height", "duration_us") if k not in cfg]
    if missing:
        raise ConfigError(f"scene config missing keys: {missing}")
    phases = tuple(
        Phase(
            int(p["duration_us"]),
            _pair(p.get("velocity_px_s"), "velocity_px_s"),
            _pair(p.get("object_velocity_px_s"), "object_velocity_px_s"),
        )
        for p in cfg.get("phases", ())
    )
    box = cfg.get("object_box")
    params = SceneParams(
        velocity=_pair(cfg.get("velocity_px_s"), "velocity_px_s"),
        object_box=tuple(int(v) for v in box) if box is not None else None,
        object_velocity=_pair(cfg.get("object_velocity_px_s"), "object_velocity_px_s"),
        texture_seed=int(cfg.get("seed", 0)),
        feature_size=float(cfg.get("feature_size", 3.0)),
        contrast=float(cfg.get("contrast", 1.0)),
        phases=phases,
    )
    return LatentScene(
        int(cfg["width"]),
        int(cfg["height"]),
        int(cfg["duration_us"]),
        kind,
        params,
        float(cfg.get("illumination", 1.0)),
    )


def scene_to_dict(scene):
    p = scene.params
    out = {
        "width": scene.width,
        "height": scene.height,
        "duration_us": scene.duration,
        "kind": scene.kind.value,
        "velocity_px_s": list(p.velocity),
        "seed": p.texture_seed,
        "illumination": scene.base_illumination,
        "feature_size": p.feature_size,
        "contrast": p.contrast,
    }
    if p.object_box is not None:
        out["object_box"] = list(p.object_box)
        out["object_velocity_px_s"] = list(p.object_velocity)
    if p.phases:
        out["phases"] = [
            {
                "duration_us": ph.duration,
                "velocity_px_s": list(ph.velocity),
                "object_velocity_px_s": list(ph.object_velocity),
            }
            for ph in p.phases
        ]
    return out


def load_scene(path):
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scene file {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: scene config must be a mapping")
    return scene_from_dict(cfg)


def save_scene(scene, path):
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))
