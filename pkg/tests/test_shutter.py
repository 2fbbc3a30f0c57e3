import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neuroshutter.emm import Mode
from neuroshutter.errors import ConfigError
from neuroshutter.events import EventStream, simulate_events, slice_stream
from neuroshutter.scene import LatentScene, NoiseParams, SceneKind, SceneParams
from neuroshutter.shutter import (
    DEFAULT_R,
    CapturedFrame,
    Closure,
    ShutterConfig,
    integrate_frame,
    plan_exposures,
    read_sidecar,
    run_controller,
    to_radiance,
    uniform_plans,
    write_sidecar,
)
from oracles import box_blur_shift, pea_prefix_measures, replay_controller


def constant_rate(n, per_ms, w=64, h=48, seed=0):
    rng = np.random.default_rng(seed)
    t = (np.arange(n) * 1000) // per_ms
    return EventStream(t, rng.integers(0, w, n), rng.integers(0, h, n), rng.choice([-1, 1], n), w, h)


def test_default_threshold():
    assert ShutterConfig().R == DEFAULT_R == 20_000


def test_config_validation():
    for bad in ({"R": 0}, {"T_max": 0}, {"slice_count": 0}, {"integrator_dt": 0}, {"latency_budget": -1}):
        with pytest.raises(ConfigError):
            ShutterConfig(**bad)


def test_static_scene_closes_on_timer():
    sc = LatentScene(16, 12, 1_000_000, SceneKind.STATIC, SceneParams(texture_seed=1), 0.5)
    cfg = ShutterConfig(T_max=50_000)
    frames = run_controller(sc, None, EventStream.empty(16, 12), cfg)
    assert len(frames) == 20
    assert all(f.exposure == 50_000 and f.closure is Closure.MAX_EXPOSURE for f in frames)


def test_constant_rate_matches_slice_replay():
    # 1000 events/ms; the first slice that pushes the count past R closes
    ev = constant_rate(40_000, 1000)
    cfg = ShutterConfig(R=20_000, slice_count=100, latency_budget=0, T_max=10**9)
    plan = plan_exposures(ev, cfg, 40_000)[0]
    arrivals = [s.arrival for s in slice_stream(ev, 100)]
    # strict "> R": 200 slices reach exactly R, the 201st exceeds it
    assert plan.closure is Closure.THRESHOLD_HIT
    assert plan.measure_at_close == 20_100 and plan.measure_before_close == 20_000
    assert plan.t_end == arrivals[200] == 20_099


def test_latency_is_added_to_threshold_closures():
    ev = constant_rate(40_000, 1000)
    a = plan_exposures(ev, ShutterConfig(R=5_000, latency_budget=0), 30_000)
    b = plan_exposures(ev, ShutterConfig(R=5_000, latency_budget=700), 30_000)
    assert b[0].t_end == a[0].t_end + 700


def test_timer_closure_has_no_latency():
    ev = constant_rate(100, 1)  # far too slow to reach R
    plans = plan_exposures(ev, ShutterConfig(R=10**6, T_max=7_000, latency_budget=900), 21_000)
    assert [p.exposure for p in plans] == [7_000, 7_000, 7_000]


def test_stream_end_truncates_last_frame():
    plans = plan_exposures(EventStream.empty(4, 4), ShutterConfig(T_max=4_000), 10_000)
    assert [p.exposure for p in plans] == [4_000, 4_000, 2_000]
    assert plans[-1].closure is Closure.STREAM_END


def test_deadline_slice_counts_as_threshold_hit():
    # the 3rd event lands exactly at t_start + T_max
    ev = EventStream([100, 200, 1000], [0, 0, 0], [0, 0, 0], [1, 1, 1], 2, 2)
    cfg = ShutterConfig(R=2, T_max=1000, slice_count=1, latency_budget=0)
    p = plan_exposures(ev, cfg, 5_000)[0]
    assert p.closure is Closure.THRESHOLD_HIT and p.t_end == 1000


def test_controller_is_deterministic():
    ev = constant_rate(30_000, 700, seed=4)
    cfg = ShutterConfig(R=3_000, mode=Mode.PEA)
    assert plan_exposures(ev, cfg, 50_000) == plan_exposures(ev, cfg, 50_000)


@st.composite
def controller_case(draw):
    n = draw(st.integers(0, 3000))
    seed = draw(st.integers(0, 2**32 - 1))
    cfg = ShutterConfig(
        R=draw(st.integers(1, 800)),
        T_max=draw(st.integers(1, 5_000)),
        slice_count=draw(st.integers(1, 60)),
        latency_budget=draw(st.integers(0, 1_500)),
        mode=draw(st.sampled_from(list(Mode))),
    )
    t_stop = draw(st.integers(1, 40_000))
    return n, seed, cfg, t_stop


@given(controller_case())
def test_plans_match_replay_oracle_and_invariants(case):
    n, seed, cfg, t_stop = case
    rng = np.random.default_rng(seed)
    w, h = 24, 16
    t = np.sort(rng.integers(0, t_stop + 1, n))
    ev = EventStream(t, rng.integers(0, w, n), rng.integers(0, h, n), np.ones(n), w, h)
    plans = plan_exposures(ev, cfg, t_stop)

    slices = slice_stream(ev, cfg.slice_count)
    arrivals = [s.arrival for s in slices]
    ends = np.cumsum([len(s) for s in slices])

    def measure_after(i0, i1):
        lo = 0 if i0 == 0 else ends[i0 - 1]
        x, y = ev.x[lo : ends[i1 - 1]], ev.y[lo : ends[i1 - 1]]
        gea, pea = pea_prefix_measures(x, y, w, h, [len(x)])
        return int(gea[0] if cfg.mode is Mode.GEA else pea[0])

    ref = replay_controller(arrivals, measure_after, cfg.R, cfg.T_max, cfg.latency_budget, t_stop)
    assert [(p.t_start, p.t_end, p.closure.value) for p in plans] == ref

    assert plans[0].t_start == 0 and plans[-1].t_end == t_stop
    for a, b in zip(plans, plans[1:]):
        assert b.t_start == a.t_end
    for p in plans:
        assert 0 < p.exposure <= cfg.T_max + cfg.latency_budget
        if p.closure is Closure.THRESHOLD_HIT:
            assert p.measure_at_close > cfg.R >= p.measure_before_close


# --- integration ------------------------------------------------------------


def test_static_integral_is_linear(static_scene):
    a = integrate_frame(static_scene, None, 0, 8_000)
    b = integrate_frame(static_scene, None, 0, 16_000)
    np.testing.assert_allclose(b, 2 * a, rtol=0, atol=1e-12)


def test_single_step_guard(static_scene):
    # dt equal to (or larger than) the span: one midpoint sample
    f = integrate_frame(static_scene, None, 1_000, 1_250, dt=250, instant_us=250, instant_scale=1.0)
    np.testing.assert_allclose(f, static_scene.render(1_125), atol=1e-15)
    g = integrate_frame(static_scene, None, 1_000, 1_100, dt=250, instant_us=250, instant_scale=1.0)
    np.testing.assert_allclose(g, 0.4 * static_scene.render(1_050), atol=1e-15)


def test_motion_blur_matches_box_blur_oracle():
    sc = LatentScene(48, 20, 100_000, SceneKind.GLOBAL_TRANSLATE, SceneParams(velocity=(100.0, 0.0), texture_seed=3))
    k = 4
    f = integrate_frame(sc, None, 0, k * 10_000, dt=250, instant_us=250, instant_scale=1.0)
    n_instants = k * 10_000 / 250
    blur = box_blur_shift(sc.render(0), k)
    np.testing.assert_allclose(f / n_instants, blur, atol=2e-4)
    # dense resampling at dt/16 agrees with the default step
    dense = np.mean([sc.render(t) for t in np.arange(0, k * 10_000, 250 / 16) + 250 / 32], axis=0)
    np.testing.assert_allclose(f / n_instants, dense, atol=2e-4)


def test_noisy_integral_moments():
    # bright enough that the nonnegativity clamp never binds
    sc = LatentScene(200, 100, 100_000, SceneKind.STATIC, SceneParams(contrast=0.0), 1.0)
    noise = NoiseParams(0.02, 0.03, 11)
    s = 0.25
    f = integrate_frame(sc, noise, 0, 4_000, instant_us=250, instant_scale=s)
    n = 16
    assert f.mean() == pytest.approx(n * s, rel=0.01)
    assert f.var() == pytest.approx(n * (0.02 * s + 0.03**2), rel=0.03)


def test_moving_scene_noise_is_stepwise(pan_scene):
    noise = NoiseParams(0.02, 0.02, 3)
    a = integrate_frame(pan_scene, noise, 0, 5_000)
    assert np.array_equal(a, integrate_frame(pan_scene, noise, 0, 5_000))
    assert a.min() >= 0


def test_integration_range_checks(static_scene):
    with pytest.raises(ConfigError):
        integrate_frame(static_scene, None, 10, 10)
    with pytest.raises(ConfigError):
        integrate_frame(static_scene, None, 0, static_scene.duration + 1)


def test_controller_rejects_mismatched_sensor(static_scene):
    with pytest.raises(ConfigError):
        run_controller(static_scene, None, EventStream.empty(5, 5))


def test_run_controller_end_to_end(pan_scene):
    ev = simulate_events(pan_scene)
    cfg = ShutterConfig(R=500, T_max=20_000)
    frames = run_controller(pan_scene, NoiseParams(0.02, 0.02, 1), ev, cfg)
    assert frames[0].t_start == 0 and frames[-1].t_end == pan_scene.duration
    assert any(f.closure is Closure.THRESHOLD_HIT for f in frames)
    rad = to_radiance(frames[1], cfg)
    assert rad.mean() == pytest.approx(pan_scene.render(frames[1].midpoint).mean(), rel=0.1)


def test_uniform_plans():
    plans = uniform_plans(3, 10)
    assert [(p.t_start, p.t_end) for p in plans] == [(0, 3), (3, 6), (6, 9), (9, 10)]
    with pytest.raises(ConfigError):
        uniform_plans(0, 10)


def test_sidecar_round_trip(tmp_path):
    frames = [
        CapturedFrame(np.zeros((2, 2)), 0, 1500, Closure.THRESHOLD_HIT, 20_001),
        CapturedFrame(np.zeros((2, 2)), 1500, 2000.5, Closure.STREAM_END, 3),
    ]
    write_sidecar(frames, tmp_path / "s.csv")
    text = (tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "frame_idx,t_start_us,t_end_us,exposure_us,closure,measure_at_close"
    assert text[1] == "0,0,1500,1500,ThresholdHit,20001"
    rows = read_sidecar(tmp_path / "s.csv")
    assert rows[1]["exposure_us"] == 500.5 and rows[1]["closure"] is Closure.STREAM_END
