import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neuroshutter.errors import ConfigError, ParseError, ValidationError
from neuroshutter.events import (
    ContrastThreshold,
    Event,
    EventGenerator,
    EventStream,
    accumulate_delta,
    concat,
    read_events,
    simulate_events,
    slice_stream,
    write_events,
)
from neuroshutter.scene import LatentScene, SceneKind, SceneParams


@st.composite
def streams(draw, max_len=60):
    w = draw(st.integers(1, 40))
    h = draw(st.integers(1, 40))
    n = draw(st.integers(0, max_len))
    gaps = draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n))
    xs = draw(st.lists(st.integers(0, w - 1), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, h - 1), min_size=n, max_size=n))
    ps = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return EventStream(np.cumsum(gaps), xs, ys, ps, w, h)


def random_stream(rng, n, w=64, h=48):
    t = np.sort(rng.integers(0, 10 * n + 1, n))
    return EventStream(t, rng.integers(0, w, n), rng.integers(0, h, n), rng.choice([-1, 1], n), w, h)


# --- simulation -------------------------------------------------------------


def test_static_scene_gives_no_events(static_scene):
    assert len(simulate_events(static_scene)) == 0


def test_linear_rise_of_three_and_a_half_thresholds():
    c = 0.15
    gen = EventGenerator(np.zeros((1, 1)), c)
    t, x, y, p = gen.step(np.full((1, 1), 3.5 * c), 0, 1000)
    assert p.tolist() == [1, 1, 1]
    assert t.tolist() == [round(1000 * k / 3.5) for k in (1, 2, 3)]
    assert x.tolist() == [0, 0, 0] and y.tolist() == [0, 0, 0]


def test_fall_of_two_thresholds():
    gen = EventGenerator(np.zeros((1, 1)), 0.2)
    t, _, _, p = gen.step(np.full((1, 1), -0.4), 0, 100)
    assert p.tolist() == [-1, -1]
    assert t.tolist() == [50, 100]


def test_reference_carries_remainder():
    gen = EventGenerator(np.zeros((1, 1)), 0.1)
    assert len(gen.step(np.full((1, 1), 0.15), 0, 10)[0]) == 1
    assert len(gen.step(np.full((1, 1), 0.21), 10, 20)[0]) == 1  # crosses 0.2
    assert len(gen.step(np.full((1, 1), 0.11), 20, 30)[0]) == 0  # back within one threshold of 0.2


def test_nonpositive_dt_rejected(pan_scene):
    with pytest.raises(ConfigError):
        simulate_events(pan_scene, dt=0)


def test_simulated_stream_is_sorted_and_valid(pan_scene):
    s = simulate_events(pan_scene)
    s.validate()
    assert len(s) > 0
    assert np.all(np.diff(s.t) >= 0)
    key = s.t * (s.width * s.height) + s.y.astype(np.int64) * s.width + s.x
    assert np.all(np.diff(key) >= 0)


def test_event_count_scales_with_speed():
    counts = []
    for v in (200.0, 400.0):
        sc = LatentScene(64, 48, 200_000, SceneKind.GLOBAL_TRANSLATE, SceneParams(velocity=(v, 0.0), texture_seed=8, contrast=0.8), 0.8)
        counts.append(len(simulate_events(sc, dt=100)))
    assert counts[1] / counts[0] == pytest.approx(2.0, rel=0.15)


def test_polarity_balance_over_a_full_period():
    # 64 px wide texture moving 64 px: every pixel returns to its start value
    sc = LatentScene(64, 32, 640_000, SceneKind.GLOBAL_TRANSLATE, SceneParams(velocity=(100.0, 0.0), texture_seed=2, contrast=0.8), 0.8)
    s = simulate_events(sc)
    pos = int((s.p > 0).sum())
    neg = int((s.p < 0).sum())
    assert abs(pos - neg) / (pos + neg) < 0.01


def test_background_activity_is_seeded(static_scene):
    a = simulate_events(static_scene, background_rate_hz=5.0, seed=1)
    b = simulate_events(static_scene, background_rate_hz=5.0, seed=1)
    assert a == b and len(a) > 0
    a.validate()


# --- accumulate_delta -------------------------------------------------------


def test_accumulate_delta_examples():
    s = EventStream([1, 2, 3], [0, 0, 0], [0, 0, 0], [1, 1, -1], 1, 1)
    assert accumulate_delta(s, (0, 0), (0, 10), ContrastThreshold(0.1)) == pytest.approx(0.1)
    assert accumulate_delta(s, (0, 0), (5, 10)) == 0.0


def test_accumulate_delta_matches_linear_scan(rng):
    s = random_stream(rng, 2000, 8, 8)
    c = ContrastThreshold(0.2)
    for _ in range(20):
        t0, t1 = sorted(rng.integers(0, 20_000, 2))
        px = (int(rng.integers(8)), int(rng.integers(8)))
        ref = sum(e.p for e in s if e.x == px[0] and e.y == px[1] and t0 <= e.t <= t1) * 0.2
        assert accumulate_delta(s, px, (t0, t1), c) == pytest.approx(ref)


# --- slicing ----------------------------------------------------------------


def test_slice_sizes():
    s = EventStream(np.arange(10), np.zeros(10), np.zeros(10), np.ones(10), 1, 1)
    assert [len(x) for x in slice_stream(s, 3)] == [3, 3, 3, 1]
    assert [len(x) for x in slice_stream(s, 10)] == [10]
    assert [len(x) for x in slice_stream(s, 50)] == [10]
    with pytest.raises(ConfigError):
        slice_stream(s, 0)


@given(streams(), st.integers(1, 20))
def test_slices_concatenate_to_original(stream, count):
    slices = slice_stream(stream, count)
    if len(stream) == 0:
        assert slices == []
        return
    back = concat([sl.events for sl in slices])
    assert back == stream and back.tobytes() == stream.tobytes()
    assert all(np.all(np.diff(sl.events.t) >= 0) for sl in slices)
    assert [sl.arrival for sl in slices] == sorted(sl.arrival for sl in slices)


# --- file I/O ---------------------------------------------------------------


@given(streams(), st.sampled_from(["ev.csv", "ev.bin"]))
def test_file_round_trip(tmp_path_factory, stream, name):
    path = tmp_path_factory.mktemp("ev") / name
    write_events(stream, path)
    assert read_events(path, stream.width, stream.height) == stream


@given(streams())
def test_csv_and_binary_agree(tmp_path_factory, stream):
    d = tmp_path_factory.mktemp("x")
    write_events(stream, d / "a.csv")
    write_events(stream, d / "a.evt")
    assert read_events(d / "a.csv", stream.width, stream.height) == read_events(d / "a.evt")


def test_csv_row_format(tmp_path):
    (tmp_path / "e.csv").write_text("t_us,x,y,p\n1500,10,20,-1\n")
    s = read_events(tmp_path / "e.csv")
    assert list(s) == [Event(x=10, y=20, t=1500, p=-1)]
    assert (s.width, s.height) == (11, 21)


def test_csv_parse_errors_carry_line(tmp_path):
    (tmp_path / "e.csv").write_text("t_us,x,y,p\n1,1,1,1\n2,1,oops,1\n")
    with pytest.raises(ParseError, match="line 3") as exc:
        read_events(tmp_path / "e.csv")
    assert exc.value.line == 3
    (tmp_path / "f.csv").write_text("t_us,x,y,p\n1,1,1,1\n2,1,1\n")
    with pytest.raises(ParseError, match="line 3"):
        read_events(tmp_path / "f.csv")
    (tmp_path / "g.csv").write_text("t_us,x,y,p\n1,1,1,0\n")
    with pytest.raises(ParseError):
        read_events(tmp_path / "g.csv")


def test_out_of_order_timestamps(tmp_path):
    (tmp_path / "e.csv").write_text("t_us,x,y,p\n5,0,0,1\n4,0,0,1\n")
    with pytest.raises(ValidationError):
        read_events(tmp_path / "e.csv")


def test_out_of_bounds_on_read(tmp_path):
    (tmp_path / "e.csv").write_text("t_us,x,y,p\n5,9,0,1\n")
    with pytest.raises(ValidationError):
        read_events(tmp_path / "e.csv", width=4, height=4)


def test_window_is_inclusive(rng):
    s = EventStream([1, 2, 2, 3, 5], [0] * 5, [0] * 5, [1] * 5, 1, 1)
    assert s.window(2, 3).t.tolist() == [2, 2, 3]
    assert len(s.window(6, 9)) == 0
