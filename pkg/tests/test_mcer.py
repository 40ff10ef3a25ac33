import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebsr.errors import ConfigError
from ebsr.event_sim import TimeInterval, make_stream
from ebsr.mcer import (MCERConfig, count_map, dump_mcer_png, encode_mcer, load_mcer, save_mcer, timesurface,
                       window_events)

from oracles import direct_mcer

EXPOSURE = TimeInterval(0.0, 1.0)


def random_stream(rng, n=200, w=6, h=5, exposure=EXPOSURE):
    t = rng.uniform(exposure.start, exposure.end, n)
    return make_stream(t, rng.integers(0, w, n), rng.integers(0, h, n), rng.choice([-1, 1], n), w, h,
                       interval=exposure)


def test_full_window_returns_everything():
    ev = random_stream(np.random.default_rng(0))
    assert window_events(ev, 0.5, 1.0) == ev


def test_window_excludes_outside_events():
    ev = make_stream([0.1, 0.9], [0, 0], [0, 0], [1, 1], 1, 1, interval=EXPOSURE)
    assert len(window_events(ev, 0.5, 0.5)) == 0


def test_window_boundaries_inclusive():
    ev = make_stream([0.25, 0.75], [0, 0], [0, 0], [1, -1], 1, 1, interval=EXPOSURE)
    assert len(window_events(ev, 0.5, 0.5)) == 2


def test_window_rejects_bad_arguments():
    ev = random_stream(np.random.default_rng(1))
    with pytest.raises(ValueError):
        window_events(ev, 0.5, 0.0)
    with pytest.raises(ValueError):
        window_events(ev, 1.5, 0.5)


def test_count_map_counts_per_polarity():
    ev = make_stream([0.1, 0.2, 0.3, 0.4], [2, 2, 2, 2], [1, 1, 1, 1], [1, 1, -1, 1], 4, 3)
    cm = count_map(ev)
    assert cm.shape == (2, 3, 4)
    assert cm[0, 1, 2] == 3 and cm[1, 1, 2] == 1
    assert cm.sum() == 4


def test_count_map_empty():
    ev = make_stream([], [], [], [], 4, 3)
    assert not count_map(ev).any()


def test_timesurface_latest_event():
    ev = make_stream([0.30, 0.45], [0, 0], [0, 0], [1, 1], 1, 1, interval=EXPOSURE)
    ts = timesurface(window_events(ev, 0.5, 0.5), 0.5, 0.5)
    assert ts[0, 0, 0] == pytest.approx(0.4)
    assert ts[1, 0, 0] == 0.0


def test_timesurface_window_end_is_one():
    ev = make_stream([0.75], [0], [0], [-1], 1, 1, interval=EXPOSURE)
    ts = timesurface(window_events(ev, 0.5, 0.5), 0.5, 0.5)
    assert ts[1, 0, 0] == 1.0


def test_encode_shape_and_empty_stream():
    ev = make_stream([], [], [], [], 7, 4, interval=EXPOSURE)
    m = encode_mcer(ev, EXPOSURE, MCERConfig())
    assert m.data.shape == (12, 4, 7)
    assert not m.data.any()
    assert m.f == 0.5


def test_encode_is_composition_of_window_quantizers():
    ev = random_stream(np.random.default_rng(2))
    cfg = MCERConfig((1.0, 0.5, 0.25))
    m = encode_mcer(ev, EXPOSURE, cfg)
    for k, r in enumerate(cfg.scales):
        win = window_events(ev, 0.5, r)
        assert np.array_equal(m.data[4 * k:4 * k + 2], count_map(win))
        assert np.array_equal(m.data[4 * k + 2:4 * k + 4], timesurface(win, 0.5, r))


def test_encode_matches_direct_loop():
    rng = np.random.default_rng(3)
    exposure = TimeInterval(2.0, 2.5)
    ev = random_stream(rng, 300, 5, 4, exposure)
    m = encode_mcer(ev, exposure)
    for k, r in enumerate(m.config.scales):
        counts, ts = direct_mcer(ev, exposure.midpoint, r * exposure.duration, exposure, 5, 4)
        assert np.array_equal(m.data[4 * k:4 * k + 2], counts)
        assert np.allclose(m.data[4 * k + 2:4 * k + 4], ts, atol=1e-12)


@pytest.mark.parametrize("scales", [(), (0.5, 0.25), (1.0, 1.0), (1.0, 0.5, 0.75), (1.0, 0.0)])
def test_bad_scales_rejected(scales):
    with pytest.raises(ConfigError):
        MCERConfig(scales)


def test_no_quantizer_rejected():
    with pytest.raises(ConfigError):
        MCERConfig(include_counts=False, include_timesurface=False)


def test_single_quantizer_layout():
    ev = random_stream(np.random.default_rng(4))
    m = encode_mcer(ev, EXPOSURE, MCERConfig((1.0, 0.5), include_timesurface=False))
    assert m.data.shape[0] == 4
    assert m.timesurface_channels().shape[0] == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nesting_completeness_and_range(seed):
    rng = np.random.default_rng(seed)
    ev = random_stream(rng, int(rng.integers(0, 300)))
    m = encode_mcer(ev, EXPOSURE)
    counts = m.count_channels().reshape(3, 2, *m.data.shape[1:])
    assert np.all(counts[1] <= counts[0]) and np.all(counts[2] <= counts[1])
    assert counts[0].sum() == len(ev)
    ts = m.timesurface_channels().reshape(3, 2, *m.data.shape[1:])
    assert np.all((ts >= 0) & (ts <= 1))
    assert np.array_equal(ts > 0, counts > 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-3, 3), st.integers(-3, 3))
def test_translation_equivariance(seed, dx, dy):
    rng = np.random.default_rng(seed)
    w, h = 8, 7
    ev = random_stream(rng, 150, w, h)
    m = encode_mcer(ev, EXPOSURE).data
    x, y = ev.x.astype(int) + dx, ev.y.astype(int) + dy
    keep = (x >= 0) & (x < w) & (y >= 0) & (y < h)
    shifted = make_stream(ev.t[keep], x[keep], y[keep], ev.p[keep], w, h, interval=EXPOSURE)
    ms = encode_mcer(shifted, EXPOSURE).data
    expected = np.zeros_like(m)
    ys, yd = slice(max(0, -dy), h - max(0, dy)), slice(max(0, dy), h - max(0, -dy))
    xs, xd = slice(max(0, -dx), w - max(0, dx)), slice(max(0, dx), w - max(0, -dx))
    expected[:, yd, xd] = m[:, ys, xs]
    assert np.array_equal(ms, expected)


def test_encode_is_deterministic():
    ev = random_stream(np.random.default_rng(5))
    assert np.array_equal(encode_mcer(ev, EXPOSURE).data, encode_mcer(ev, EXPOSURE).data)


def test_network_input_normalizes_counts_only():
    ev = make_stream(np.linspace(0.4, 0.6, 25), [0] * 25, [0] * 25, [1] * 25, 1, 1, interval=EXPOSURE)
    m = encode_mcer(ev, EXPOSURE)
    x = m.network_input()
    assert x.dtype == np.float32
    assert m.data[0, 0, 0] == 25 and x[0, 0, 0] == 1.0
    assert np.array_equal(x[2:4], m.data[2:4].astype(np.float32))


def test_save_load_roundtrip(tmp_path):
    m = encode_mcer(random_stream(np.random.default_rng(6)), EXPOSURE)
    save_mcer(tmp_path / "m.bin", m)
    back = load_mcer(tmp_path / "m.bin")
    assert np.array_equal(back.data, m.data.astype(np.float32))
    assert back.config == m.config and back.exposure == m.exposure


def test_png_dump_has_one_page_per_channel(tmp_path):
    from PIL import Image

    m = encode_mcer(random_stream(np.random.default_rng(7)), EXPOSURE)
    dump_mcer_png(tmp_path / "m.png", m)
    with Image.open(tmp_path / "m.png") as im:
        assert getattr(im, "n_frames", 1) == 12
