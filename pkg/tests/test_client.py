import json
import urllib.error
import urllib.request

import numpy as np
import pytest

from fvv.client import FvvClient, extract_view, select_cluster
from fvv.client.core import layout_from_lookup
from fvv.client.ui import UiServer, frame_to_png, frame_to_rgb
from fvv.cluster import build_layouts, build_lookup_table
from fvv.interp import InterpConfig
from fvv.scene import SceneSpec, SyntheticScene, capture_sequence, load_frame
from fvv.server.httpserve import serve_pipeline
from fvv.server.pipeline import PipelineConfig
from fvv.viewmodel import ViewIndexModel


@pytest.fixture(scope="module")
def lookup177():
    model = ViewIndexModel(12, 4)
    return build_lookup_table(build_layouts(model, 16), model)


def test_select_cluster_examples(lookup177):
    assert select_cluster(16, lookup177) == 1  # anchor itself
    assert select_cluster(8, lookup177) == 0   # tie between 0 and 16 -> lower id
    assert select_cluster(42, lookup177) == 3  # 48 at distance 6 beats 32 at 10


def test_select_cluster_matches_brute_force(lookup177):
    for view in range(177):
        expected = min(range(12), key=lambda c: (abs(16 * c - view), c))
        assert select_cluster(view, lookup177) == expected
    with pytest.raises(IndexError):
        select_cluster(177, lookup177)


def test_layout_from_lookup_round_trip(lookup177):
    model = ViewIndexModel(12, 4)
    direct = build_layouts(model, 16)
    for cluster in range(12):
        rebuilt = layout_from_lookup(lookup177, cluster)
        assert rebuilt.tiles == direct[cluster].tiles
        assert (rebuilt.first_index, rebuilt.last_index) == \
            (direct[cluster].first_index, direct[cluster].last_index)


def test_extract_view_boundary_clamp(lookup177):
    layout = layout_from_lookup(lookup177, 5)  # covers 64..96
    frames = [[bytes([t]) for t in range(layout.tile_count)] for _ in range(4)]
    inside = extract_view(frames, 80, layout)
    assert not inside.clamped and inside.tier == "full"
    assert inside.slices == tuple(bytes([16]) for _ in range(4))
    beyond = extract_view(frames, 150, layout)
    assert beyond.clamped and beyond.view == 96
    assert beyond.tile == layout.tile_count - 1
    below = extract_view(frames, 2, layout)
    assert below.clamped and below.view == 64 and below.tile == 0


@pytest.fixture(scope="module")
def live_server(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("client-e2e")
    spec = SceneSpec(seed=42, camera_count=4, width=128, height=96, format="gray8",
                     gain=6.0, background_depth=3.0, sprites=())
    scene_dir = capture_sequence(SyntheticScene(spec), tmp / "scn", 24)
    config = PipelineConfig(scene_dir=str(scene_dir), stages=2, views_per_side=2,
                            fps=30, segment_duration=0.2, gop=6, quality=100,
                            port=0, interp=InterpConfig(search_radius=(4, 2, 1)))
    handle, server, store = serve_pipeline(config)
    handle.wait(timeout=180)
    yield server.url, scene_dir, spec, store
    server.stop()
    handle.stop()


def test_static_anchor_is_bit_exact(live_server):
    url, scene_dir, spec, _store = live_server
    client = FvvClient(url, view=4, from_start=True)  # anchor of camera 1
    client.run()
    frames = list(client.buffer)
    assert len(frames) == 24
    for t, frame in enumerate(frames):
        captured = load_frame(scene_dir, 1, t, spec)
        assert np.array_equal(frame.planes[0], captured.planes[0])


def test_intra_cluster_sweep_no_extra_downloads(live_server):
    url, _scn, _spec, _store = live_server
    # sweep all 5 views of cluster 1 within the second segment
    traj = {6: 2, 7: 3, 8: 4, 9: 5, 10: 6}
    client = FvvClient(url, view=4, trajectory=traj, from_start=True)
    stats = client.run(max_segments=2)
    assert stats.segment_downloads == 2  # one per segment, sweep added none
    shown = [e.shown_view for e in stats.transcript[6:11]]
    assert shown == [2, 3, 4, 5, 6]
    hashes = {f.planes[0].tobytes() for f in list(client.buffer)[6:11]}
    assert len(hashes) == 5  # distinct outputs per view
    assert set(stats.tiles_decoded_per_frame()) == {1}


def test_cluster_exit_clamps_then_switches(live_server):
    url, _scn, _spec, _store = live_server
    traj = {6: 12}  # exit cluster 1 (range 2..6) right at segment 1 start
    client = FvvClient(url, view=4, trajectory=traj, from_start=True)
    stats = client.run(max_segments=3)
    seg1 = stats.transcript[6:12]
    assert all(e.clamped and e.shown_view == 6 and e.cluster == 1 for e in seg1)
    seg2 = stats.transcript[12:18]
    assert all(not e.clamped and e.shown_view == 12 and e.cluster == 3 for e in seg2)
    assert stats.switch_latency_frames and max(stats.switch_latency_frames) <= 1


def test_quarter_tier_views_are_upscaled(live_server):
    url, _scn, spec, _store = live_server
    client = FvvClient(url, view=5, from_start=True)  # interpolated view
    client.run(max_segments=1)
    frame = client.latest_frame()
    assert (frame.width, frame.height) == (spec.width, spec.height)


def test_live_mode_follows_edge(live_server):
    url, _scn, _spec, _store = live_server
    client = FvvClient(url, view=4, from_start=False)
    stats = client.run()
    assert stats.segment_downloads >= 1
    assert len(stats.decode_log) >= 6


def test_ui_bridge_endpoints(live_server):
    url, _scn, _spec, _store = live_server
    client = FvvClient(url, view=4, from_start=True)
    ui = UiServer(client, port=0).start()
    try:
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(ui.url + "/frame")
        assert err.value.code == 503  # nothing decoded yet
        client.run(max_segments=2)
        png = urllib.request.urlopen(ui.url + "/frame").read()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
        state = json.loads(urllib.request.urlopen(ui.url + "/state").read())
        assert state["view"] == 4 and state["cluster"] == 1
        assert state["clamped"] is False
        req = urllib.request.Request(ui.url + "/view",
                                     data=json.dumps({"index": 6}).encode(),
                                     method="POST")
        assert json.loads(urllib.request.urlopen(req).read()) == {"view": 6}
        assert client.desired_view == 6
        bad = urllib.request.Request(ui.url + "/view",
                                     data=json.dumps({"index": 999}).encode(),
                                     method="POST")
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(bad)
        assert err.value.code == 400
        assert json.loads(err.value.read())["valid_range"] == [0, 12]
    finally:
        ui.stop()


def test_frame_png_conversions(rng):
    from fvv.frame import PixelFormat, frame_from_planes, gray

    g = gray(rng.integers(0, 256, (16, 16), dtype=np.uint8))
    assert frame_to_rgb(g).shape == (16, 16, 3)
    y = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    u = np.full((8, 8), 128, np.uint8)
    v = np.full((8, 8), 128, np.uint8)
    yuv = frame_from_planes([y, u, v], PixelFormat.YUV420)
    rgb = frame_to_rgb(yuv)
    assert np.array_equal(rgb[..., 0], y)  # neutral chroma keeps luma
    assert frame_to_png(yuv)[:4] == b"\x89PNG"[:4]


def test_fetch_retries_then_fails():
    calls = []

    def failing_get(url):
        calls.append(url)
        raise OSError("refused")

    client = FvvClient("http://127.0.0.1:1", http_get=failing_get)
    from fvv.client.player import ClientError

    with pytest.raises(ClientError):
        client._fetch("/lookup.json")
    assert len(calls) == 3
