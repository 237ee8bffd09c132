import pytest

from fvv.playlist import (Playlist, PlaylistFormatError, SequencingError,
                          end_playlist, new_playlist, parse_playlist,
                          render_playlist, rotate_playlist, segment_uri)


def test_first_rotation_renders_fresh_playlist():
    p = new_playlist(2.0)
    p, text = rotate_playlist(p, 0, 2.0)
    assert text == ("#EXTM3U\n"
                    "#EXT-X-VERSION:3\n"
                    "#EXT-X-TARGETDURATION:2\n"
                    "#EXT-X-MEDIA-SEQUENCE:0\n"
                    "#EXTINF:2.000,\n"
                    "seg00000.ts\n")


def test_eight_rotations_window_six():
    p = new_playlist(2.0)
    for seq in range(8):
        p, text = rotate_playlist(p, seq, 2.0)
    assert p.media_sequence == 2
    assert [e.uri for e in p.window] == [segment_uri(s) for s in range(2, 8)]
    assert "seg00002.ts" in text and "seg00007.ts" in text
    assert "seg00001.ts" not in text
    assert "#EXT-X-MEDIA-SEQUENCE:2" in text


def test_eviction_count_matches_media_sequence():
    p = new_playlist(1.0, window_size=3)
    for seq in range(10):
        p, _ = rotate_playlist(p, seq, 1.0)
        assert len(p.window) <= 3
    assert p.media_sequence == 7  # 10 added, 3 retained


def test_non_consecutive_sequence_rejected():
    p = new_playlist(2.0)
    p, _ = rotate_playlist(p, 0, 2.0)
    with pytest.raises(SequencingError):
        rotate_playlist(p, 2, 2.0)


def test_endlist_rendering_and_refusal():
    p = new_playlist(2.0)
    p, _ = rotate_playlist(p, 0, 2.0)
    p, text = end_playlist(p)
    assert text.rstrip().endswith("#EXT-X-ENDLIST")
    with pytest.raises(SequencingError):
        rotate_playlist(p, 1, 2.0)


def test_parse_round_trip_equals_internal_model():
    p = new_playlist(2.0, cluster_id=4)
    for seq in range(8):
        p, text = rotate_playlist(p, seq, 2.0)
    assert parse_playlist(text) == p
    p, text = end_playlist(p)
    assert parse_playlist(text) == p


def test_parse_empty_window():
    text = render_playlist(new_playlist(2.0))
    model = parse_playlist(text)
    assert model.window == ()
    assert model.media_sequence == 0


def test_parse_requires_header():
    with pytest.raises(PlaylistFormatError):
        parse_playlist("#EXT-X-VERSION:3\n")


def test_parse_malformed_extinf_reports_line():
    text = "#EXTM3U\n#EXT-X-VERSION:3\n#EXTINF:abc,\nseg00000.ts\n"
    with pytest.raises(PlaylistFormatError) as err:
        parse_playlist(text)
    assert err.value.line == 3


def test_parse_retains_unknown_tags():
    text = ("#EXTM3U\n#EXT-X-VERSION:3\n#EXT-X-TARGETDURATION:2\n"
            "#EXT-X-MEDIA-SEQUENCE:0\n#EXT-X-FOO:bar\n"
            "#EXTINF:2.000,\nseg00000.ts\n")
    model = parse_playlist(text)
    assert model.extras == ("#EXT-X-FOO:bar",)
    assert [e.uri for e in model.window] == ["seg00000.ts"]


def test_parse_uri_without_extinf_rejected():
    with pytest.raises(PlaylistFormatError):
        parse_playlist("#EXTM3U\nseg00000.ts\n")
