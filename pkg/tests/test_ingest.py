import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dronetile.evaluation import GroundTruth
from dronetile.geometry import BoundingBox, Detection
from dronetile.ingest import (
    DetectionRecord,
    ManifestEntry,
    NormalizedLabel,
    ParseError,
    canonical_records,
    group_manifest,
    parse_detection_line,
    parse_gt_file,
    parse_kv_config,
    parse_manifest,
    parse_normalized_label,
    parse_normalized_records,
    read_detections,
    read_gt_dir,
    serialize_gt,
    serialize_manifest,
    serialize_normalized_records,
    subsample_frames,
    write_detections,
)

EXAMPLE = '{"video":"a","frame":0,"label":"drone","x":1,"y":2,"w":3,"h":4,"score":0.5,"source":"full"}'


class TestGroundTruth:
    def test_example(self):
        gt = parse_gt_file("120 10 20 30 40")
        assert gt.entries == {120: [BoundingBox(10, 20, 40, 60)]}

    def test_empty(self):
        assert parse_gt_file("").entries == {}

    def test_comments_and_grouping(self):
        gt = parse_gt_file("# header\n\n3 0 0 1 1\n1 5 5 2 2  # trailing\n3 9 9 1 1\n")
        assert list(gt.entries) == [1, 3]
        assert len(gt.entries[3]) == 2

    @pytest.mark.parametrize("line,needle", [
        ("12 10 20 -5 40", "negative width"),
        ("12 10 20 5 -1", "negative height"),
        ("12 10 20 5", "expected 5 fields"),
        ("12 ten 20 5 5", "not a number"),
        ("1.5 0 0 1 1", "not an integer"),
        ("1 nan 0 1 1", "not finite"),
        ("1 0 inf 1 1", "not finite"),
        ("-1 0 0 1 1", "negative frame"),
    ])
    def test_errors(self, line, needle):
        with pytest.raises(ParseError) as exc:
            parse_gt_file("# ok\n" + line)
        assert exc.value.lineno == 2
        assert needle in str(exc.value)

    def test_dir(self, tmp_path):
        (tmp_path / "v1.txt").write_text("0 1 1 2 2\n")
        (tmp_path / "v2.txt").write_text("")
        gts = read_gt_dir(tmp_path)
        assert sorted(gts) == ["v1", "v2"] and gts["v1"].video_id == "v1"

    def test_dir_error_names_file(self, tmp_path):
        (tmp_path / "bad.txt").write_text("0 1 1 -2 2\n")
        with pytest.raises(ParseError, match="bad.txt"):
            read_gt_dir(tmp_path)


class TestNormalized:
    def test_example(self):
        assert parse_normalized_label("0 0.5 0.5 0.1 0.2", 1000, 500) == [("drone", BoundingBox(450, 200, 550, 300))]

    def test_zero_area_bird(self):
        assert parse_normalized_label("1 0.0 0.0 0.0 0.0", 640, 480) == [("bird", BoundingBox(0, 0, 0, 0))]

    @pytest.mark.parametrize("line", ["2 0.5 0.5 0.1 0.1", "0 1.5 0.5 0.1 0.1", "0 0.5 0.5 -0.1 0.1", "0 0.5 0.5 nan 0.1",
                                      "0 0.5 0.5 0.1", "x 0.5 0.5 0.1 0.1"])
    def test_rejects(self, line):
        with pytest.raises(ParseError):
            parse_normalized_label(line, 100, 100)

    def test_from_box(self):
        r = NormalizedLabel.from_box("bird", BoundingBox(450, 200, 550, 300), 1000, 500)
        assert r == NormalizedLabel(1, 0.5, 0.5, 0.1, 0.2)


unit = st.floats(0, 1, allow_nan=False)


@given(st.lists(st.builds(NormalizedLabel, st.sampled_from([0, 1]), unit, unit, unit, unit), max_size=20))
def test_normalized_round_trip(records):
    text = serialize_normalized_records(records)
    assert parse_normalized_records(text) == records
    assert serialize_normalized_records(parse_normalized_records(text)) == text


coord = st.floats(0, 4000, allow_nan=False)


@st.composite
def gts(draw):
    entries = {}
    for t in draw(st.lists(st.integers(0, 10_000), unique=True, max_size=8)):
        entries[t] = [BoundingBox.from_xywh(*draw(st.tuples(coord, coord, coord, coord))) for _ in range(draw(st.integers(1, 3)))]
    return GroundTruth("v", entries)


@given(gts())
def test_gt_round_trip(gt):
    text = serialize_gt(gt)
    back = parse_gt_file(text, "v")
    assert back == gt
    assert serialize_gt(back) == text


class TestDetections:
    def test_example(self):
        r = parse_detection_line(EXAMPLE)
        assert r == DetectionRecord("a", 0, "drone", 1.0, 2.0, 3.0, 4.0, 0.5, "full")
        assert r.to_detection().box == BoundingBox(1, 2, 4, 6)

    def test_missing_field(self):
        with pytest.raises(ParseError, match="missing"):
            read_detections(io.StringIO(EXAMPLE + "\n" + '{"frame":0}\n'))
        try:
            read_detections(io.StringIO(EXAMPLE + "\n" + '{"frame":0}\n'))
        except ParseError as exc:
            assert exc.lineno == 2

    def test_strict_vs_lenient(self):
        line = EXAMPLE[:-1] + ', "track": 7}'
        with pytest.raises(ParseError, match="unknown field"):
            parse_detection_line(line)
        r = parse_detection_line(line, lenient=True)
        assert r.extra == {"track": 7}
        assert json.loads(r.to_json())["track"] == 7

    @pytest.mark.parametrize("patch", [
        {"score": 1.5}, {"w": -1}, {"label": "plane"}, {"source": "tile9"}, {"frame": 1.5}, {"frame": True},
        {"x": "1"}, {"video": 3}, {"frame": -1},
    ])
    def test_invalid_values(self, patch):
        obj = json.loads(EXAMPLE)
        obj.update(patch)
        with pytest.raises(ParseError):
            parse_detection_line(json.dumps(obj), 1)

    @pytest.mark.parametrize("bad", ["{", "[1,2]", EXAMPLE.replace('"x":1', '"x":NaN'),
                                     EXAMPLE.replace('"x":1', '"x":Infinity')])
    def test_malformed(self, bad):
        with pytest.raises(ParseError):
            parse_detection_line(bad, 1)

    def test_score_written_with_six_decimals(self):
        r = DetectionRecord("a", 0, "drone", 0, 0, 1, 1, 0.5, "full")
        assert '"score": 0.500000' in r.to_json()

    def test_blank_lines_skipped(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(EXAMPLE + "\n\n" + EXAMPLE + "\n")
        assert len(read_detections(p)) == 2

    def test_from_detection_quantizes(self):
        d = Detection(BoundingBox(0.1, 0.2, 0.7, 0.9), "drone", 1 / 3, 4, "tile2")
        r = DetectionRecord.from_detection("v", d)
        assert r.score == 0.333333
        # no float w satisfies 0.2 + w == 0.9, so only closeness is possible here
        assert r.to_detection().box.as_tuple() == pytest.approx(d.box.as_tuple(), abs=1e-15)
        exact = Detection(BoundingBox(0.1, 0.2, 0.7, 0.5), "drone", 0.5, 4, "tile2")
        assert DetectionRecord.from_detection("v", exact).to_detection() == exact

    def test_canonical_order(self):
        a = DetectionRecord("b", 0, "drone", 0, 0, 1, 1, 0.5, "full")
        b = DetectionRecord("a", 1, "drone", 0, 0, 1, 1, 0.5, "full")
        c = DetectionRecord("a", 1, "drone", 0, 0, 1, 1, 0.9, "full")
        assert canonical_records([a, b, c]) == [c, b, a]


@st.composite
def records(draw):
    return DetectionRecord(
        draw(st.text("abcxyz_-0123456789", min_size=1, max_size=8)),
        draw(st.integers(0, 100_000)),
        draw(st.sampled_from(["drone", "bird"])),
        draw(coord), draw(coord), draw(coord), draw(coord),
        draw(st.floats(0, 1)),
        draw(st.sampled_from(["full", "tile0", "tile1", "tile2", "tile3", "interpolated"])),
    )


@given(st.lists(records(), max_size=30))
def test_detection_round_trip(recs):
    buf = io.StringIO()
    write_detections(buf, recs)
    back = read_detections(io.StringIO(buf.getvalue()))
    assert back == recs
    again = io.StringIO()
    write_detections(again, back)
    assert again.getvalue() == buf.getvalue()


class TestManifest:
    def test_parse_and_relative_paths(self, tmp_path):
        entries = parse_manifest("v 3 frames/a.png\nv 1 /abs/b.png\n", tmp_path)
        assert entries[0].path == str(tmp_path / "frames/a.png")
        assert entries[1].path == "/abs/b.png"
        grouped = group_manifest(entries)
        assert [e.frame for e in grouped["v"]] == [1, 3]

    def test_round_trip(self, tmp_path):
        entries = [ManifestEntry("v", 0, str(tmp_path / "f0.png")), ManifestEntry("w", 5, str(tmp_path / "x/f5.png"))]
        text = serialize_manifest(entries, tmp_path)
        assert text == "v 0 f0.png\nw 5 x/f5.png\n"
        assert parse_manifest(text, tmp_path) == entries

    @pytest.mark.parametrize("text", ["v 0\n", "v x a.png\n", "v -1 a.png\n"])
    def test_errors(self, text):
        with pytest.raises(ParseError):
            parse_manifest(text)

    def test_duplicate_frame(self):
        with pytest.raises(ParseError):
            group_manifest(parse_manifest("v 0 a.png\nv 0 b.png\n"))


class TestSubsample:
    def test_every_fifth(self):
        assert subsample_frames(list(range(21)), 5) == [0, 5, 10, 15, 20]

    def test_identity_and_empty(self):
        assert subsample_frames([3, 4, 9], 1) == [3, 4, 9]
        assert subsample_frames([], 5) == []

    def test_positions_not_values(self):
        assert subsample_frames([1, 2, 7, 8, 20, 21], 2) == [1, 7, 20]

    def test_zero_stride(self):
        with pytest.raises(ValueError):
            subsample_frames([1, 2], 0)


def test_kv_config():
    cfg = parse_kv_config("# defaults\nnms-iou = 0.2\nscore: 0.4\n")
    assert cfg == {"nms_iou": "0.2", "score": "0.4"}
    with pytest.raises(ParseError):
        parse_kv_config("no separator here\n")
