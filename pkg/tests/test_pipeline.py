import hashlib

import numpy as np
import pytest
from PIL import Image

from dronetile.backend import BackendError, MockBackend, MockDetectorConfig
from dronetile.evaluation import GroundTruth
from dronetile.geometry import BoundingBox, Detection
from dronetile.ingest import DetectionRecord, ManifestEntry
from dronetile.pipeline import (
    PipelineConfig,
    VideoInput,
    draw_annotations,
    render_annotations,
    run_pipeline,
)
from dronetile.synth import Scene, TrackSpec

SCENE = Scene((640, 480), 24, [TrackSpec((100, 100), (6, 2), (24, 16)), TrackSpec((500, 300), (-4, 3), (30, 20)),
                               TrackSpec((300, 400), (2, -1), (14, 14), label="bird")])


def truth():
    return {"v": {t: SCENE.boxes_at(t) for t in range(SCENE.n_frames)}}


def video():
    return VideoInput("v", SCENE.frame_size, [(t, None) for t in range(SCENE.n_frames)])


class DroppingBackend(MockBackend):
    """Mock whose detections vanish on every ``k``-th interior frame."""

    def __init__(self, truth, k, cfg=MockDetectorConfig()):
        super().__init__(truth, cfg)
        self.k = k

    def detect(self, video, frame, image_path, window):
        if frame % self.k == 0 and 0 < frame < SCENE.n_frames - 1:
            return []
        return super().detect(video, frame, image_path, window)


class FailingBackend(MockBackend):
    def detect(self, video, frame, image_path, window):
        if frame == 5:
            raise BackendError("boom")
        return super().detect(video, frame, image_path, window)


def test_perfect_mock_scores_one():
    result = run_pipeline([video()], MockBackend(truth()), gt={"v": SCENE.ground_truth("v")})
    assert result.report.average_ap50 == 1.0
    assert all(r.label == "drone" for r in result.records)


@pytest.mark.parametrize("whole_only", [False, True])
def test_deleted_frames_recovered_exactly(whole_only):
    gt = SCENE.ground_truth("v")
    off = run_pipeline([video()], DroppingBackend(truth(), 4), PipelineConfig(interpolate=False, whole_only=whole_only), gt={"v": gt})
    on = run_pipeline([video()], DroppingBackend(truth(), 4), PipelineConfig(whole_only=whole_only), gt={"v": gt})
    assert off.report.average_ap50 < 1.0
    for t in (4, 8, 12, 16, 20):
        got = sorted(d.box for d in on.videos["v"].frames[t])
        assert got == sorted(gt.entries[t])
        assert all(d.source == "interpolated" for d in on.videos["v"].frames[t])
        assert off.videos["v"].frames.get(t, []) == []


def test_empty_input():
    result = run_pipeline([], MockBackend({}))
    assert result.records == [] and result.videos == {}


def test_backend_failure_aborts_video():
    result = run_pipeline([video()], FailingBackend(truth()))
    assert result.aborted == ["v"] and result.records == []


def test_skip_failed_frames():
    result = run_pipeline([video()], FailingBackend(truth()), PipelineConfig(skip_failed_frames=True, interpolate=False))
    assert result.aborted == []
    assert [f[1] for f in result.failures] == [5]
    assert 5 not in {r.frame for r in result.records}


def test_jobs_do_not_change_output():
    cfg = MockDetectorConfig(miss_prob=0.2, fp_rate=0.5, jitter_px=2, score_range=(0.3, 1.0), rng_seed=7)
    a = run_pipeline([video()], MockBackend(truth(), cfg), PipelineConfig(jobs=1))
    b = run_pipeline([video()], MockBackend(truth(), cfg), PipelineConfig(jobs=6))
    assert a.records == b.records


IMG = np.full((60, 80, 3), 100, np.uint8)


class TestRender:
    def test_no_detections_is_identity(self):
        assert np.array_equal(draw_annotations(IMG, []), IMG)

    def test_one_outline(self):
        d = Detection(BoundingBox(10, 10, 30, 25), "drone", 0.8)
        out = draw_annotations(IMG, [d], show_scores=False, thickness=1)
        ys, xs = np.nonzero((out != IMG).any(axis=2))
        assert (xs.min(), xs.max(), ys.min(), ys.max()) == (10, 29, 10, 24)
        perimeter = 2 * (20 + 15) - 4
        assert len(xs) == perimeter
        assert not (out[11:24, 11:29] != IMG[11:24, 11:29]).any()

    def test_interpolated_dashed(self):
        solid = Detection(BoundingBox(10, 10, 50, 40), "drone", 0.8)
        dashed = Detection(BoundingBox(10, 10, 50, 40), "drone", 0.8, source="interpolated")
        n = lambda d: int((draw_annotations(IMG, [d], show_scores=False) != IMG).any(axis=2).sum())
        assert 0 < n(dashed) < n(solid)

    def test_files(self, tmp_path):
        Image.fromarray(IMG).save(tmp_path / "f0.png")
        Image.fromarray(IMG[:30]).save(tmp_path / "f1.png")
        frames = [ManifestEntry("v", 0, str(tmp_path / "f0.png")), ManifestEntry("v", 1, str(tmp_path / "f1.png")),
                  ManifestEntry("v", 2, str(tmp_path / "missing.png"))]
        recs = [DetectionRecord("v", 0, "drone", 5, 5, 20, 20, 0.9, "full"),
                DetectionRecord("v", 1, "drone", 5, 25, 20, 20, 0.9, "full")]
        gt = {"v": GroundTruth("v", {0: [BoundingBox(40, 20, 60, 40)]})}
        errors = render_annotations(frames, recs, tmp_path / "a", gt)
        assert [p for p, _ in errors] == [str(tmp_path / "f1.png"), str(tmp_path / "missing.png")]
        render_annotations(frames, recs, tmp_path / "b", gt)
        digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
        assert digest(tmp_path / "a/f0.png") == digest(tmp_path / "b/f0.png")
        assert not (tmp_path / "a/f1.png").exists()
