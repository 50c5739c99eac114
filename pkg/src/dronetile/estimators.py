"""
scikit-learn style wrappers
===========================

The functional API does the work; these classes expose it with
``get_params``/``set_params``, constructor-only hyperparameters, and
``fit``/``transform``/``predict``, so components can be cloned, grid
searched over thresholds, or dropped into larger sklearn tooling.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .augment import AugmentConfig, PatchAsset, TransformConfig, place_instances
from .backend import Backend
from .evaluation import GroundTruth, evaluate
from .fusion import FusionConfig, fuse_frame
from .pipeline import PipelineConfig, VideoInput, run_pipeline
from .temporal import TemporalConfig, VideoDetections, interpolate_gaps
from .tiling import plan_tiles
from .validation import (
    as_generator,
    check_boxes,
    check_fraction,
    check_image,
    check_labels,
    check_positive_int,
    check_unit_interval,
)


def _fusion_config(est) -> FusionConfig:
    return FusionConfig(
        nms_iou=check_unit_interval(est.nms_iou, "nms_iou"),
        score_threshold=check_unit_interval(est.score_threshold, "score_threshold"),
        report_labels=check_labels(est.report_labels),
        class_aware=bool(est.class_aware),
    )


def _temporal_config(est) -> TemporalConfig:
    return TemporalConfig(
        window=check_positive_int(est.window, "window"),
        match_iou=check_unit_interval(est.match_iou, "match_iou"),
        border_margin=float(est.border_margin),
        veto_iou=check_unit_interval(est.veto_iou, "veto_iou"),
        confidence_divisor=float(est.confidence_divisor),
    )


class TileFuser(BaseEstimator, TransformerMixin):
    """Fuse per-window detections of frames of one size.

    ``fit`` takes the frame size ``(width, height)`` and builds ``plan_``;
    ``transform`` maps a list of ``{window name: detections}`` dicts to a
    list of fused detection lists.
    """

    def __init__(self, fraction=0.55, whole_only=False, nms_iou=0.1, score_threshold=0.375,
                 report_labels=("drone",), class_aware=True):
        self.fraction = fraction
        self.whole_only = whole_only
        self.nms_iou = nms_iou
        self.score_threshold = score_threshold
        self.report_labels = report_labels
        self.class_aware = class_aware

    def fit(self, X, y=None):
        width, height = (int(v) for v in X)
        plan = plan_tiles(width, height, check_fraction(self.fraction))
        self.plan_ = plan.whole_only() if self.whole_only else plan
        self.config_ = _fusion_config(self)
        return self

    def transform(self, X):
        check_is_fitted(self, "plan_")
        return [fuse_frame(per_source, self.plan_, self.config_) for per_source in X]


class GapInterpolator(BaseEstimator, TransformerMixin):
    """Temporal gap filling over whole videos; stateless, so ``fit`` only validates."""

    def __init__(self, window=6, match_iou=0.1, border_margin=0.02, veto_iou=0.3, confidence_divisor=2.0):
        self.window = window
        self.match_iou = match_iou
        self.border_margin = border_margin
        self.veto_iou = veto_iou
        self.confidence_divisor = confidence_divisor

    def fit(self, X=None, y=None):
        self.config_ = _temporal_config(self)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        if isinstance(X, VideoDetections):
            return interpolate_gaps(X, self.config_)
        return [interpolate_gaps(v, self.config_) for v in X]


class MultiScaleDetector(BaseEstimator):
    """The whole inference pipeline around a detector backend.

    ``predict`` takes :class:`~dronetile.pipeline.VideoInput` objects and
    returns ``{video_id: VideoDetections}``; ``score`` returns the average
    AP50 against ``{video_id: GroundTruth}``.
    """

    def __init__(self, backend: Backend | None = None, fraction=0.55, whole_only=False, nms_iou=0.1,
                 score_threshold=0.375, report_labels=("drone",), class_aware=True, interpolate=True,
                 window=6, match_iou=0.1, border_margin=0.02, veto_iou=0.3, confidence_divisor=2.0,
                 n_jobs=1):
        self.backend = backend
        self.fraction = fraction
        self.whole_only = whole_only
        self.nms_iou = nms_iou
        self.score_threshold = score_threshold
        self.report_labels = report_labels
        self.class_aware = class_aware
        self.interpolate = interpolate
        self.window = window
        self.match_iou = match_iou
        self.border_margin = border_margin
        self.veto_iou = veto_iou
        self.confidence_divisor = confidence_divisor
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if self.backend is None:
            raise ValueError("MultiScaleDetector needs a backend")
        self.config_ = PipelineConfig(
            fraction=check_fraction(self.fraction),
            whole_only=bool(self.whole_only),
            fusion=_fusion_config(self),
            temporal=_temporal_config(self),
            interpolate=bool(self.interpolate),
            jobs=check_positive_int(self.n_jobs, "n_jobs"),
        )
        return self

    def predict(self, X: Sequence[VideoInput]) -> dict[str, VideoDetections]:
        check_is_fitted(self, "config_")
        result = run_pipeline(list(X), self.backend, self.config_)
        self.failures_ = result.failures
        return result.videos

    def score(self, X: Sequence[VideoInput], y: Mapping[str, GroundTruth]) -> float:
        return evaluate(self.predict(X), y).average_ap50


class CopyPasteAugmenter(BaseEstimator):
    """Copy-paste augmentation with a fitted patch library.

    ``fit`` stores the patches; ``transform`` takes ``(image, existing)``
    pairs, where ``existing`` is a list of ``(box, label)``, and returns
    ``(augmented image, placements)`` pairs.
    """

    def __init__(self, scale_range=(0.02, 0.15), max_instances=3, delta_e_max=60.0,
                 max_placement_attempts=50, transforms: TransformConfig | None = None, random_state=None):
        self.scale_range = scale_range
        self.max_instances = max_instances
        self.delta_e_max = delta_e_max
        self.max_placement_attempts = max_placement_attempts
        self.transforms = transforms
        self.random_state = random_state

    def fit(self, X: Sequence[PatchAsset], y=None):
        assets = list(X)
        if not assets:
            raise ValueError("cannot fit on an empty patch library")
        for a in assets:
            if not isinstance(a, PatchAsset):
                raise TypeError(f"expected PatchAsset, got {type(a).__name__}")
        self.assets_ = assets
        self.config_ = AugmentConfig(
            scale_range=tuple(self.scale_range),
            max_instances=int(self.max_instances),
            delta_e_max=float(self.delta_e_max),
            max_placement_attempts=int(self.max_placement_attempts),
            transforms=self.transforms if self.transforms is not None else TransformConfig(),
        )
        self.rng_ = as_generator(self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "assets_")
        out = []
        for image, existing in X:
            image = check_image(image)
            pairs = [(b, lab) for b, lab in zip(check_boxes([b for b, _ in existing]), [lab for _, lab in existing])]
            out.append(place_instances(image, pairs, self.assets_, self.config_, self.rng_))
        return out
