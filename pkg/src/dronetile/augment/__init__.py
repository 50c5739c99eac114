"""Copy-paste augmentation of detection training sets."""

from .color import delta_e, srgb_to_lab, srgb_to_lab_array
from .dataset import AugmentReport, augment_dataset, image_seed
from .patches import EmptyPatchError, PatchAsset, TransformConfig, load_patch_library, transform_patch
from .placement import AugmentConfig, Placement, place_instances

__all__ = [
    "AugmentConfig",
    "AugmentReport",
    "EmptyPatchError",
    "PatchAsset",
    "Placement",
    "TransformConfig",
    "augment_dataset",
    "delta_e",
    "image_seed",
    "load_patch_library",
    "place_instances",
    "srgb_to_lab",
    "srgb_to_lab_array",
    "transform_patch",
]
