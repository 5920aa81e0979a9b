"""Reinhard-style color normalization in the decorrelated l-alpha-beta space.

RGB is mapped to LMS cone space, log10-compressed, and rotated into the
l/alpha/beta axes; per-channel mean and spread are then transferred from a
reference image by an affine map and the result converted back to RGB.

The RGB->LMS matrix is the published one; the LMS->RGB direction uses its
numerical inverse so a round trip without a stat change is exact to floating
point (the published inverse is rounded to 4 decimals and would leave ~1e-3
residue).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateImage
from .raster import check_image

_RGB_TO_LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
_LMS_TO_RGB = np.linalg.inv(_RGB_TO_LMS)

_LMS_LOG_TO_LAB = np.diag([1.0 / np.sqrt(3.0), 1.0 / np.sqrt(6.0), 1.0 / np.sqrt(2.0)]) @ np.array(
    [[1.0, 1.0, 1.0], [1.0, 1.0, -2.0], [1.0, -1.0, 0.0]]
)
_LAB_TO_LMS_LOG = np.linalg.inv(_LMS_LOG_TO_LAB)

# floor before the log keeps black pixels finite; the round-trip error this
# introduces is ~1e-6 in channel units
_LMS_FLOOR = 1e-6


@dataclass(frozen=True)
class ColorStats:
    """Per-channel mean and standard deviation in l-alpha-beta space."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def to_json(self) -> str:
        return json.dumps({"mean": list(self.mean), "std": list(self.std)}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ColorStats":
        obj = json.loads(text)
        return cls(mean=tuple(float(v) for v in obj["mean"]), std=tuple(float(v) for v in obj["std"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ColorStats":
        return cls.from_json(Path(path).read_text())


def rgb_to_lab(image) -> np.ndarray:
    img = check_image(image)
    lms = img @ _RGB_TO_LMS.T
    lms = np.log10(np.maximum(lms, _LMS_FLOOR))
    return lms @ _LMS_LOG_TO_LAB.T


def lab_to_rgb(lab) -> np.ndarray:
    lms = np.power(10.0, np.asarray(lab, dtype=float) @ _LAB_TO_LMS_LOG.T)
    rgb = lms @ _LMS_TO_RGB.T
    return np.clip(rgb, 0.0, 1.0)


def compute_color_stats(image) -> ColorStats:
    """Mean/std of each l-alpha-beta channel over all pixels."""
    lab = rgb_to_lab(image)
    mean = lab.reshape(-1, 3).mean(axis=0)
    std = lab.reshape(-1, 3).std(axis=0)
    if (std == 0.0).any():
        raise DegenerateImage("constant image: a color channel has zero variance")
    return ColorStats(mean=tuple(mean.tolist()), std=tuple(std.tolist()))


def reinhard_normalize(image, reference: ColorStats) -> np.ndarray:
    """Match the image's l-alpha-beta channel statistics to the reference."""
    src = compute_color_stats(image)
    lab = rgb_to_lab(image)
    mu_s = np.array(src.mean)
    sd_s = np.array(src.std)
    mu_r = np.array(reference.mean)
    sd_r = np.array(reference.std)
    lab = (lab - mu_s) * (sd_r / sd_s) + mu_r
    return lab_to_rgb(lab)
