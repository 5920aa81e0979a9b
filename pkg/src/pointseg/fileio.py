"""On-disk formats: raw regression masks, PNG rasters, point-set JSON and
model checkpoints.

* regression masks: magic ``RMSK``, little-endian u32 height and width, then
  row-major float32 values (sentinel stored as exactly -1.0)
* tri-state labels: 8-bit grayscale PNG with 0 = background, 128 = ignored,
  255 = nucleus
* instance maps: 16-bit grayscale PNG, pixel value = instance id
* images: 8-bit RGB PNG
* points: JSON ``{"points": [[row, col], ...]}``
* model checkpoints: JSON with layer shapes and row-major weight arrays,
  floats written with 17 significant digits so they round-trip exactly
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .model import PixelModel
from .raster import as_points

RMSK_MAGIC = b"RMSK"


def save_regression_mask(path: str | Path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=np.float32)
    if mask.ndim != 2:
        raise DataError("regression mask must be 2-D")
    with open(path, "wb") as fh:
        fh.write(RMSK_MAGIC)
        fh.write(struct.pack("<II", mask.shape[0], mask.shape[1]))
        fh.write(mask.astype("<f4").tobytes(order="C"))


def load_regression_mask(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != RMSK_MAGIC:
        raise DataError(f"{path}: not a regression mask file")
    h, w = struct.unpack("<II", raw[4:12])
    data = np.frombuffer(raw[12:], dtype="<f4")
    if data.size != h * w:
        raise DataError(f"{path}: expected {h * w} values, found {data.size}")
    return data.reshape(h, w).astype(float)


def save_image_png(path: str | Path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    Image.fromarray(np.rint(arr * 255.0).astype(np.uint8)).save(path, format="PNG")


def load_image_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=float)
    return arr / 255.0


def save_instance_png(path: str | Path, instances: np.ndarray) -> None:
    arr = np.asarray(instances)
    if arr.min() < 0 or arr.max() > np.iinfo(np.uint16).max:
        raise DataError("instance ids must fit in uint16")
    Image.fromarray(arr.astype(np.uint16)).save(path, format="PNG")


def load_instance_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img)
    return arr.astype(np.int32)


def save_tristate_png(path: str | Path, label: np.ndarray) -> None:
    label = np.asarray(label)
    out = np.full(label.shape, 128, dtype=np.uint8)
    out[label == 0] = 0
    out[label == 1] = 255
    Image.fromarray(out).save(path, format="PNG")


def load_tristate_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img)
    label = np.full(arr.shape, -1, dtype=np.int8)
    label[arr == 0] = 0
    label[arr == 255] = 1
    if not np.isin(arr, [0, 128, 255]).all():
        raise DataError(f"{path}: unexpected gray level in tri-state label")
    return label


def save_points_json(path: str | Path, points) -> None:
    pts = as_points(points)
    payload = {"points": [[float(r), float(c)] for r, c in pts]}
    Path(path).write_text(json.dumps(payload) + "\n")


def load_points_json(path: str | Path) -> np.ndarray:
    try:
        obj = json.loads(Path(path).read_text())
        return as_points(obj["points"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed points file ({exc})") from exc


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def save_model_json(path: str | Path, model: PixelModel) -> None:
    parts = ['{"format": "pointseg-mlp", "layers": {']
    entries = []
    for name, value in model.params().items():
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        shape = list(arr.shape) if name != "b2" else []
        data = ", ".join(_fmt17(v) for v in arr.ravel(order="C"))
        entries.append(f'"{name}": {{"shape": {json.dumps(shape)}, "data": [{data}]}}')
    parts.append(", ".join(entries))
    parts.append("}}")
    Path(path).write_text("".join(parts) + "\n")


def load_model_json(path: str | Path) -> PixelModel:
    try:
        obj = json.loads(Path(path).read_text())
        layers = obj["layers"]

        def arr(name):
            entry = layers[name]
            data = np.asarray(entry["data"], dtype=float)
            return data.reshape(entry["shape"]) if entry["shape"] else float(data[0])

        return PixelModel(arr("w1"), arr("b1"), arr("w2"), arr("b2"))
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed model checkpoint ({exc})") from exc


def save_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path: str | Path):
    return json.loads(Path(path).read_text())
