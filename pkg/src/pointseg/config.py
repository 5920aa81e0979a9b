"""Pipeline configuration: a flat dotted-key namespace with file and
command-line overrides.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed. Values are parsed by the declared type of each key. The same keys
can be overridden on the command line with ``--set key=value``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .crf import CrfParams
from .detection import DetectionConfig
from .errors import DataError
from .model import TrainConfig
from .synth import SynthConfig


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_range(text: str) -> tuple[float, float]:
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return parts[0], parts[1]


def _parse_color(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError(f"expected three numbers, got {text!r}")
    return parts[0], parts[1], parts[2]


# key -> (default, parser)
DEFAULTS: dict[str, tuple] = {
    "data.root": ("data", str),
    "out.dir": ("out", str),
    "ratio": (0.1, float),
    "seeds.points": (0, int),
    "seeds.model": (0, int),
    "seeds.labels": (0, int),
    "preprocess.normalize": (True, _parse_bool),
    # path to a saved ColorStats JSON; empty means the first training image
    "preprocess.reference": ("", str),
    "detect.r1": (3.0, float),
    "detect.r2": (6.0, float),
    "detect.sigma": (1.5, float),
    "detect.w_pos": (10.0, float),
    "detect.w_bg": (1.0, float),
    "detect.threshold": (0.4, float),
    "detect.bg_low": (0.1, float),
    "detect.bg_high": (0.7, float),
    "detect.rounds": (3, int),
    "detect.strategy": ("ST-bg", str),
    "detect.warm_start": ("initial", str),
    "detect.epochs": (80, int),
    "detect.lr": (0.05, float),
    "detect.hidden": (16, int),
    "seg.points": ("detected", str),
    "seg.alpha": (0.5, float),
    "seg.epochs": (100, int),
    "seg.lr": (0.05, float),
    "seg.hidden": (16, int),
    "seg.threshold": (0.5, float),
    "crf.sigma_pq": (9.0, float),
    "crf.sigma_rgb": (0.2, float),
    # the pairwise loss is unnormalized, so beta absorbs the pixel-count
    # scale; this value is tuned for the synthetic benchmark images
    "crf.beta": (1e-7, float),
    "crf.epochs": (20, int),
    "crf.mode": ("filtered", str),
    "eval.radius": (5.0, float),
    "synth.train": (20, int),
    "synth.val": (5, int),
    "synth.test": (5, int),
    "synth.seed": (0, int),
    "synth.height": (128, int),
    "synth.width": (128, int),
    "synth.n_nuclei": ((36, 44), _parse_range),
    "synth.radius": ((4.0, 5.6), _parse_range),
    "synth.axis_ratio": ((0.72, 1.0), _parse_range),
    "synth.nucleus_color": ((0.42, 0.30, 0.60), _parse_color),
    "synth.background_color": ((0.85, 0.78, 0.80), _parse_color),
    "synth.color_jitter": (0.06, float),
    "synth.noise_std": (0.025, float),
    "synth.min_separation": (11.0, float),
    "synth.n_distractors": ((3, 5), _parse_range),
    "synth.distractor_radius": ((6.5, 8.5), _parse_range),
    "synth.distractor_color": ((0.10, 0.06, 0.45), _parse_color),
    "synth.distractor_margin": (9.0, float),
}


class Config:
    """Resolved configuration with typed access by dotted key."""

    def __init__(self, values: dict | None = None):
        self._values = {k: v for k, (v, _) in DEFAULTS.items()}
        if values:
            for key, val in values.items():
                self.set(key, val)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise DataError(f"unknown config key {key!r}")
        parser = DEFAULTS[key][1]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise DataError(f"bad value for {key}: {exc}") from exc
        self._values[key] = value

    def __getitem__(self, key: str):
        if key not in self._values:
            raise DataError(f"unknown config key {key!r}")
        return self._values[key]

    def update_from_file(self, path: str | Path) -> None:
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            self.set(key.strip(), value.strip())

    def update_from_pairs(self, pairs) -> None:
        for pair in pairs or []:
            if "=" not in pair:
                raise DataError(f"--set expects key=value, got {pair!r}")
            key, _, value = pair.partition("=")
            self.set(key.strip(), value.strip())

    def to_dict(self) -> dict:
        return {k: self._values[k] for k in sorted(self._values)}

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # typed sub-config views -------------------------------------------------

    def detection_config(self) -> DetectionConfig:
        return DetectionConfig(
            r1=self["detect.r1"],
            r2=self["detect.r2"],
            sigma=self["detect.sigma"],
            w_pos=self["detect.w_pos"],
            w_bg=self["detect.w_bg"],
            prob_threshold=self["detect.threshold"],
            bg_low=self["detect.bg_low"],
            bg_high=self["detect.bg_high"],
            rounds=self["detect.rounds"],
        )

    def detect_train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["detect.lr"],
            epochs=self["detect.epochs"],
            seed=self["seeds.model"],
            hidden=self["detect.hidden"],
        )

    def seg_train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["seg.lr"],
            epochs=self["seg.epochs"],
            seed=self["seeds.model"],
            hidden=self["seg.hidden"],
        )

    def crf_train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["seg.lr"],
            epochs=self["crf.epochs"],
            seed=self["seeds.model"],
            hidden=self["seg.hidden"],
        )

    def crf_params(self) -> CrfParams:
        return CrfParams(
            sigma_pq=self["crf.sigma_pq"],
            sigma_rgb=self["crf.sigma_rgb"],
            beta=self["crf.beta"],
        )

    def synth_config(self, seed: int | None = None) -> SynthConfig:
        return SynthConfig(
            height=self["synth.height"],
            width=self["synth.width"],
            n_nuclei=tuple(int(v) for v in self["synth.n_nuclei"]),
            radius=self["synth.radius"],
            axis_ratio=self["synth.axis_ratio"],
            nucleus_color=self["synth.nucleus_color"],
            background_color=self["synth.background_color"],
            color_jitter=self["synth.color_jitter"],
            noise_std=self["synth.noise_std"],
            min_separation=self["synth.min_separation"],
            n_distractors=tuple(int(v) for v in self["synth.n_distractors"]),
            distractor_radius=self["synth.distractor_radius"],
            distractor_color=self["synth.distractor_color"],
            distractor_margin=self["synth.distractor_margin"],
            seed=self["synth.seed"] if seed is None else seed,
        )


def resolve_config(config_file: str | None, overrides) -> Config:
    cfg = Config()
    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise DataError(f"config file not found: {config_file}")
        cfg.update_from_file(path)
    cfg.update_from_pairs(overrides)
    return cfg
