"""End-to-end orchestration shared by the CLI and the benchmark suite.

The in-memory helpers (detection/segmentation runs on loaded datasets) do
the real work; the ``stage_*`` functions wrap them with artifact I/O under
the output directory and keep a manifest of configuration digests and seeds
so any stage can be re-run bit-identically.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .colornorm import ColorStats, compute_color_stats, reinhard_normalize
from .config import Config
from .detection import extended_gaussian_mask, extract_detections, self_train, simple_gaussian_mask
from .errors import DataError
from .labels import cluster_label, voronoi_label, voronoi_partition
from .metrics import (
    MetricsReport,
    aji,
    dataset_difficulty,
    detection_stats,
    match_detections,
    object_dice,
    pixel_stats,
)
from .model import PixelModel, finetune_crf, predict, train_detection, train_segmentation
from .overlay import detection_overlay, segmentation_overlay
from .raster import connected_components
from .synth import generate, sample_partial_points

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    """Loaded (and color-normalized) samples per split."""

    names: dict[str, list[str]]
    images: dict[str, list[np.ndarray]]
    instances: dict[str, list[np.ndarray]]
    centroids: dict[str, list[np.ndarray]]
    reference: ColorStats | None


def _derive_seed(base: int, *indices: int) -> int:
    return int(np.random.SeedSequence([base, *indices]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# dataset generation and loading


def write_dataset(cfg: Config, root: str | Path) -> dict:
    """Generate the synthetic train/val/test splits on disk."""
    root = Path(root)
    counts = {"train": cfg["synth.train"], "val": cfg["synth.val"], "test": cfg["synth.test"]}
    base_seed = cfg["synth.seed"]
    written = {}
    for split_idx, split in enumerate(SPLITS):
        for sub in ("images", "instances", "points"):
            (root / split / sub).mkdir(parents=True, exist_ok=True)
        names = []
        for i in range(counts[split]):
            sample = generate(cfg.synth_config(seed=_derive_seed(base_seed, split_idx, i)))
            name = f"{split}_{i:03d}"
            fileio.save_image_png(root / split / "images" / f"{name}.png", sample.image)
            fileio.save_instance_png(root / split / "instances" / f"{name}.png", sample.instances)
            fileio.save_points_json(root / split / "points" / f"{name}.json", sample.centroids)
            names.append(name)
        written[split] = names
    fileio.save_json(root / "dataset.json", {"splits": written, "seed": base_seed})
    return written


def load_dataset(cfg: Config, root: str | Path | None = None) -> Dataset:
    """Load all splits and apply Reinhard normalization (when enabled)
    against the configured reference stats, defaulting to the first
    training image."""
    root = Path(root if root is not None else cfg["data.root"])
    if not (root / "dataset.json").exists():
        raise DataError(f"no dataset at {root} (run the synth stage first)")
    listing = fileio.load_json(root / "dataset.json")["splits"]
    names, images, instances, centroids = {}, {}, {}, {}
    for split in SPLITS:
        names[split] = list(listing.get(split, []))
        images[split] = [fileio.load_image_png(root / split / "images" / f"{n}.png") for n in names[split]]
        instances[split] = [
            fileio.load_instance_png(root / split / "instances" / f"{n}.png") for n in names[split]
        ]
        centroids[split] = [
            fileio.load_points_json(root / split / "points" / f"{n}.json") for n in names[split]
        ]
    reference = None
    if cfg["preprocess.normalize"]:
        ref_path = cfg["preprocess.reference"]
        if ref_path:
            if not Path(ref_path).exists():
                raise DataError(f"reference stats file not found: {ref_path}")
            reference = ColorStats.load(ref_path)
        else:
            if not images["train"]:
                raise DataError("normalization needs at least one training image")
            reference = compute_color_stats(images["train"][0])
        for split in SPLITS:
            images[split] = [reinhard_normalize(img, reference) for img in images[split]]
    return Dataset(names=names, images=images, instances=instances, centroids=centroids, reference=reference)


def partial_points(cfg: Config, ds: Dataset, ratio: float | None = None, seed: int | None = None) -> list[np.ndarray]:
    """Sampled partial annotation for every training image."""
    ratio = cfg["ratio"] if ratio is None else ratio
    seed = cfg["seeds.points"] if seed is None else seed
    return [
        sample_partial_points(pts, ratio, _derive_seed(seed, i))
        for i, pts in enumerate(ds.centroids["train"])
    ]


# ---------------------------------------------------------------------------
# in-memory pipeline


def train_initial_detector(cfg: Config, ds: Dataset, points: list[np.ndarray], strategy: str):
    """Initial detector from partial points (plain or extended masks)."""
    det_cfg = cfg.detection_config()
    mask_fn = simple_gaussian_mask if strategy == "GM" else extended_gaussian_mask
    masks = [
        mask_fn(pts, img.shape[0], img.shape[1], det_cfg)
        for img, pts in zip(ds.images["train"], points)
    ]
    model = train_detection(ds.images["train"], masks, cfg.detect_train_config(), det_cfg)
    return model, masks


def run_self_training(cfg: Config, ds: Dataset, initial: PixelModel, points: list[np.ndarray], strategy: str):
    det_cfg = cfg.detection_config()
    train_cfg = cfg.detect_train_config()

    def trainer(imgs, masks, init):
        return train_detection(imgs, masks, train_cfg, det_cfg, init=init)

    return self_train(
        ds.images["train"],
        points,
        det_cfg,
        strategy,
        trainer,
        predict,
        initial_model=initial,
        warm_start=cfg["detect.warm_start"],
    )


def run_detection(cfg: Config, ds: Dataset, strategy: str | None = None, ratio: float | None = None, point_seed: int | None = None):
    """Initial training plus (for the self-training strategies) the rounds.

    Returns (model, per-train-image detections, partial points used).
    """
    strategy = cfg["detect.strategy"] if strategy is None else strategy
    points = partial_points(cfg, ds, ratio=ratio, seed=point_seed)
    initial_strategy = strategy if strategy in ("GM", "ext-GM") else "ext-GM"
    model, _ = train_initial_detector(cfg, ds, points, initial_strategy)
    if strategy in ("ST-bg", "ST-nu"):
        model, detections, _ = run_self_training(cfg, ds, model, points, strategy)
    else:
        det_cfg = cfg.detection_config()
        detections = [
            extract_detections(predict(model, img), det_cfg.prob_threshold) for img in ds.images["train"]
        ]
    return model, detections, points


def detect_on_split(cfg: Config, model: PixelModel, ds: Dataset, split: str) -> list[np.ndarray]:
    det_cfg = cfg.detection_config()
    return [extract_detections(predict(model, img), det_cfg.prob_threshold) for img in ds.images[split]]


def score_detections(cfg: Config, ds: Dataset, split: str, detections: list[np.ndarray]):
    matches = [
        match_detections(gt, det, cfg["eval.radius"])
        for gt, det in zip(ds.centroids[split], detections)
    ]
    return detection_stats(matches), matches


def build_labels(cfg: Config, images: list[np.ndarray], points: list[np.ndarray], seed: int | None = None):
    seed = cfg["seeds.labels"] if seed is None else seed
    vors, clus = [], []
    for i, (img, pts) in enumerate(zip(images, points)):
        part = voronoi_partition(pts, img.shape[0], img.shape[1])
        vors.append(voronoi_label(pts, img.shape[0], img.shape[1]))
        clus.append(cluster_label(img, pts, part, seed=_derive_seed(seed, i)))
    return vors, clus


def label_points(cfg: Config, ds: Dataset, detections: list[np.ndarray] | None) -> list[np.ndarray]:
    """Points used for stage-2 label synthesis: detected or ground truth."""
    source = cfg["seg.points"]
    if source == "gt":
        return ds.centroids["train"]
    if source == "detected":
        if detections is None:
            raise DataError("no detections available; run the detection stages first")
        return detections
    raise DataError(f"unknown seg.points source {source!r}")


def predicted_instances(cfg: Config, model: PixelModel, image: np.ndarray) -> np.ndarray:
    prob = predict(model, image)
    return connected_components(prob >= cfg["seg.threshold"], connectivity=8)


def evaluate_segmentation(cfg: Config, model: PixelModel, ds: Dataset, split: str) -> dict:
    """Per-image and averaged segmentation metrics against full ground truth."""
    rows = []
    for name, img, gt in zip(ds.names[split], ds.images[split], ds.instances[split]):
        pred = predicted_instances(cfg, model, img)
        acc, f1 = pixel_stats(pred > 0, gt > 0)
        report = MetricsReport(
            pixel_acc=acc,
            pixel_f1=f1,
            dice_obj=object_dice(gt, pred),
            aji=aji(gt, pred),
        )
        report.nuclei_bg_diff, report.nuclei_std = dataset_difficulty(img, gt)
        rows.append((name, report))
    mean = {
        key: float(np.mean([getattr(rep, key) for _, rep in rows]))
        for key in ("pixel_acc", "pixel_f1", "dice_obj", "aji")
    }
    return {"mean": mean, "per_image": rows}


# ---------------------------------------------------------------------------
# manifest helpers


def _update_manifest(cfg: Config, out: Path, stage: str, payload: dict) -> None:
    """Record enough (full resolved settings) to re-run the stage in isolation."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    manifest = fileio.load_json(path) if path.exists() else {}
    settings = {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.to_dict().items()}
    manifest[stage] = {"config": cfg.digest(), "settings": settings, **payload}
    fileio.save_json(path, manifest)


def _load_model(out: Path, *candidates: str) -> PixelModel:
    for cand in candidates:
        path = out / cand
        if path.exists():
            return fileio.load_model_json(path)
    raise DataError(f"no model checkpoint found under {out} (tried {', '.join(candidates)})")


# ---------------------------------------------------------------------------
# disk stages


def stage_synth(cfg: Config) -> dict:
    written = write_dataset(cfg, cfg["data.root"])
    _update_manifest(cfg, Path(cfg["out.dir"]), "synth", {"seed": cfg["synth.seed"], "splits": {k: len(v) for k, v in written.items()}})
    return {"written": {k: len(v) for k, v in written.items()}}


def stage_detect(cfg: Config) -> dict:
    out = Path(cfg["out.dir"])
    ds = load_dataset(cfg)
    strategy = cfg["detect.strategy"]
    initial_strategy = strategy if strategy in ("GM", "ext-GM") else "ext-GM"
    points = partial_points(cfg, ds)
    model, masks = train_initial_detector(cfg, ds, points, initial_strategy)
    (out / "detect" / "points").mkdir(parents=True, exist_ok=True)
    (out / "detect" / "masks").mkdir(parents=True, exist_ok=True)
    for name, pts, mask in zip(ds.names["train"], points, masks):
        fileio.save_points_json(out / "detect" / "points" / f"{name}.json", pts)
        fileio.save_regression_mask(out / "detect" / "masks" / f"{name}.rmsk", mask)
    fileio.save_model_json(out / "detect" / "model.json", model)
    if ds.reference is not None:
        ds.reference.save(out / "reference_stats.json")
    _update_manifest(cfg, out, "detect", {"strategy": initial_strategy, "ratio": cfg["ratio"], "seeds": {"points": cfg["seeds.points"], "model": cfg["seeds.model"]}})
    return {"strategy": initial_strategy, "images": len(points)}


def stage_selftrain(cfg: Config) -> dict:
    out = Path(cfg["out.dir"])
    ds = load_dataset(cfg)
    strategy = cfg["detect.strategy"]
    if strategy not in ("ST-bg", "ST-nu"):
        raise DataError(f"self-training needs strategy ST-bg or ST-nu, not {strategy!r}")
    initial = _load_model(out, "detect/model.json")
    points = [
        fileio.load_points_json(out / "detect" / "points" / f"{name}.json") for name in ds.names["train"]
    ]
    model, detections, round_masks = run_self_training(cfg, ds, initial, points, strategy)
    for rnd, masks in enumerate(round_masks, start=1):
        mask_dir = out / "selftrain" / f"round_{rnd}" / "masks"
        mask_dir.mkdir(parents=True, exist_ok=True)
        for name, mask in zip(ds.names["train"], masks):
            fileio.save_regression_mask(mask_dir / f"{name}.rmsk", mask)
    det_dir = out / "selftrain" / "detections"
    det_dir.mkdir(parents=True, exist_ok=True)
    for name, det in zip(ds.names["train"], detections):
        fileio.save_points_json(det_dir / f"{name}.json", det)
    fileio.save_model_json(out / "selftrain" / "model.json", model)
    _update_manifest(cfg, out, "selftrain", {"strategy": strategy, "rounds": cfg["detect.rounds"]})
    return {"strategy": strategy, "rounds": cfg["detect.rounds"]}


def stage_labels(cfg: Config) -> dict:
    out = Path(cfg["out.dir"])
    ds = load_dataset(cfg)
    detections = None
    det_dir = out / "selftrain" / "detections"
    if det_dir.exists():
        detections = [fileio.load_points_json(det_dir / f"{name}.json") for name in ds.names["train"]]
    points = label_points(cfg, ds, detections)
    vors, clus = build_labels(cfg, ds.images["train"], points)
    for sub in ("voronoi", "cluster", "points"):
        (out / "labels" / sub).mkdir(parents=True, exist_ok=True)
    for name, pts, vor, clu in zip(ds.names["train"], points, vors, clus):
        fileio.save_points_json(out / "labels" / "points" / f"{name}.json", pts)
        fileio.save_tristate_png(out / "labels" / "voronoi" / f"{name}.png", vor)
        fileio.save_tristate_png(out / "labels" / "cluster" / f"{name}.png", clu)
    _update_manifest(cfg, out, "labels", {"source": cfg["seg.points"], "seed": cfg["seeds.labels"]})
    return {"source": cfg["seg.points"], "images": len(points)}


def _load_labels(out: Path, names: list[str]):
    vors = [fileio.load_tristate_png(out / "labels" / "voronoi" / f"{n}.png") for n in names]
    clus = [fileio.load_tristate_png(out / "labels" / "cluster" / f"{n}.png") for n in names]
    return vors, clus


def stage_segment(cfg: Config) -> dict:
    out = Path(cfg["out.dir"])
    ds = load_dataset(cfg)
    vors, clus = _load_labels(out, ds.names["train"])
    model = train_segmentation(ds.images["train"], vors, clus, cfg["seg.alpha"], cfg.seg_train_config())
    (out / "segment").mkdir(parents=True, exist_ok=True)
    fileio.save_model_json(out / "segment" / "model.json", model)
    _update_manifest(cfg, out, "segment", {"alpha": cfg["seg.alpha"], "epochs": cfg["seg.epochs"]})
    return {"alpha": cfg["seg.alpha"]}


def stage_finetune(cfg: Config) -> dict:
    out = Path(cfg["out.dir"])
    ds = load_dataset(cfg)
    vors, clus = _load_labels(out, ds.names["train"])
    model = _load_model(out, "segment/model.json")
    tuned = finetune_crf(
        model,
        ds.images["train"],
        vors,
        clus,
        cfg["seg.alpha"],
        cfg.crf_params(),
        cfg.crf_train_config(),
        affinity_mode=cfg["crf.mode"],
    )
    (out / "finetune").mkdir(parents=True, exist_ok=True)
    fileio.save_model_json(out / "finetune" / "model.json", tuned)
    _update_manifest(cfg, out, "finetune", {"beta": cfg["crf.beta"], "epochs": cfg["crf.epochs"]})
    return {"beta": cfg["crf.beta"]}


def stage_infer(cfg: Config, split: str = "test", which: str = "auto") -> dict:
    out = Path(cfg["out.dir"])
    ds = load_dataset(cfg)
    candidates = {
        "auto": ("finetune/model.json", "segment/model.json", "selftrain/model.json", "detect/model.json"),
        "detect": ("selftrain/model.json", "detect/model.json"),
        "segment": ("finetune/model.json", "segment/model.json"),
    }.get(which)
    if candidates is None:
        raise DataError(f"unknown model selector {which!r}")
    model = _load_model(out, *candidates)
    base = out / "infer" / split
    for sub in ("prob", "instances", "detections"):
        (base / sub).mkdir(parents=True, exist_ok=True)
    det_cfg = cfg.detection_config()
    for name, img in zip(ds.names[split], ds.images[split]):
        prob = predict(model, img)
        fileio.save_regression_mask(base / "prob" / f"{name}.rmsk", prob)
        fileio.save_instance_png(
            base / "instances" / f"{name}.png",
            connected_components(prob >= cfg["seg.threshold"], connectivity=8),
        )
        fileio.save_points_json(
            base / "detections" / f"{name}.json", extract_detections(prob, det_cfg.prob_threshold)
        )
    _update_manifest(cfg, out, f"infer.{split}", {"model": which, "images": len(ds.names[split])})
    return {"split": split, "images": len(ds.names[split])}


def _metrics_csv(rows: list[tuple[str, MetricsReport]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    fields = [
        "name",
        "precision",
        "recall",
        "f1",
        "mu_d",
        "sigma_d",
        "pixel_acc",
        "pixel_f1",
        "dice_obj",
        "aji",
        "nuclei_bg_diff",
        "nuclei_std",
    ]
    writer.writerow(fields)
    for name, rep in rows:
        writer.writerow([name] + ["" if getattr(rep, f) is None else f"{getattr(rep, f):.6f}" for f in fields[1:]])
    return buf.getvalue()


def stage_eval(cfg: Config, split: str = "test") -> dict:
    out = Path(cfg["out.dir"])
    ds = load_dataset(cfg)
    base = out / "infer" / split
    if not base.exists():
        raise DataError(f"no inference output for split {split!r}; run the infer stage first")
    rows: list[tuple[str, MetricsReport]] = []
    matches = []
    overlay_dir = out / "eval" / split / "overlays"
    overlay_dir.mkdir(parents=True, exist_ok=True)
    for name, img, gt, gt_pts in zip(ds.names[split], ds.images[split], ds.instances[split], ds.centroids[split]):
        pred = fileio.load_instance_png(base / "instances" / f"{name}.png")
        det = fileio.load_points_json(base / "detections" / f"{name}.json")
        match = match_detections(gt_pts, det, cfg["eval.radius"])
        matches.append(match)
        p, r, f1, mu, sigma = detection_stats(match)
        acc, pf1 = pixel_stats(pred > 0, gt > 0)
        rep = MetricsReport(
            precision=p,
            recall=r,
            f1=f1,
            mu_d=mu,
            sigma_d=sigma,
            pixel_acc=acc,
            pixel_f1=pf1,
            dice_obj=object_dice(gt, pred),
            aji=aji(gt, pred),
        )
        rep.nuclei_bg_diff, rep.nuclei_std = dataset_difficulty(img, gt)
        rows.append((name, rep))
        fileio.save_image_png(overlay_dir / f"{name}_detection.png", detection_overlay(img, gt_pts, det, match))
        fileio.save_image_png(overlay_dir / f"{name}_instances.png", segmentation_overlay(img, pred))
    p, r, f1, mu, sigma = detection_stats(matches)
    pooled = {
        "precision": p,
        "recall": r,
        "f1": f1,
        "mu_d": mu,
        "sigma_d": sigma,
        "pixel_acc": float(np.mean([rep.pixel_acc for _, rep in rows])),
        "pixel_f1": float(np.mean([rep.pixel_f1 for _, rep in rows])),
        "dice_obj": float(np.mean([rep.dice_obj for _, rep in rows])),
        "aji": float(np.mean([rep.aji for _, rep in rows])),
    }
    report = {"split": split, "pooled": pooled, "per_image": {name: rep.to_dict() for name, rep in rows}}
    fileio.save_json(out / "eval" / split / "report.json", report)
    (out / "eval" / split / "per_image.csv").write_text(_metrics_csv(rows))
    _update_manifest(cfg, out, f"eval.{split}", {"radius": cfg["eval.radius"]})
    return pooled
