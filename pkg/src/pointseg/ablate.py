"""Ablation sweeps: training strategies, annotation ratios, the label-mix
weight, CRF parameters, sensitivity to the initial point sample, and
cross-dataset evaluation."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from . import fileio
from .colornorm import reinhard_normalize
from .config import Config
from .crf import CrfParams
from .errors import DataError
from .model import finetune_crf, train_segmentation
from .pipeline import (
    Dataset,
    _update_manifest,
    build_labels,
    detect_on_split,
    evaluate_segmentation,
    label_points,
    load_dataset,
    run_detection,
    score_detections,
)

STRATEGIES = ("GM", "ext-GM", "ST-nu", "ST-bg")
RATIOS = (0.05, 0.10, 0.25, 0.50)
ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
SIGMA_PQ_GRID = (3.0, 6.0, 9.0, 12.0, 15.0)
SIGMA_RGB_GRID = (0.05, 0.1, 0.2, 0.3)
BETA_GRID = (0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001)
SENSITIVITY_SEEDS = 10


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (f"{v:.6f}" if isinstance(v, float) else v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def _detection_row(cfg: Config, ds: Dataset, strategy: str, ratio: float | None = None, point_seed: int | None = None):
    model, _, _ = run_detection(cfg, ds, strategy=strategy, ratio=ratio, point_seed=point_seed)
    detections = detect_on_split(cfg, model, ds, "test")
    (p, r, f1, mu, sigma), _ = score_detections(cfg, ds, "test", detections)
    return model, [p, r, f1, mu, sigma]


def ablate_strategy(cfg: Config) -> dict:
    """One detection run per training strategy, scored on the test split."""
    ds = load_dataset(cfg)
    rows = []
    for strategy in STRATEGIES:
        _, stats = _detection_row(cfg, ds, strategy)
        rows.append([strategy] + stats)
    out = Path(cfg["out.dir"])
    _write_csv(out / "ablate" / "strategy.csv", ["strategy", "precision", "recall", "f1", "mu_d", "sigma_d"], rows)
    _update_manifest(cfg, out, "ablate.strategy", {"strategies": list(STRATEGIES)})
    return {row[0]: row[3] for row in rows}


def ablate_ratio(cfg: Config) -> dict:
    """Detection quality as the annotated fraction grows."""
    ds = load_dataset(cfg)
    rows = []
    for ratio in RATIOS:
        _, stats = _detection_row(cfg, ds, cfg["detect.strategy"], ratio=ratio)
        rows.append([ratio] + stats)
    out = Path(cfg["out.dir"])
    _write_csv(out / "ablate" / "ratio.csv", ["ratio", "precision", "recall", "f1", "mu_d", "sigma_d"], rows)
    _update_manifest(cfg, out, "ablate.ratio", {"ratios": list(RATIOS)})
    return {row[0]: row[3] for row in rows}


def _segmentation_inputs(cfg: Config, ds: Dataset):
    detections = None
    if cfg["seg.points"] == "detected":
        model, detections, _ = run_detection(cfg, ds)
    points = label_points(cfg, ds, detections)
    vors, clus = build_labels(cfg, ds.images["train"], points)
    return vors, clus


def ablate_alpha(cfg: Config, alphas=ALPHAS) -> dict:
    """Segmentation quality across the Voronoi/cluster mixing weight."""
    ds = load_dataset(cfg)
    vors, clus = _segmentation_inputs(cfg, ds)
    rows = []
    results = {}
    for alpha in alphas:
        model = train_segmentation(ds.images["train"], vors, clus, alpha, cfg.seg_train_config())
        scores = evaluate_segmentation(cfg, model, ds, "test")["mean"]
        rows.append([alpha, scores["pixel_acc"], scores["pixel_f1"], scores["dice_obj"], scores["aji"]])
        results[alpha] = scores
    out = Path(cfg["out.dir"])
    _write_csv(out / "ablate" / "alpha.csv", ["alpha", "pixel_acc", "pixel_f1", "dice_obj", "aji"], rows)
    _update_manifest(cfg, out, "ablate.alpha", {"alphas": [float(a) for a in alphas]})
    return results


def ablate_crf(cfg: Config) -> dict:
    """Vary one CRF parameter at a time around the configured combination."""
    ds = load_dataset(cfg)
    vors, clus = _segmentation_inputs(cfg, ds)
    base_model = train_segmentation(ds.images["train"], vors, clus, cfg["seg.alpha"], cfg.seg_train_config())
    baseline = evaluate_segmentation(cfg, base_model, ds, "test")["mean"]

    def tuned_scores(params: CrfParams):
        tuned = finetune_crf(
            base_model,
            ds.images["train"],
            vors,
            clus,
            cfg["seg.alpha"],
            params,
            cfg.crf_train_config(),
            affinity_mode=cfg["crf.mode"],
        )
        return evaluate_segmentation(cfg, tuned, ds, "test")["mean"]

    base = cfg.crf_params()
    rows = [["baseline", None, None, None, baseline["pixel_f1"], baseline["aji"]]]
    for sigma_pq in SIGMA_PQ_GRID:
        scores = tuned_scores(CrfParams(sigma_pq=sigma_pq, sigma_rgb=base.sigma_rgb, beta=base.beta))
        rows.append(["sigma_pq", sigma_pq, base.sigma_rgb, base.beta, scores["pixel_f1"], scores["aji"]])
    for sigma_rgb in SIGMA_RGB_GRID:
        scores = tuned_scores(CrfParams(sigma_pq=base.sigma_pq, sigma_rgb=sigma_rgb, beta=base.beta))
        rows.append(["sigma_rgb", base.sigma_pq, sigma_rgb, base.beta, scores["pixel_f1"], scores["aji"]])
    for beta in BETA_GRID:
        scores = tuned_scores(CrfParams(sigma_pq=base.sigma_pq, sigma_rgb=base.sigma_rgb, beta=beta))
        rows.append(["beta", base.sigma_pq, base.sigma_rgb, beta, scores["pixel_f1"], scores["aji"]])
    out = Path(cfg["out.dir"])
    _write_csv(out / "ablate" / "crf.csv", ["axis", "sigma_pq", "sigma_rgb", "beta", "pixel_f1", "aji"], rows)
    _update_manifest(cfg, out, "ablate.crf", {"baseline_pixel_f1": baseline["pixel_f1"]})
    return {"baseline": baseline}


def ablate_sensitivity(cfg: Config, n_seeds: int = SENSITIVITY_SEEDS, with_segmentation: bool = False) -> dict:
    """Repeat the pipeline over different initial point samples."""
    ds = load_dataset(cfg)
    rows = []
    f1s = []
    for k in range(n_seeds):
        seed = cfg["seeds.points"] + k
        model, detections_train, _ = run_detection(cfg, ds, point_seed=seed)
        detections = detect_on_split(cfg, model, ds, "test")
        (p, r, f1, mu, sigma), _ = score_detections(cfg, ds, "test", detections)
        row = [seed, p, r, f1, mu, sigma]
        if with_segmentation:
            points = label_points(cfg, ds, detections_train)
            vors, clus = build_labels(cfg, ds.images["train"], points)
            seg_model = train_segmentation(ds.images["train"], vors, clus, cfg["seg.alpha"], cfg.seg_train_config())
            scores = evaluate_segmentation(cfg, seg_model, ds, "test")["mean"]
            row += [scores["pixel_acc"], scores["pixel_f1"], scores["dice_obj"], scores["aji"]]
        rows.append(row)
        f1s.append(f1)
    header = ["point_seed", "precision", "recall", "f1", "mu_d", "sigma_d"]
    if with_segmentation:
        header += ["pixel_acc", "pixel_f1", "dice_obj", "aji"]
    mean = float(np.mean(f1s))
    std = float(np.std(f1s))
    rows.append(["mean", None, None, mean, None, None] + ([None] * 4 if with_segmentation else []))
    rows.append(["std", None, None, std, None, None] + ([None] * 4 if with_segmentation else []))
    out = Path(cfg["out.dir"])
    _write_csv(out / "ablate" / "sensitivity.csv", header, rows)
    _update_manifest(cfg, out, "ablate.sensitivity", {"seeds": n_seeds})
    return {"f1_mean": mean, "f1_std": std, "f1s": f1s}


def ablate_crossdataset(cfg: Config, test_root: str) -> dict:
    """Evaluate the trained segmentation model on another dataset's test
    split, normalized with the training dataset's reference."""
    out = Path(cfg["out.dir"])
    model_path = None
    for cand in ("finetune/model.json", "segment/model.json"):
        if (out / cand).exists():
            model_path = out / cand
            break
    if model_path is None:
        raise DataError("cross-dataset evaluation needs a trained segmentation model")
    model = fileio.load_model_json(model_path)
    source = load_dataset(cfg)

    other_cfg_root = Path(test_root)
    other = load_dataset(cfg, root=other_cfg_root)
    if source.reference is not None:
        raw = load_dataset(_without_normalize(cfg), root=other_cfg_root)
        other_images = [reinhard_normalize(img, source.reference) for img in raw.images["test"]]
        other.images["test"] = other_images
    scores = evaluate_segmentation(cfg, model, other, "test")["mean"]
    rows = [[str(other_cfg_root), scores["pixel_acc"], scores["pixel_f1"], scores["dice_obj"], scores["aji"]]]
    _write_csv(out / "ablate" / "crossdataset.csv", ["test_root", "pixel_acc", "pixel_f1", "dice_obj", "aji"], rows)
    _update_manifest(cfg, out, "ablate.crossdataset", {"test_root": str(other_cfg_root)})
    return scores


def _without_normalize(cfg: Config) -> Config:
    clone = Config(cfg.to_dict())
    clone.set("preprocess.normalize", False)
    return clone
