"""Evaluation: top-1 accuracy, class-mean accuracy, fixed-view and refined
baselines over a pose manifest, and per-class report tables."""

from __future__ import annotations

import glob
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core3d import normalize_to_unit
from .errors import (
    ClassWithNoSamples,
    EmptyPredictions,
    StyleSetMismatch,
    UnreadableSample,
)
from .iarm import RefineConfig, classify_openpose, _as_scorer
from .io import load_geometry
from .match import MatchScore, class_probabilities
from .posegen import PoseManifest
from .project import CameraConfig, ProjectionStyle, VoxelParams, fixed_view_sets


@dataclass(frozen=True)
class LabeledPrediction:
    sample_id: str
    true_class: str
    predicted_class: str


@dataclass(frozen=True)
class MetricsReport:
    """Overall accuracy, class-mean accuracy, and the per-class breakdown,
    all in percent."""

    acc: float
    macc: float
    per_class: dict
    counts: dict

    def format_markdown(self, title: str = "results") -> str:
        lines = [f"### {title}", "", "| class | samples | acc (%) |", "|---|---|---|"]
        for cls in sorted(self.per_class):
            lines.append(f"| {cls} | {self.counts[cls]} | {self.per_class[cls]:.1f} |")
        lines.append("")
        lines.append(f"**Acc {self.acc:.1f} / mAcc {self.macc:.1f}**")
        return "\n".join(lines)


def compute_metrics(preds, classes=None) -> MetricsReport:
    """Aggregate labeled predictions into Acc / mAcc / per-class accuracy.

    Acc is micro top-1 over all samples; mAcc is the unweighted mean of the
    per-class accuracies, so it ignores class imbalance.
    """
    preds = list(preds)
    if not preds:
        raise EmptyPredictions("no predictions to score")
    if classes is None:
        classes = sorted({p.true_class for p in preds})
    counts = {c: 0 for c in classes}
    hits = {c: 0 for c in classes}
    for p in preds:
        if p.true_class not in counts:
            raise ClassWithNoSamples(f"prediction for unknown class {p.true_class!r}")
        counts[p.true_class] += 1
        hits[p.true_class] += int(p.predicted_class == p.true_class)
    missing = [c for c in classes if counts[c] == 0]
    if missing:
        raise ClassWithNoSamples(f"no samples for {missing}")
    per_class = {c: 100.0 * hits[c] / counts[c] for c in classes}
    acc = 100.0 * sum(hits.values()) / len(preds)
    macc = float(np.mean(list(per_class.values())))
    return MetricsReport(acc, macc, per_class, counts)


def ensemble_styles(per_style_scores: dict, mode: str = "diffusion") -> dict:
    """Combine per-style class scores into one score per class.

    Diffusion mode pools the per-style errors inside the exponent (the
    expectation over styles sits inside exp(-.)); similarity mode takes the
    arithmetic mean of the pseudo-scores.
    """
    styles = list(per_style_scores)
    if not styles:
        raise StyleSetMismatch("no styles to ensemble")
    class_sets = [frozenset(per_style_scores[s]) for s in styles]
    if len(set(class_sets)) != 1:
        raise StyleSetMismatch("per-style score maps cover different classes")
    classes = sorted(class_sets[0])
    combined = {}
    for c in classes:
        vals = [per_style_scores[s][c] for s in styles]
        if mode == "diffusion":
            errs = [
                v.pooled_error if isinstance(v, MatchScore) else float(v) for v in vals
            ]
            combined[c] = MatchScore.from_error(float(np.mean(errs)))
        else:
            nums = [v.value if isinstance(v, MatchScore) else float(v) for v in vals]
            combined[c] = float(np.mean(nums))
    return combined


def _find_sample_file(dataset_dir, sample_id: str) -> str:
    hits = sorted(glob.glob(os.path.join(dataset_dir, sample_id + ".*")))
    if not hits:
        raise UnreadableSample(os.path.join(dataset_dir, sample_id + ".*"), "not found")
    return hits[0]


def _score_fixed_views(sample, classes, scorer, views, rng_seed):
    # Multi-view ensembling: the class score is the mean MS over the view set.
    scores = {}
    for c in classes:
        vals = [scorer(sample, phi, c, rng_seed) for phi in views]
        scores[c] = float(np.mean(vals))
    return scores


def run_baseline(
    dataset_dir,
    manifest: PoseManifest,
    view_kind: str,
    matcher,
    styles=(ProjectionStyle.DEPTH,),
    cfg: RefineConfig = RefineConfig(),
    cam: CameraConfig = CameraConfig(),
    vox: VoxelParams = VoxelParams(),
    n_views: int = 12,
    circular_phi1: float = 30.0,
    rng_seed: int = 42,
    jobs: int = 1,
) -> tuple[MetricsReport, list]:
    """Classify every manifest sample with one view-selection strategy.

    ``view_kind`` is one of single/cube/circular (score = mean MS over the
    fixed view set) or ``iarm`` (per-class refined angles). Returns the
    metrics plus one log record per sample; records are ordered by sample_id
    so the log is deterministic regardless of ``jobs``.
    """
    classes = sorted(manifest.class_histogram())
    scorer = _as_scorer(matcher, list(styles), cam, vox)
    if view_kind != "iarm":
        views = fixed_view_sets(view_kind, n_views=n_views, phi1=circular_phi1)

    def process(entry):
        sample_id, true_class, _q = entry
        geom = normalize_to_unit(load_geometry(_find_sample_file(dataset_dir, sample_id)))
        if view_kind == "iarm":
            pred, _traces = classify_openpose(
                geom, classes, scorer, cfg, styles, cam, vox, rng_seed=rng_seed
            )
            scores = pred.scores
            probs = pred.probabilities
            predicted = pred.predicted_class
            angles = {c: pred.angles[c].as_tuple() for c in classes}
        else:
            scores = _score_fixed_views(geom, classes, scorer, views, rng_seed)
            probs = class_probabilities(scores)
            predicted = max(classes, key=lambda c: (probs[c], -classes.index(c)))
            angles = {c: None for c in classes}
        return {
            "sample_id": sample_id,
            "true_class": true_class,
            "predicted_class": predicted,
            "scores": {c: float(scores[c]) if not hasattr(scores[c], "value") else scores[c].value for c in classes},
            "probabilities": {c: probs[c] for c in classes},
            "angles": angles,
        }

    entries = sorted(manifest.entries, key=lambda e: e[0])
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(process, entries))
    else:
        records = [process(e) for e in entries]
    records.sort(key=lambda r: r["sample_id"])

    preds = [
        LabeledPrediction(r["sample_id"], r["true_class"], r["predicted_class"])
        for r in records
    ]
    return compute_metrics(preds, classes), records


def save_log(records, path, header: dict | None = None) -> None:
    """Write per-sample records as line-delimited JSON with a config header."""
    with open(path, "w") as f:
        if header is not None:
            f.write(json.dumps({"kind": "header", **header}, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_log(path) -> tuple[dict, list]:
    header = {}
    records = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec.get("kind") == "header":
                header = rec
            else:
                records.append(rec)
    return header, records


def metrics_from_log(records, classes=None) -> MetricsReport:
    preds = [
        LabeledPrediction(r["sample_id"], r["true_class"], r["predicted_class"])
        for r in records
    ]
    return compute_metrics(preds, classes)
