"""Agreement statistics, bootstrap confidence intervals, and model metrics.

The agreement rate between two taggers is plain accuracy: the fraction of
studies where their binary judgments coincide. A tagger's average
agreement rate (AAR) is the mean of its agreement rates against the other
raters (the two remaining radiologists for a radiologist, all three for a
model), and the average radiologist rate is the mean of the per-rater
AARs. Model-vs-radiologist comparisons are interval-estimated with a
percentile bootstrap over the study axis.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classify import Ontology
from .fileio import atomic_write

EXHAUSTIVE_RESAMPLE_LIMIT = 300_000


@dataclass
class RatingMatrix:
    """Complete per-(study, rater) binary judgments for one finding.

    values has shape (n_studies, n_raters); report_opinion, when present,
    is the original report's verdict per study (the fourth-expert view);
    pool_origin records whether each study came from the report-positive
    pool or the random pool.
    """

    finding: str
    studies: list[str]
    raters: list[str]
    values: np.ndarray
    report_opinion: np.ndarray | None = None
    pool_origin: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        if self.values.shape != (len(self.studies), len(self.raters)):
            raise ValueError("rating matrix shape does not match studies x raters")
        if not np.isin(self.values, (0, 1)).all():
            raise ValueError("rating matrix values must be binary")
        if self.report_opinion is not None:
            self.report_opinion = np.asarray(self.report_opinion, dtype=np.int8)
            if self.report_opinion.shape != (len(self.studies),):
                raise ValueError("report_opinion length does not match studies")

    def rater_column(self, rater_id: str) -> np.ndarray:
        return self.values[:, self.raters.index(rater_id)]


def agreement_rate(a, b) -> float:
    """Fraction of positions where the two binary vectors agree (symmetric)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"agreement_rate needs equal-length vectors, got {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("agreement_rate needs at least one study")
    return float(np.mean(a == b))


def aar(target, others: list) -> float:
    """Average agreement rate of `target` against each vector in `others`."""
    if not others:
        raise ValueError("aar needs at least one comparison vector")
    return float(np.mean([agreement_rate(target, o) for o in others]))


def avg_radiologist_rate(matrix: RatingMatrix) -> float:
    """Mean over raters of each rater's AAR against the remaining raters."""
    n_raters = len(matrix.raters)
    if n_raters < 2:
        raise ValueError("avg_radiologist_rate needs at least two raters")
    rates = []
    for r in range(n_raters):
        others = [matrix.values[:, o] for o in range(n_raters) if o != r]
        rates.append(aar(matrix.values[:, r], others))
    return float(np.mean(rates))


@dataclass(frozen=True)
class DeltaCI:
    """Model AAR minus average radiologist rate, with bootstrap interval."""

    delta: float
    lo: float
    hi: float
    n_resamples: int
    level: float


def _per_study_delta(model: np.ndarray, matrix: RatingMatrix) -> np.ndarray:
    """Per-study contribution to delta; its mean over any resample is that
    resample's delta, because AAR and the radiologist average are both
    plain means over the study axis."""
    n_raters = len(matrix.raters)
    model_term = np.mean(
        [(model == matrix.values[:, r]).astype(float) for r in range(n_raters)], axis=0
    )
    pair_terms = [
        (matrix.values[:, r] == matrix.values[:, o]).astype(float)
        for r in range(n_raters)
        for o in range(n_raters)
        if r != o
    ]
    rad_term = np.mean(pair_terms, axis=0)
    return model_term - rad_term


def bootstrap_delta_ci(model, matrix: RatingMatrix, n: int = 10_000, level: float = 0.95,
                       seed: int = 0, exhaustive: bool = False) -> DeltaCI:
    """Percentile bootstrap CI over delta = AAR(model) - avg radiologist rate.

    Studies are resampled with replacement n times; the interval is the
    empirical (1-level)/2 and (1+level)/2 percentiles of the resampled
    deltas (linear interpolation), deterministic for a given seed. With
    exhaustive=True all S^S resamples are enumerated instead of sampled,
    which is exact on tiny fixtures and guarded against blowup.
    """
    model = np.asarray(model, dtype=np.int8)
    if model.shape != (len(matrix.studies),):
        raise ValueError("model vector is not aligned to the matrix studies")
    if len(matrix.raters) < 2:
        raise ValueError("bootstrap needs at least two raters")

    d = _per_study_delta(model, matrix)
    s = d.size
    if exhaustive:
        if s**s > EXHAUSTIVE_RESAMPLE_LIMIT:
            raise ValueError(f"exhaustive enumeration of {s}^{s} resamples is too large")
        deltas = np.array([d[list(idx)].mean() for idx in itertools.product(range(s), repeat=s)])
        n_resamples = deltas.size
    else:
        rng = np.random.default_rng(seed)
        chunks = []
        remaining = n
        max_rows = max(1, 4_000_000 // s)
        while remaining > 0:
            rows = min(remaining, max_rows)
            idx = rng.integers(0, s, size=(rows, s))
            chunks.append(d[idx].mean(axis=1))
            remaining -= rows
        deltas = np.concatenate(chunks)
        n_resamples = n

    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(deltas, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return DeltaCI(delta=float(d.mean()), lo=float(lo), hi=float(hi),
                   n_resamples=n_resamples, level=level)


def select_threshold(confidences, reference) -> float:
    """Smallest threshold maximizing AAR of thresholded predictions.

    Candidates are the midpoints between consecutive sorted unique
    confidences plus -inf/+inf sentinels, scanned exhaustively in
    ascending order. `reference` is a binary vector or a RatingMatrix
    (AAR against all its raters). Predictions are confidence >= threshold.
    """
    conf = np.asarray(confidences, dtype=float)
    if conf.size == 0:
        raise ValueError("select_threshold needs at least one study")
    if isinstance(reference, RatingMatrix):
        others = [reference.values[:, r] for r in range(len(reference.raters))]
    else:
        others = [np.asarray(reference, dtype=np.int8)]

    unique = np.unique(conf)
    candidates = [float("-inf")]
    candidates.extend(((unique[:-1] + unique[1:]) / 2.0).tolist())
    candidates.append(float("inf"))

    best_t = candidates[0]
    best_score = -1.0
    for t in candidates:
        preds = (conf >= t).astype(np.int8)
        score = aar(preds, others)
        if score > best_score:
            best_score = score
            best_t = t
    return best_t


@dataclass(frozen=True)
class RocResult:
    """TPR/FPR sweep with AUC and the sensitivity=specificity accuracy.

    auc follows the pair-counting definition (probability a random
    positive outranks a random negative, ties worth 1/2), computed here by
    the trapezoidal sweep which is exactly equivalent. The
    accuracy_at_sens_eq_spec field is (sens+spec)/2 at the sweep point
    minimizing |sens - spec|; when the two rates cross exactly it equals
    both. For single-class labels both metrics are None.
    """

    points: list[tuple[float, float]]
    auc: float | None
    accuracy_at_sens_eq_spec: float | None


def roc_auc(confidences, labels) -> RocResult:
    conf = np.asarray(confidences, dtype=float)
    y = np.asarray(labels, dtype=np.int8)
    if conf.shape != y.shape or conf.ndim != 1:
        raise ValueError("confidences and labels must be equal-length vectors")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return RocResult(points=[], auc=None, accuracy_at_sens_eq_spec=None)

    order = np.argsort(-conf, kind="stable")
    sorted_conf = conf[order]
    sorted_y = y[order]

    # one sweep point per distinct confidence (threshold = that value, predict >=)
    boundaries = np.nonzero(np.diff(sorted_conf))[0]
    group_ends = np.append(boundaries, sorted_conf.size - 1)
    tp_cum = np.cumsum(sorted_y)[group_ends]
    fp_cum = (group_ends + 1) - tp_cum

    tpr = np.concatenate(([0.0], tp_cum / n_pos))
    fpr = np.concatenate(([0.0], fp_cum / n_neg))
    auc = float(np.trapezoid(tpr, fpr))

    sens = tpr
    spec = 1.0 - fpr
    best = int(np.argmin(np.abs(sens - spec)))
    acc = float((sens[best] + spec[best]) / 2.0)

    points = list(zip(fpr.tolist(), tpr.tolist()))
    return RocResult(points=points, auc=auc, accuracy_at_sens_eq_spec=acc)


def bce_mean_loss(p, y, eps: float = 1e-7) -> float:
    """Mean binary cross-entropy over the finding axis (sign-corrected,
    so the value is non-negative; confidences are clipped to [eps, 1-eps])."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError("confidences and labels must be equal-length vectors")
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def heatmap(feature_maps, weights) -> np.ndarray:
    """Linear combination of C feature maps (CxHxW) with C scalar weights."""
    maps = np.asarray(feature_maps, dtype=float)
    w = np.asarray(weights, dtype=float)
    if maps.ndim != 3:
        raise ValueError(f"feature_maps must be CxHxW, got shape {maps.shape}")
    if w.shape != (maps.shape[0],):
        raise ValueError(f"weights length {w.shape} does not match C={maps.shape[0]}")
    return np.tensordot(w, maps, axes=([0], [0]))


# ---------------------------------------------------------------------------
# Ratings and predictions I/O

def _as_binary(label) -> int:
    if isinstance(label, str):
        text = label.strip().lower()
        if text in ("present", "1", "true", "positive"):
            return 1
        if text in ("absent", "0", "false", "negative"):
            return 0
        raise ValueError(f"unrecognized rating label {label!r}")
    return 1 if int(label) else 0


def load_rating_matrices(path: str | Path) -> dict[tuple[str, str], RatingMatrix]:
    """Load line-delimited rating records, grouped by (set_id, finding).

    The latest record per (set_id, finding, study_id, rater_id) wins;
    study and rater order follow first appearance. Raises on incomplete
    matrices (a rater missing some study).
    """
    cells: dict[tuple[str, str], dict] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad rating record: {exc}") from exc
        key = (str(obj["set_id"]), str(obj["finding"]))
        group = cells.setdefault(
            key, {"studies": [], "raters": [], "values": {}, "report": {}, "origin": {}}
        )
        sid = str(obj["study_id"])
        rid = str(obj["rater_id"])
        if sid not in group["values"]:
            group["studies"].append(sid)
            group["values"][sid] = {}
        if rid not in group["raters"]:
            group["raters"].append(rid)
        group["values"][sid][rid] = _as_binary(obj["label"])
        if obj.get("report_opinion") is not None:
            group["report"][sid] = _as_binary(obj["report_opinion"])
        if obj.get("pool_origin") is not None:
            group["origin"][sid] = str(obj["pool_origin"])

    matrices = {}
    for (set_id, finding), group in cells.items():
        studies, raters = group["studies"], group["raters"]
        values = np.zeros((len(studies), len(raters)), dtype=np.int8)
        for si, sid in enumerate(studies):
            for ri, rid in enumerate(raters):
                if rid not in group["values"][sid]:
                    raise ValueError(
                        f"{path}: incomplete matrix for set {set_id!r} finding {finding!r}: "
                        f"study {sid!r} lacks a rating from {rid!r}"
                    )
                values[si, ri] = group["values"][sid][rid]
        report = None
        if group["report"]:
            if len(group["report"]) != len(studies):
                raise ValueError(
                    f"{path}: set {set_id!r} finding {finding!r}: report_opinion "
                    "present for some studies but not all"
                )
            report = np.array([group["report"][sid] for sid in studies], dtype=np.int8)
        origin = [group["origin"].get(sid, "") for sid in studies] if group["origin"] else None
        matrices[(set_id, finding)] = RatingMatrix(
            finding=finding, studies=studies, raters=raters, values=values,
            report_opinion=report, pool_origin=origin,
        )
    return matrices


def write_predictions_csv(predictions: dict[str, np.ndarray], ontology: Ontology,
                          path: str | Path, header_comment: str | None = None) -> None:
    with atomic_write(path) as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["study_id"] + ontology.names())
        for sid, row in predictions.items():
            writer.writerow([sid] + [f"{v:.6f}" for v in np.asarray(row, dtype=float)])


def read_predictions_csv(path: str | Path, ontology: Ontology) -> dict[str, np.ndarray]:
    predictions = {}
    with open(path, encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header != ["study_id"] + ontology.names():
            raise ValueError(f"{path}: predictions CSV header does not match the ontology")
        for row in rows:
            values = np.array([float(v) for v in row[1:]], dtype=float)
            if ((values < 0) | (values > 1)).any():
                raise ValueError(f"{path}: confidences for {row[0]!r} outside [0,1]")
            predictions[row[0]] = values
    return predictions


# ---------------------------------------------------------------------------
# Evaluation report (one row per rating matrix)

@dataclass(frozen=True)
class EvalRow:
    finding: str
    n_pos: int
    n_neg: int
    report_agreement: float | None
    avg_rad: float
    model_aar: float
    delta: float
    lo: float
    hi: float
    threshold: float


def evaluate_matrix(matrix: RatingMatrix, confidences: np.ndarray, threshold: float,
                    n_bootstrap: int = 10_000, level: float = 0.95, seed: int = 0) -> EvalRow:
    """Score thresholded model confidences against one rating matrix."""
    model = (np.asarray(confidences, dtype=float) >= threshold).astype(np.int8)
    rater_cols = [matrix.values[:, r] for r in range(len(matrix.raters))]
    ci = bootstrap_delta_ci(model, matrix, n=n_bootstrap, level=level, seed=seed)

    if matrix.pool_origin and any(matrix.pool_origin):
        n_pos = sum(1 for o in matrix.pool_origin if o == "pos_pool")
        n_neg = sum(1 for o in matrix.pool_origin if o == "neg_pool")
    elif matrix.report_opinion is not None:
        n_pos = int(matrix.report_opinion.sum())
        n_neg = int(len(matrix.studies) - n_pos)
    else:
        n_pos = n_neg = 0

    report_agreement = None
    if matrix.report_opinion is not None:
        report_agreement = aar(matrix.report_opinion, rater_cols)

    return EvalRow(
        finding=matrix.finding,
        n_pos=n_pos,
        n_neg=n_neg,
        report_agreement=report_agreement,
        avg_rad=avg_radiologist_rate(matrix),
        model_aar=aar(model, rater_cols),
        delta=ci.delta,
        lo=ci.lo,
        hi=ci.hi,
        threshold=threshold,
    )


def write_eval_csv(rows: list[EvalRow], path: str | Path,
                   header_comment: str | None = None) -> None:
    with atomic_write(path) as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["finding", "pos", "neg", "report_agreement", "avg_rad", "model_aar",
             "delta", "lo", "hi", "threshold"]
        )
        for r in rows:
            writer.writerow(
                [r.finding, r.n_pos, r.n_neg,
                 "" if r.report_agreement is None else f"{r.report_agreement:.3f}",
                 f"{r.avg_rad:.3f}", f"{r.model_aar:.3f}",
                 f"{r.delta:+.3f}", f"{r.lo:.3f}", f"{r.hi:.3f}",
                 f"{r.threshold:.6g}"]
            )
