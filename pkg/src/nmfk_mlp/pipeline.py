"""From a matrix to a single K: scan, classify windows, vote.

Also holds the two non-learned baselines and the evaluation tables used to
compare methods on a labeled corpus.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NormalizationMismatch
from .mlp import MlpModel, predict
from .nmfk import KScanRecord, ScanConfig, scan
from .windows import FEATURE_NORMALIZATION, WINDOW, extract_windows

MLP_VOTE = "mlp-vote"
AIC_ARGMIN = "aic-argmin"
SILHOUETTE_THRESHOLD = "silhouette-threshold"
METHODS = (MLP_VOTE, AIC_ARGMIN, SILHOUETTE_THRESHOLD)

HIT_CLASSES = range(1, WINDOW - 1)


@dataclass
class VoteTally:
    k_min: int
    k_max: int
    counts: np.ndarray
    trace: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)

    def votes_for(self, k: int) -> int:
        return int(self.counts[k - self.k_min])

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class RankPrediction:
    k_predicted: int
    method_tag: str
    tally: VoteTally | None = None
    records: list[KScanRecord] = field(default_factory=list)


def check_model_compatible(model: MlpModel, tag: str = FEATURE_NORMALIZATION) -> None:
    if model.feature_normalization_tag != tag:
        raise NormalizationMismatch(
            f"model was trained on features '{model.feature_normalization_tag}', "
            f"this pipeline produces '{tag}'"
        )


def classify_windows(records, model: MlpModel) -> list[tuple[int, int]]:
    """``(origin, class)`` for every window, ascending origin."""
    check_model_compatible(model)
    samples = extract_windows(records)
    feats = np.vstack([s.features for s in samples])
    classes = predict(model, feats)
    return [(s.origin_k, int(c)) for s, c in zip(samples, classes)]


def tally_votes(classifications, k_min: int, k_max: int, hit_weight: int = 5, miss_weight: int = 1) -> VoteTally:
    """Turn window classes into per-K votes.

    Class ``c`` in 1..5 at origin ``o`` gives ``hit_weight`` votes to
    ``K = o + c``. Class 0 gives ``miss_weight`` to every ``K <= o`` and
    class 6 to every ``K >= o + 6``. Votes outside ``[k_min, k_max]`` are dropped.
    """
    classifications = list(classifications)
    if not classifications:
        raise DataError("no window classifications to tally")
    if k_min > k_max:
        raise DataError("k_min must not exceed k_max")
    counts = np.zeros(k_max - k_min + 1, dtype=np.int64)
    for origin, cls in classifications:
        if cls in HIT_CLASSES:
            k = origin + cls
            if k_min <= k <= k_max:
                counts[k - k_min] += hit_weight
        elif cls == 0:
            hi = min(origin, k_max)
            if hi >= k_min:
                counts[: hi - k_min + 1] += miss_weight
        elif cls == WINDOW - 1:
            lo = max(origin + WINDOW - 1, k_min)
            if lo <= k_max:
                counts[lo - k_min:] += miss_weight
        else:
            raise DataError(f"window class {cls} outside 0..{WINDOW - 1}")
    return VoteTally(k_min, k_max, counts, [(int(o), int(c)) for o, c in classifications])


def argmax_k(tally: VoteTally) -> int:
    # np.argmax returns the first maximum, i.e. the smallest K
    return int(tally.k_min + np.argmax(tally.counts))


def predict_from_records(records, model: MlpModel, hit_weight: int = 5) -> RankPrediction:
    records = sorted(records, key=lambda r: r.k)
    trace = classify_windows(records, model)
    tally = tally_votes(trace, records[0].k, records[-1].k, hit_weight=hit_weight)
    return RankPrediction(argmax_k(tally), MLP_VOTE, tally, list(records))


def predict_rank(x, cfg: ScanConfig, model: MlpModel, hit_weight: int = 5) -> RankPrediction:
    if cfg.k_max - cfg.k_min < WINDOW - 1:
        raise DataError(f"the scan must span at least {WINDOW} K values")
    check_model_compatible(model)
    return predict_from_records(scan(x, cfg), model, hit_weight)


def baseline_aic_argmin(records) -> RankPrediction:
    records = sorted(records, key=lambda r: r.k)
    if not records:
        raise DataError("no scan records")
    aics = np.array([r.aic for r in records])
    return RankPrediction(records[int(np.argmin(aics))].k, AIC_ARGMIN, None, records)


def baseline_silhouette_threshold(records, threshold: float = 0.75) -> RankPrediction:
    """Largest K whose minimum silhouette reaches ``threshold``; ``k_min`` if none does."""
    records = sorted(records, key=lambda r: r.k)
    if not records:
        raise DataError("no scan records")
    passing = [r.k for r in records if r.min_silhouette >= threshold]
    k = max(passing) if passing else records[0].k
    return RankPrediction(k, SILHOUETTE_THRESHOLD, None, records)


def predict_with_method(records, method: str, model: MlpModel | None = None, hit_weight: int = 5,
                        threshold: float = 0.75) -> RankPrediction:
    if method == MLP_VOTE:
        if model is None:
            raise DataError("the mlp-vote method needs a model")
        return predict_from_records(records, model, hit_weight)
    if method == AIC_ARGMIN:
        return baseline_aic_argmin(records)
    if method == SILHOUETTE_THRESHOLD:
        return baseline_silhouette_threshold(records, threshold)
    raise DataError(f"unknown method {method!r}")


# --- reports -------------------------------------------------------------------

def report_dict(pred: RankPrediction) -> dict:
    votes, trace = [], []
    if pred.tally is not None:
        votes = [{"k": int(k), "count": int(c)} for k, c in zip(pred.tally.ks, pred.tally.counts)]
        trace = [{"origin": o, "class": c} for o, c in pred.tally.trace]
    return {
        "k_predicted": int(pred.k_predicted),
        "method_tag": pred.method_tag,
        "votes": votes,
        "trace": trace,
        "scan": [r.to_dict() for r in pred.records],
    }


def dumps_report(pred: RankPrediction) -> str:
    return json.dumps(report_dict(pred), indent=2) + "\n"


def write_report(path, pred: RankPrediction) -> None:
    Path(path).write_text(dumps_report(pred))


@dataclass
class MethodSummary:
    method: str
    n: int
    exact_rate: float
    within1_rate: float


def summarize(k_true, predictions: dict[str, list[int]]) -> list[MethodSummary]:
    k_true = np.asarray(k_true)
    out = []
    for method, preds in predictions.items():
        preds = np.asarray(preds)
        n = len(k_true)
        exact = float(np.mean(preds == k_true)) if n else float("nan")
        near = float(np.mean(np.abs(preds - k_true) <= 1)) if n else float("nan")
        out.append(MethodSummary(method, n, exact, near))
    return out


def evaluation_rows(indices, k_true, predictions: dict[str, list[int]]) -> list[list]:
    """Long-format table: one ``prediction`` row per matrix and method, one ``summary`` row per method."""
    rows = [["kind", "index", "k_true", "method", "k_predicted", "exact_rate", "within1_rate"]]
    for method, preds in predictions.items():
        for idx, kt, kp in zip(indices, k_true, preds):
            rows.append(["prediction", int(idx), int(kt), method, int(kp), "", ""])
    for s in summarize(k_true, predictions):
        rows.append(["summary", "", "", s.method, "", repr(s.exact_rate), repr(s.within1_rate)])
    return rows


def confusion_rows(k_true, predictions: dict[str, list[int]]) -> list[list]:
    rows = [["method", "k_true", "k_predicted", "count"]]
    for method, preds in predictions.items():
        counts = Counter(zip((int(k) for k in k_true), (int(p) for p in preds)))
        for (kt, kp), c in sorted(counts.items()):
            rows.append([method, kt, kp, c])
    return rows


def write_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
