"""Evaluation metrics and the answer-reliability indicator.

Reliability compares a reverse-inferred feature with its projected
ground truth. Two statistics per pair, from one difference vector:
mse = sum((x-y)^2)/d and euclidean = sqrt(sum((x-y)^2)), so
euclidean^2 == mse * d always. Records are grouped by attribute and
direction, split into answered-correctly vs answered-wrongly, and each
group gets a verdict: correct-group mean strictly below incorrect-group
mean. Groups with no incorrect samples are indeterminate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError, ShapeError

DIRECTIONS = ("av_to_q", "aq_to_v")


def attribute_accuracy(predictions, labels, schema) -> np.ndarray:
    """Fraction of correct argmax answers, one value per attribute."""
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    k = len(schema)
    if pred.shape != lab.shape or pred.ndim != 2 or pred.shape[1] != k:
        raise ShapeError(
            f"predictions {pred.shape} and labels {lab.shape} must both be (n, {k})"
        )
    if pred.shape[0] == 0:
        raise ShapeError("attribute_accuracy needs at least one sample")
    return (pred == lab).mean(axis=0)


@dataclass
class BinaryMetrics:
    sensitivity: float | None
    specificity: float | None
    accuracy: float
    auc: float | None
    n_pos: int
    n_neg: int

    def as_dict(self):
        return {
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }


def _rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC; tied scores contribute average ranks (0.5/pair)."""
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average of 1-based ranks
        i = j + 1
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    rank_sum = ranks[labels == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def binary_metrics(scores, labels, threshold: float = 0.5) -> BinaryMetrics:
    """Diagnosis metrics from positive-class scores and 0/1 labels."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} must both be (n,)")
    if s.shape[0] == 0:
        raise ShapeError("binary_metrics needs at least one sample")
    if np.any((y != 0) & (y != 1)):
        raise ShapeError("binary labels must be 0 or 1")
    pred = (s >= threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    return BinaryMetrics(
        sensitivity=(tp / n_pos) if n_pos else None,
        specificity=(tn / n_neg) if n_neg else None,
        accuracy=(tp + tn) / len(y),
        auc=_rank_auc(s, y) if n_pos and n_neg else None,
        n_pos=n_pos,
        n_neg=n_neg,
    )


def reliability_measure(inferred, target) -> tuple[float, float]:
    x = np.asarray(inferred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(
            f"reliability_measure needs equal 1-D shapes, got {x.shape} and {y.shape}"
        )
    sq = float(((x - y) ** 2).sum())
    return sq / x.size, float(np.sqrt(sq))


@dataclass(frozen=True)
class ReliabilityRecord:
    sample_id: str
    attribute: str
    direction: str
    mse: float
    euclidean: float
    answer_correct: bool


@dataclass
class GroupStats:
    attribute: str
    direction: str
    n_correct: int
    n_incorrect: int
    mse_correct: float | None
    mse_incorrect: float | None
    euclidean_correct: float | None
    euclidean_incorrect: float | None
    verdict_mse: bool | None
    verdict_euclidean: bool | None

    @staticmethod
    def _fmt(v):
        return "indeterminate" if v is None else v

    def as_row(self):
        return {
            "attribute": self.attribute,
            "direction": self.direction,
            "n_correct": self.n_correct,
            "n_incorrect": self.n_incorrect,
            "mse_correct": self.mse_correct,
            "mse_incorrect": self.mse_incorrect,
            "euclidean_correct": self.euclidean_correct,
            "euclidean_incorrect": self.euclidean_incorrect,
            "verdict_mse": self._fmt(self.verdict_mse),
            "verdict_euclidean": self._fmt(self.verdict_euclidean),
        }


@dataclass
class ReliabilityReport:
    groups: list[GroupStats]

    def lookup(self, attribute: str, direction: str) -> GroupStats:
        for g in self.groups:
            if g.attribute == attribute and g.direction == direction:
                return g
        raise KeyError((attribute, direction))

    def verdict_counts(self, direction: str, which: str = "mse") -> tuple[int, int]:
        """(true verdicts, decided groups) for one direction."""
        field_name = f"verdict_{which}"
        decided = [
            g for g in self.groups if g.direction == direction and getattr(g, field_name) is not None
        ]
        return sum(1 for g in decided if getattr(g, field_name)), len(decided)


def reliability_report(records) -> ReliabilityReport:
    records = list(records)
    if not records:
        raise DataFormatError("reliability_report needs at least one record")
    order: list[tuple[str, str]] = []
    grouped: dict[tuple[str, str], list[ReliabilityRecord]] = {}
    for r in records:
        if r.direction not in DIRECTIONS:
            raise ConfigError(
                f"direction must be one of {DIRECTIONS}, got {r.direction!r}"
            )
        key = (r.attribute, r.direction)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(r)
    groups = []
    for key in order:
        recs = grouped[key]
        good = [r for r in recs if r.answer_correct]
        bad = [r for r in recs if not r.answer_correct]

        def mean(rows, field_name):
            return (
                float(np.mean([getattr(r, field_name) for r in rows])) if rows else None
            )

        mse_c, mse_i = mean(good, "mse"), mean(bad, "mse")
        euc_c, euc_i = mean(good, "euclidean"), mean(bad, "euclidean")
        groups.append(
            GroupStats(
                attribute=key[0],
                direction=key[1],
                n_correct=len(good),
                n_incorrect=len(bad),
                mse_correct=mse_c,
                mse_incorrect=mse_i,
                euclidean_correct=euc_c,
                euclidean_incorrect=euc_i,
                verdict_mse=(mse_c < mse_i) if good and bad else None,
                verdict_euclidean=(euc_c < euc_i) if good and bad else None,
            )
        )
    return ReliabilityReport(groups)


@dataclass(frozen=True)
class CurveRow:
    epoch: int
    mse_av_to_q: float
    euclidean_av_to_q: float
    mse_aq_to_v: float
    euclidean_aq_to_v: float


class CurveTracker:
    """Per-epoch mean reliability distances, appended in epoch order."""

    HEADER = "epoch,mse_av_to_q,euclidean_av_to_q,mse_aq_to_v,euclidean_aq_to_v"

    def __init__(self):
        self.rows: list[CurveRow] = []

    def add(self, epoch: int, by_direction: dict) -> None:
        """by_direction maps direction name -> (mean mse, mean euclidean)."""
        if self.rows and epoch <= self.rows[-1].epoch:
            raise ConfigError(
                f"curve epoch {epoch} is not after epoch {self.rows[-1].epoch}"
            )
        try:
            mq, eq = by_direction["av_to_q"]
            mv, ev = by_direction["aq_to_v"]
        except KeyError as exc:
            raise ConfigError(f"curve row lacks direction {exc}") from exc
        self.rows.append(CurveRow(int(epoch), float(mq), float(eq), float(mv), float(ev)))

    def csv_lines(self) -> list[str]:
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(
                f"{r.epoch},{r.mse_av_to_q!r},{r.euclidean_av_to_q!r},"
                f"{r.mse_aq_to_v!r},{r.euclidean_aq_to_v!r}"
            )
        return lines

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")
