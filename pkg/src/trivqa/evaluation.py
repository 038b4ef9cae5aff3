"""Batched, tape-free model evaluation: predictions, diagnosis scores,
reliability records, and per-epoch curve statistics.

Reliability targets are the projected true features (the same targets
the reverse losses train against); the answer distribution can enter
the reverse paths either soft (the predicted distribution) or hard (a
one-hot of its argmax). Hard is the default for reliability scoring: a
wrong confident answer embeds far from anything seen in training, which
is exactly the discrepancy the indicator is meant to expose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as nd
from .data import Dataset
from .metrics import (
    BinaryMetrics,
    ReliabilityRecord,
    ReliabilityReport,
    attribute_accuracy,
    binary_metrics,
    reliability_report,
)
from .model import TriVqaModel

DEFAULT_RELIABILITY_MODE = "hard"


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(start + size, n)


@dataclass
class EvalPass:
    """Raw per-sample arrays from one dataset sweep."""

    predictions: np.ndarray  # (n, K) argmax answers
    labels: np.ndarray  # (n, K)
    sfr_q_predictions: np.ndarray | None
    sfr_v_predictions: np.ndarray | None
    diag_scores: np.ndarray | None  # (n,) positive-class probability
    diag_labels: np.ndarray  # (n,) with -1 where absent
    rel_mse: np.ndarray | None  # (n, K, 2) mse per direction
    rel_euclid: np.ndarray | None  # (n, K, 2)
    ids: list


def run_eval_pass(
    model: TriVqaModel,
    ds: Dataset,
    batch_size: int = 256,
    answer_mode: str = DEFAULT_RELIABILITY_MODE,
    want_reliability: bool = True,
    want_sfr: bool = False,
    want_diag: bool = True,
) -> EvalPass:
    n = len(ds)
    k = len(ds.schema)
    v = ds.v_matrix()
    q = ds.q_tensor()
    labels = ds.answers_matrix()
    preds = np.zeros((n, k), dtype=np.int64)
    sfr_q_preds = np.zeros((n, k), dtype=np.int64) if want_sfr else None
    sfr_v_preds = np.zeros((n, k), dtype=np.int64) if want_sfr else None
    diag_scores = np.zeros(n) if want_diag else None
    rel_mse = np.zeros((n, k, 2)) if want_reliability else None
    rel_euc = np.zeros((n, k, 2)) if want_reliability else None
    for start, stop in _batches(n, batch_size):
        outs = model.full_pass(
            v[start:stop],
            q[start:stop],
            want_reverse=want_reliability,
            want_sfr=want_sfr,
            want_diag=want_diag,
            answer_mode=answer_mode,
        )
        for i in range(k):
            preds[start:stop, i] = outs.logits[i].data.argmax(axis=1)
            if want_sfr:
                sfr_q_preds[start:stop, i] = outs.sfr_q_logits[i].data.argmax(axis=1)
                sfr_v_preds[start:stop, i] = outs.sfr_v_logits[i].data.argmax(axis=1)
            if want_reliability:
                dq = outs.q_inferred[i].data - outs.question_proj[i].data
                dv = outs.v_inferred[i].data - outs.visual_proj.data
                sq_q = (dq * dq).sum(axis=1)
                sq_v = (dv * dv).sum(axis=1)
                rel_mse[start:stop, i, 0] = sq_q / dq.shape[1]
                rel_mse[start:stop, i, 1] = sq_v / dv.shape[1]
                rel_euc[start:stop, i, 0] = np.sqrt(sq_q)
                rel_euc[start:stop, i, 1] = np.sqrt(sq_v)
        if want_diag:
            diag_probs = nd.softmax_rows(outs.diag_logits).data
            diag_scores[start:stop] = diag_probs[:, 1]
    return EvalPass(
        predictions=preds,
        labels=labels,
        sfr_q_predictions=sfr_q_preds,
        sfr_v_predictions=sfr_v_preds,
        diag_scores=diag_scores,
        diag_labels=ds.diagnosis_vector(),
        rel_mse=rel_mse,
        rel_euclid=rel_euc,
        ids=ds.ids(),
    )


def reliability_records(ds: Dataset, ep: EvalPass) -> list[ReliabilityRecord]:
    if ep.rel_mse is None:
        raise ValueError("eval pass was run without reliability statistics")
    names = ds.schema.names
    records = []
    correct = ep.predictions == ep.labels
    for i, attr in enumerate(names):
        for j, direction in enumerate(("av_to_q", "aq_to_v")):
            for s in range(len(ep.ids)):
                records.append(
                    ReliabilityRecord(
                        sample_id=ep.ids[s],
                        attribute=attr,
                        direction=direction,
                        mse=float(ep.rel_mse[s, i, j]),
                        euclidean=float(ep.rel_euclid[s, i, j]),
                        answer_correct=bool(correct[s, i]),
                    )
                )
    return records


def curve_point(model: TriVqaModel, ds: Dataset, batch_size: int = 256) -> dict:
    """Mean reliability distances over samples and attributes, soft mode
    (this measures the training-time reverse paths, so it uses the same
    answer distribution training sees)."""
    ep = run_eval_pass(
        model,
        ds,
        batch_size=batch_size,
        answer_mode="soft",
        want_reliability=True,
        want_sfr=False,
        want_diag=False,
    )
    return {
        "av_to_q": (float(ep.rel_mse[:, :, 0].mean()), float(ep.rel_euclid[:, :, 0].mean())),
        "aq_to_v": (float(ep.rel_mse[:, :, 1].mean()), float(ep.rel_euclid[:, :, 1].mean())),
    }


@dataclass
class MetricsReport:
    split: str
    n_samples: int
    per_attribute_accuracy: dict
    mean_attribute_accuracy: float
    sfr_q_accuracy: float | None
    sfr_v_accuracy: float | None
    diagnosis: BinaryMetrics | None
    reliability: ReliabilityReport

    def to_json_dict(self) -> dict:
        return {
            "split": self.split,
            "n_samples": self.n_samples,
            "per_attribute_accuracy": self.per_attribute_accuracy,
            "mean_attribute_accuracy": self.mean_attribute_accuracy,
            "sfr_q_accuracy": self.sfr_q_accuracy,
            "sfr_v_accuracy": self.sfr_v_accuracy,
            "diagnosis": None if self.diagnosis is None else self.diagnosis.as_dict(),
            "reliability": [g.as_row() for g in self.reliability.groups],
        }


def evaluate(
    model: TriVqaModel,
    ds: Dataset,
    split_name: str,
    batch_size: int = 256,
    answer_mode: str = DEFAULT_RELIABILITY_MODE,
    want_sfr: bool = True,
) -> MetricsReport:
    ep = run_eval_pass(
        model,
        ds,
        batch_size=batch_size,
        answer_mode=answer_mode,
        want_reliability=True,
        want_sfr=want_sfr,
        want_diag=True,
    )
    accs = attribute_accuracy(ep.predictions, ep.labels, ds.schema)
    per_attr = {name: float(a) for name, a in zip(ds.schema.names, accs)}
    labeled = ep.diag_labels >= 0
    diagnosis = None
    if labeled.any():
        diagnosis = binary_metrics(ep.diag_scores[labeled], ep.diag_labels[labeled])
    report = reliability_report(reliability_records(ds, ep))
    sfr_q_acc = sfr_v_acc = None
    if want_sfr:
        sfr_q_acc = float((ep.sfr_q_predictions == ep.labels).mean())
        sfr_v_acc = float((ep.sfr_v_predictions == ep.labels).mean())
    return MetricsReport(
        split=split_name,
        n_samples=len(ds),
        per_attribute_accuracy=per_attr,
        mean_attribute_accuracy=float(accs.mean()),
        sfr_q_accuracy=sfr_q_acc,
        sfr_v_accuracy=sfr_v_acc,
        diagnosis=diagnosis,
        reliability=report,
    )
