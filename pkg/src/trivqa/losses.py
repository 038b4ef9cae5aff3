"""Training objectives and their weighted aggregation.

Seven terms make up the breakdown:

* ce_forward: cross entropy of the forward answer logits vs true labels
* rev_q / rev_v: mean squared error of inferred vs projected true
  features (targets gradient-stopped so they cannot collapse)
* sfr_q_ce / sfr_v_ce: cross entropy of the re-answer logits vs labels
* consistency_q / consistency_v: cross entropy of the re-answer logits
  against the first-pass answer distribution as a fixed soft target

Each term is summed over attributes and averaged over the batch, so
magnitudes are batch-size and dimension invariant. The diagnosis loss
is tracked separately by the trainer, not here.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff as nd
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .model import PassOutputs

TERM_NAMES = (
    "ce_forward",
    "rev_q",
    "rev_v",
    "sfr_q_ce",
    "sfr_v_ce",
    "consistency_q",
    "consistency_v",
)

ABLATION_MODES = ("baseline", "+rev_q", "+rev_v", "+rev_both", "+sfr", "full")

# which loss terms each ablation mode trains with
MODE_TERMS = {
    "baseline": frozenset({"ce_forward"}),
    "+rev_q": frozenset({"ce_forward", "rev_q"}),
    "+rev_v": frozenset({"ce_forward", "rev_v"}),
    "+rev_both": frozenset({"ce_forward", "rev_q", "rev_v"}),
    "+sfr": frozenset(
        {"ce_forward", "sfr_q_ce", "sfr_v_ce", "consistency_q", "consistency_v"}
    ),
    "full": frozenset(TERM_NAMES),
}


@dataclass(frozen=True)
class LossWeights:
    ce_forward: float = 1.0
    rev_q: float = 1.0
    rev_v: float = 1.0
    sfr_q_ce: float = 1.0
    sfr_v_ce: float = 1.0
    consistency_q: float = 1.0
    consistency_v: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0.0:
                raise ConfigError(
                    f"loss_weights.{f.name} must be finite and >= 0, got {v}"
                )
        if self.ce_forward <= 0.0:
            raise ConfigError("loss_weights.ce_forward must be > 0")

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in TERM_NAMES}

    def for_mode(self, mode: str) -> "LossWeights":
        """Zero out every term the ablation mode excludes."""
        active = _mode_terms(mode)
        return replace(
            self, **{name: 0.0 for name in TERM_NAMES if name not in active}
        )


@dataclass
class LossBreakdown:
    ce_forward: float = 0.0
    rev_q: float = 0.0
    rev_v: float = 0.0
    sfr_q_ce: float = 0.0
    sfr_v_ce: float = 0.0
    consistency_q: float = 0.0
    consistency_v: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in TERM_NAMES} | {
            "total": float(self.total)
        }


def _mode_terms(mode: str) -> frozenset:
    if mode not in MODE_TERMS:
        raise ConfigError(f"mode must be one of {ABLATION_MODES}, got {mode!r}")
    return MODE_TERMS[mode]


def ce_loss(logits, labels) -> Tensor:
    """Cross entropy; accepts a single logits vector or a batch of rows."""
    if not isinstance(logits, Tensor):
        arr = np.asarray(logits, dtype=np.float64)
        logits = Tensor(arr.reshape(1, -1) if arr.ndim == 1 else arr)
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    return nd.cross_entropy(logits, lab)


def rev_feature_loss(inferred, target) -> Tensor:
    """Mean squared difference over feature components (and batch rows)."""
    return nd.mse(inferred, target, reduction="mean")


def sfr_losses(sfr_logits, a_pre_probs, labels) -> tuple[Tensor, Tensor]:
    """Hard CE to the true label plus soft CE to the first-pass answer.

    a_pre_probs acts as a fixed target: only its values are used, so no
    gradient reaches the first pass through this term.
    """
    ce_term = ce_loss(sfr_logits, labels)
    target = a_pre_probs.data if isinstance(a_pre_probs, Tensor) else a_pre_probs
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target.reshape(1, -1)
    consistency = nd.soft_cross_entropy(
        sfr_logits if isinstance(sfr_logits, Tensor) else Tensor(sfr_logits), target
    )
    return ce_term, consistency


def _sum_over_attributes(parts) -> Tensor:
    acc = parts[0]
    for p in parts[1:]:
        acc = nd.add(acc, p)
    return acc


def total_loss(
    outputs: PassOutputs,
    answers: np.ndarray,
    weights: LossWeights,
    mode: str = "full",
) -> tuple[LossBreakdown, Tensor]:
    """Aggregate the per-term objectives for one batch.

    Returns the breakdown (floats) and the weighted total as a tracked
    scalar. Terms excluded by the mode are reported as exactly 0 and
    never computed; a positive weight on an excluded term is rejected.
    """
    active = _mode_terms(mode)
    wd = weights.as_dict()
    for name, w in wd.items():
        if name not in active and w > 0.0:
            raise ConfigError(
                f"loss_weights.{name}={w} is positive but mode {mode!r} excludes it"
            )
    answers = np.asarray(answers, dtype=np.int64)
    k = len(outputs.logits)
    if answers.ndim != 2 or answers.shape[1] != k:
        raise ShapeError(
            f"answers expect shape (batch, {k}), got {answers.shape}"
        )

    def need(kind: str, values):
        if values is None:
            raise ShapeError(f"outputs lack the {kind} branch required by mode {mode!r}")
        return values

    terms: dict[str, Tensor] = {}
    terms["ce_forward"] = _sum_over_attributes(
        [nd.cross_entropy(outputs.logits[i], answers[:, i]) for i in range(k)]
    )
    if "rev_q" in active:
        q_inf = need("reverse", outputs.q_inferred)
        terms["rev_q"] = _sum_over_attributes(
            [
                rev_feature_loss(q_inf[i], nd.stop_gradient(outputs.question_proj[i]))
                for i in range(k)
            ]
        )
    if "rev_v" in active:
        v_inf = need("reverse", outputs.v_inferred)
        pv_fixed = nd.stop_gradient(outputs.visual_proj)
        terms["rev_v"] = _sum_over_attributes(
            [rev_feature_loss(v_inf[i], pv_fixed) for i in range(k)]
        )
    if "sfr_q_ce" in active:
        sfr_q = need("second-forward", outputs.sfr_q_logits)
        ce_parts, cons_parts = [], []
        for i in range(k):
            ce_t, cons_t = sfr_losses(sfr_q[i], outputs.probs[i], answers[:, i])
            ce_parts.append(ce_t)
            cons_parts.append(cons_t)
        terms["sfr_q_ce"] = _sum_over_attributes(ce_parts)
        terms["consistency_q"] = _sum_over_attributes(cons_parts)
    if "sfr_v_ce" in active:
        sfr_v = need("second-forward", outputs.sfr_v_logits)
        ce_parts, cons_parts = [], []
        for i in range(k):
            ce_t, cons_t = sfr_losses(sfr_v[i], outputs.probs[i], answers[:, i])
            ce_parts.append(ce_t)
            cons_parts.append(cons_t)
        terms["sfr_v_ce"] = _sum_over_attributes(ce_parts)
        terms["consistency_v"] = _sum_over_attributes(cons_parts)

    total_t: Tensor | None = None
    for name in TERM_NAMES:
        if name in terms and wd[name] > 0.0:
            contrib = nd.scale(terms[name], wd[name])
            total_t = contrib if total_t is None else nd.add(total_t, contrib)
    if total_t is None:  # unreachable: ce_forward weight is always positive
        total_t = Tensor(np.asarray(0.0))

    bd = LossBreakdown(
        **{name: (terms[name].item() if name in terms else 0.0) for name in TERM_NAMES},
        total=total_t.item(),
    )
    return bd, total_t
