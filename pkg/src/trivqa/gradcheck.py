"""Central finite-difference verification of analytic gradients.

The checker perturbs every entry of every parameter block by +-step,
re-evaluates the loss, and compares the quotient to the tape gradient.
Relative error uses max(|analytic|, |numeric|) as the denominator, with
an absolute comparison when both are tiny (otherwise float noise in the
difference quotient dominates and the ratio is meaningless).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as nd
from .autodiff import Tape, Tensor
from .errors import ConfigError
from .losses import TERM_NAMES, LossWeights, total_loss
from .model import AttributeSchema, TriVqaModel

TINY_GRAD = 1e-6


@dataclass
class BlockResult:
    name: str
    max_rel_err: float
    ok: bool


@dataclass
class GradCheckReport:
    fragment: str
    tolerance: float
    blocks: list[BlockResult]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(b.ok for b in self.blocks)

    @property
    def worst(self) -> float:
        return max((b.max_rel_err for b in self.blocks), default=0.0)

    def lines(self) -> list[str]:
        out = [f"[{self.fragment}] tolerance={self.tolerance:g}"]
        for b in self.blocks:
            status = "ok" if b.ok else "FAIL"
            out.append(f"  block={b.name} max_rel_err={b.max_rel_err:.3e} {status}")
        verdict = "PASS" if self.passed else "FAIL"
        out.append(
            f"[{self.fragment}] {verdict} worst={self.worst:.3e} "
            f"({self.seconds:.2f}s)"
        )
        return out


def grad_check(
    params: dict[str, Tensor],
    loss_fn,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    fragment: str = "fragment",
    corrupt_block: str | None = None,
    fd_loss_fn=None,
) -> GradCheckReport:
    """Compare tape gradients of loss_fn() against finite differences.

    loss_fn takes no arguments and reads the current params; it must not
    open its own tape. corrupt_block deliberately offsets one analytic
    gradient block (negative-control hook for the self-test).

    When the loss contains gradient-stopped quantities that themselves
    depend on the parameters, pass fd_loss_fn: a version of the loss
    with those quantities frozen at their current values. That is the
    function the tape actually differentiates; probing the raw loss
    would measure derivative paths the stop deliberately cuts.
    """
    t0 = time.perf_counter()
    probe = fd_loss_fn if fd_loss_fn is not None else loss_fn
    with Tape() as tape:
        for p in params.values():
            tape.watch(p)
        loss = loss_fn()
        grads = nd.backward(loss, tape)
        analytic = {name: grads[p].copy() for name, p in params.items()}
    if corrupt_block is not None:
        if corrupt_block not in analytic:
            raise ConfigError(f"corrupt_block {corrupt_block!r} is not a parameter block")
        analytic[corrupt_block] = analytic[corrupt_block] + 1.0

    blocks = []
    for name, p in params.items():
        af = analytic[name].ravel()
        flat = p.data.ravel()
        worst = 0.0
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = probe().item()
            flat[j] = orig - step
            down = probe().item()
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            aj = af[j]
            denom = max(abs(aj), abs(numeric))
            if denom < TINY_GRAD:
                err = abs(aj - numeric)
            else:
                err = abs(aj - numeric) / denom
            if err > worst:
                worst = err
        blocks.append(BlockResult(name, worst, worst < tolerance))
    return GradCheckReport(fragment, tolerance, blocks, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# standard fragments for the self-test command


def _linear_fragment(rng):
    w = Tensor(rng.standard_normal((5, 3)) / np.sqrt(5))
    b = Tensor(np.zeros(3))
    x = rng.standard_normal((4, 5))
    y = rng.standard_normal((4, 3))

    def loss_fn():
        pred = nd.add(nd.matmul(Tensor(x), w), b)
        return nd.mse(pred, Tensor(y))

    return {"linear.w": w, "linear.b": b}, loss_fn


def _relu_fragment(rng):
    w = Tensor(rng.standard_normal((6, 4)) / np.sqrt(6))
    # keep pre-activations away from the relu kink
    x = rng.standard_normal((5, 6)) + np.sign(rng.standard_normal((5, 6))) * 0.5
    y = rng.standard_normal((5, 4))

    def loss_fn():
        h = nd.relu(nd.matmul(Tensor(x), w))
        return nd.mse(h, Tensor(y))

    return {"relu.w": w}, loss_fn


def _softmax_ce_fragment(rng):
    w = Tensor(rng.standard_normal((7, 4)) / np.sqrt(7))
    b = Tensor(rng.standard_normal(4) * 0.1)
    x = rng.standard_normal((6, 7))
    labels = rng.integers(0, 4, size=6)

    def loss_fn():
        logits = nd.add(nd.matmul(Tensor(x), w), b)
        return nd.cross_entropy(logits, labels)

    return {"smce.w": w, "smce.b": b}, loss_fn


def miniature_model_check(
    fusion: str = "add",
    seed: int = 0,
    tolerance: float = 1e-4,
    corrupt_block: str | None = None,
    stop_answer_gradient: bool = False,
) -> GradCheckReport:
    """Full objective on a tiny model: every block, every loss term."""
    rng = np.random.default_rng([seed, 17])
    schema = AttributeSchema([("attr_a", 3), ("attr_b", 2)])
    model = TriVqaModel(
        schema,
        d_v=12,
        d_q=9,
        d=8,
        fusion=fusion,
        stop_answer_gradient=stop_answer_gradient,
        rng=rng,
    )
    batch = 4
    v = rng.standard_normal((batch, 12))
    q = rng.standard_normal((batch, len(schema), 9))
    answers = np.column_stack(
        [rng.integers(0, c, size=batch) for c in schema.cardinalities]
    )
    diag = rng.integers(0, 2, size=batch)
    weights = LossWeights()
    k = len(schema)

    def loss_fn():
        outs = model.full_pass(v, q, want_reverse=True, want_sfr=True, want_diag=True)
        _, total_t = total_loss(outs, answers, weights, mode="full")
        diag_ce = nd.cross_entropy(outs.diag_logits, diag)
        return nd.add(total_t, diag_ce)

    # The objective stops gradients at three places: the reverse-loss
    # targets (projected true features), the consistency soft targets
    # (first-pass answer distributions), and, with stop_answer_gradient,
    # the distribution entering the answer embedding. Finite differences
    # must probe the function the tape differentiates, so those values
    # are frozen here at the unperturbed parameters.
    base = model.full_pass(v, q, want_reverse=True, want_sfr=True, want_diag=True)
    frozen_pv = base.visual_proj.data.copy()
    frozen_pq = [t.data.copy() for t in base.question_proj]
    frozen_probs = [p.data.copy() for p in base.probs]

    def fd_loss_fn():
        pv = model.project_visual(v)
        term = {name: None for name in (
            "ce_forward", "rev_q", "rev_v", "sfr_q_ce", "sfr_v_ce",
            "consistency_q", "consistency_v",
        )}

        def tally(name, part):
            term[name] = part if term[name] is None else nd.add(term[name], part)

        fused_all = []
        for i in range(k):
            q_i = np.ascontiguousarray(q[:, i, :])
            fwd = model.forward_answer(v, q_i, i)
            fused_all.append(fwd.fused)
            tally("ce_forward", nd.cross_entropy(fwd.logits, answers[:, i]))
            emb_in = Tensor(frozen_probs[i]) if stop_answer_gradient else fwd.probs
            q_inf = model.infer_question(emb_in, v, i)
            v_inf = model.infer_visual(emb_in, q_i, i)
            tally("rev_q", nd.mse(q_inf, Tensor(frozen_pq[i])))
            tally("rev_v", nd.mse(v_inf, Tensor(frozen_pv)))
            pq = model.project_question(q_i)
            sfr_q = model.second_forward_question(q_inf, pv, i)
            sfr_v = model.second_forward_visual(v_inf, pq, i)
            tally("sfr_q_ce", nd.cross_entropy(sfr_q, answers[:, i]))
            tally("consistency_q", nd.soft_cross_entropy(sfr_q, frozen_probs[i]))
            tally("sfr_v_ce", nd.cross_entropy(sfr_v, answers[:, i]))
            tally("consistency_v", nd.soft_cross_entropy(sfr_v, frozen_probs[i]))
        total = None
        for name in TERM_NAMES:
            contrib = nd.scale(term[name], 1.0)
            total = contrib if total is None else nd.add(total, contrib)
        diag_ce = nd.cross_entropy(model.diagnose(fused_all), diag)
        return nd.add(total, diag_ce)

    return grad_check(
        model.params,
        loss_fn,
        tolerance=tolerance,
        fragment=f"tri-vqa-mini-{fusion}",
        corrupt_block=corrupt_block,
        fd_loss_fn=fd_loss_fn,
    )


def standard_suite(tolerance: float = 1e-4, seed: int = 0) -> list[GradCheckReport]:
    """The self-test battery: primitive fragments plus both fusion modes."""
    rng = np.random.default_rng([seed, 23])
    reports = []
    for name, builder in (
        ("linear", _linear_fragment),
        ("relu-mlp", _relu_fragment),
        ("softmax-ce", _softmax_ce_fragment),
    ):
        params, loss_fn = builder(rng)
        reports.append(grad_check(params, loss_fn, tolerance=tolerance, fragment=name))
    reports.append(miniature_model_check("add", seed=seed, tolerance=tolerance))
    reports.append(miniature_model_check("concat", seed=seed, tolerance=tolerance))
    return reports
