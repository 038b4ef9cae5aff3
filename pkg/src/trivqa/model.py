"""The triangular reasoning graph.

Three inference paths share one fused feature space of width d:

* forward: fuse(projected question, projected visual) -> answer logits,
  one classifier head per attribute;
* question inference: fuse(embedded answer, projected visual) -> q_inferred;
* visual inference: fuse(projected question, embedded answer) -> v_inferred.

Second-forward re-answering re-runs the same per-attribute classifier
head on an inferred feature plus the true counterpart's projection, so
those heads are shared objects, not copies. A diagnosis head consumes
the concatenation of all K fused features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as nd
from .autodiff import Tensor
from .errors import ConfigError, NumericsError, ShapeError

DEFAULT_ATTRIBUTES = ("echo", "boundary", "shape", "origin", "growth", "texture")

FUSION_MODES = ("add", "concat")
ANSWER_MODES = ("soft", "hard")


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    cardinality: int


class AttributeSchema:
    """Ordered attribute names with per-attribute answer cardinalities."""

    def __init__(self, attributes):
        specs = []
        for a in attributes:
            if isinstance(a, AttributeSpec):
                specs.append(a)
            else:
                name, c = a
                specs.append(AttributeSpec(str(name), int(c)))
        if not specs:
            raise ConfigError("schema needs at least one attribute")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"schema attribute names are not unique: {names}")
        for s in specs:
            if s.cardinality < 2:
                raise ConfigError(
                    f"attribute {s.name} needs cardinality >= 2, got {s.cardinality}"
                )
        self.attributes = tuple(specs)

    @classmethod
    def default(cls) -> "AttributeSchema":
        return cls([(n, 3) for n in DEFAULT_ATTRIBUTES])

    @property
    def names(self):
        return [a.name for a in self.attributes]

    @property
    def cardinalities(self):
        return [a.cardinality for a in self.attributes]

    def __len__(self):
        return len(self.attributes)

    def __iter__(self):
        return iter(self.attributes)

    def __eq__(self, other):
        return (
            isinstance(other, AttributeSchema) and self.attributes == other.attributes
        )

    def to_json(self):
        return [{"name": a.name, "classes": a.cardinality} for a in self.attributes]

    @classmethod
    def from_json(cls, rows) -> "AttributeSchema":
        try:
            return cls([(r["name"], r["classes"]) for r in rows])
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed schema entry: {exc}") from exc


@dataclass
class ForwardSlice:
    """One attribute's forward result: fused feature, logits, probs."""

    fused: Tensor
    logits: Tensor
    probs: Tensor


@dataclass
class PassOutputs:
    visual_proj: Tensor
    question_proj: list
    fused: list
    logits: list
    probs: list
    q_inferred: list | None = None
    v_inferred: list | None = None
    sfr_q_logits: list | None = None
    sfr_v_logits: list | None = None
    diag_logits: Tensor | None = None


def _as_batch(x, width: int, what: str) -> Tensor:
    """Accept a (batch, width) tensor; promote untracked 1-D vectors."""
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.data.ndim == 1 and t.node_id < 0:
        t = Tensor(t.data.reshape(1, -1))
    if t.data.ndim != 2 or t.data.shape[1] != width:
        raise ShapeError(
            f"{what} expects shape (batch, {width}), got {t.data.shape}"
        )
    return t


class TriVqaModel:
    def __init__(
        self,
        schema: AttributeSchema,
        d_v: int,
        d_q: int,
        d: int = 64,
        fusion: str = "add",
        head_hidden: int = 1,
        head_width: int | None = None,
        stop_answer_gradient: bool = False,
        rng: np.random.Generator | None = None,
        params: dict[str, Tensor] | None = None,
    ):
        if fusion not in FUSION_MODES:
            raise ConfigError(f"model.fusion must be one of {FUSION_MODES}, got {fusion!r}")
        for label, val in (("d", d), ("d_v", d_v), ("d_q", d_q)):
            if int(val) != val or val < 1:
                raise ConfigError(f"model.{label} must be a positive integer, got {val}")
        if int(head_hidden) != head_hidden or head_hidden < 0:
            raise ConfigError(
                f"model.head_hidden must be a nonnegative integer, got {head_hidden}"
            )
        width = d if head_width is None else head_width
        if int(width) != width or width < 1:
            raise ConfigError(f"model.head_width must be a positive integer, got {width}")
        self.schema = schema
        self.d_v = int(d_v)
        self.d_q = int(d_q)
        self.d = int(d)
        self.fusion = fusion
        self.head_hidden = int(head_hidden)
        self.head_width = int(width)
        self.stop_answer_gradient = bool(stop_answer_gradient)
        if params is not None:
            self._adopt_params(params)
        else:
            if rng is None:
                raise ConfigError("model init needs either an rng or explicit params")
            self.params = self._init_params(rng)

    # -- parameter bookkeeping ------------------------------------------------

    def block_shapes(self) -> dict[str, tuple]:
        """Every parameter block, in declared order, with its shape."""
        d, w = self.d, self.head_width
        shapes: dict[str, tuple] = {
            "proj_v.w": (self.d_v, d),
            "proj_v.b": (d,),
            "proj_q.w": (self.d_q, d),
            "proj_q.b": (d,),
        }
        if self.fusion == "concat":
            shapes["fuse.w"] = (2 * d, d)
            shapes["fuse.b"] = (d,)
        for i, spec in enumerate(self.schema):
            fan = d
            for j in range(self.head_hidden):
                shapes[f"ans{i}.h{j}.w"] = (fan, w)
                shapes[f"ans{i}.h{j}.b"] = (w,)
                fan = w
            shapes[f"ans{i}.out.w"] = (fan, spec.cardinality)
            shapes[f"ans{i}.out.b"] = (spec.cardinality,)
        for i, spec in enumerate(self.schema):
            shapes[f"emb{i}.w"] = (spec.cardinality, d)
        for head in ("rev_q", "rev_v"):
            shapes[f"{head}.h.w"] = (d, d)
            shapes[f"{head}.h.b"] = (d,)
            shapes[f"{head}.out.w"] = (d, d)
            shapes[f"{head}.out.b"] = (d,)
        k = len(self.schema)
        shapes["diag.h.w"] = (k * d, d)
        shapes["diag.h.b"] = (d,)
        shapes["diag.out.w"] = (d, 2)
        shapes["diag.out.b"] = (2,)
        return shapes

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.block_shapes().values())

    def _init_params(self, rng) -> dict[str, Tensor]:
        params = {}
        for name, shape in self.block_shapes().items():
            if name.endswith(".b"):
                params[name] = Tensor(np.zeros(shape))
            elif name.startswith("emb"):
                # a lookup row is selected alone: effective fan-in is 1
                params[name] = Tensor(rng.standard_normal(shape))
            else:
                fan_in = shape[0]
                params[name] = Tensor(rng.standard_normal(shape) / np.sqrt(fan_in))
        return params

    def _adopt_params(self, params: dict[str, Tensor]):
        expected = self.block_shapes()
        got = {k: tuple(v.shape) for k, v in params.items()}
        want = {k: tuple(s) for k, s in expected.items()}
        if got != want:
            missing = sorted(set(want) - set(got))
            extra = sorted(set(got) - set(want))
            wrong = sorted(k for k in set(got) & set(want) if got[k] != want[k])
            raise ConfigError(
                "parameter blocks do not match the configuration: "
                f"missing={missing} extra={extra} mismatched={wrong}"
            )
        # rebuild in declared order so checkpoints and optimizers agree
        self.params = {
            k: (params[k] if isinstance(params[k], Tensor) else Tensor(params[k]))
            for k in expected
        }

    def watch_all(self, tape) -> None:
        for p in self.params.values():
            tape.watch(p)

    # -- graph pieces ---------------------------------------------------------

    def project_visual(self, v_raw) -> Tensor:
        v = _as_batch(v_raw, self.d_v, "visual features")
        return nd.add(nd.matmul(v, self.params["proj_v.w"]), self.params["proj_v.b"])

    def project_question(self, q_raw_i) -> Tensor:
        q = _as_batch(q_raw_i, self.d_q, "question features")
        return nd.add(nd.matmul(q, self.params["proj_q.w"]), self.params["proj_q.b"])

    def fuse(self, question_side: Tensor, visual_side: Tensor) -> Tensor:
        """Combine two common-space features. Slot order is question, visual."""
        a = _as_batch(question_side, self.d, "fusion question slot")
        b = _as_batch(visual_side, self.d, "fusion visual slot")
        if self.fusion == "add":
            return nd.add(a, b)
        h = nd.concat_cols([a, b])
        return nd.add(nd.matmul(h, self.params["fuse.w"]), self.params["fuse.b"])

    def _check_attribute(self, i: int) -> int:
        if not (0 <= i < len(self.schema)):
            raise ConfigError(
                f"attribute index {i} outside schema of {len(self.schema)} attributes"
            )
        return int(i)

    def _mlp(self, x: Tensor, layer_names) -> Tensor:
        # relu between layers, linear output
        h = x
        last = len(layer_names) - 1
        for j, prefix in enumerate(layer_names):
            h = nd.add(nd.matmul(h, self.params[f"{prefix}.w"]), self.params[f"{prefix}.b"])
            if j != last:
                h = nd.relu(h)
        return h

    def answer_logits(self, fused: Tensor, i: int) -> Tensor:
        i = self._check_attribute(i)
        layers = [f"ans{i}.h{j}" for j in range(self.head_hidden)] + [f"ans{i}.out"]
        return self._mlp(fused, layers)

    def forward_answer(self, v_raw, q_raw_i, i: int) -> ForwardSlice:
        i = self._check_attribute(i)
        fused = self.fuse(self.project_question(q_raw_i), self.project_visual(v_raw))
        logits = self.answer_logits(fused, i)
        return ForwardSlice(fused, logits, nd.softmax_rows(logits))

    def embed_answer(self, probs, i: int, stop_grad: bool | None = None) -> Tensor:
        i = self._check_attribute(i)
        c = self.schema.cardinalities[i]
        p = _as_batch(probs, c, f"answer distribution for attribute {i}")
        sums = p.data.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-6 or p.data.min() < -1e-6:
            raise NumericsError(
                f"answer distribution for attribute {i} is off the probability "
                f"simplex beyond 1e-6"
            )
        if stop_grad is None:
            stop_grad = self.stop_answer_gradient
        if stop_grad:
            p = nd.stop_gradient(p)
        return nd.matmul(p, self.params[f"emb{i}.w"])

    def infer_question(self, probs, v_raw, i: int) -> Tensor:
        """Reverse path answer+visual -> question feature (common space)."""
        i = self._check_attribute(i)
        emb = self.embed_answer(probs, i)
        fused = self.fuse(emb, self.project_visual(v_raw))
        return self._mlp(fused, ["rev_q.h", "rev_q.out"])

    def infer_visual(self, probs, q_raw_i, i: int) -> Tensor:
        """Reverse path answer+question -> visual feature (common space)."""
        i = self._check_attribute(i)
        emb = self.embed_answer(probs, i)
        fused = self.fuse(self.project_question(q_raw_i), emb)
        return self._mlp(fused, ["rev_v.h", "rev_v.out"])

    def second_forward_question(self, q_inferred: Tensor, visual_proj: Tensor, i: int) -> Tensor:
        """Re-answer from an inferred question feature and the true visual."""
        return self.answer_logits(self.fuse(q_inferred, visual_proj), i)

    def second_forward_visual(self, v_inferred: Tensor, question_proj: Tensor, i: int) -> Tensor:
        """Re-answer from the true question and an inferred visual feature."""
        return self.answer_logits(self.fuse(question_proj, v_inferred), i)

    def diagnose(self, fused_features) -> Tensor:
        fused_features = list(fused_features)
        k = len(self.schema)
        if len(fused_features) != k:
            raise ShapeError(
                f"diagnose needs {k} fused features, got {len(fused_features)}"
            )
        joint = nd.concat_cols(fused_features)
        return self._mlp(joint, ["diag.h", "diag.out"])

    # -- whole-batch pass -----------------------------------------------------

    def full_pass(
        self,
        v_raw,
        q_raw,
        want_reverse: bool = False,
        want_sfr: bool = False,
        want_diag: bool = False,
        answer_mode: str = "soft",
    ) -> PassOutputs:
        """Forward every attribute, optionally with reverse and SFR branches.

        q_raw has shape (batch, K, d_q). answer_mode "hard" replaces the
        predicted distribution with a one-hot of its argmax before the
        answer embedding; evaluation-only, since the one-hot is constant.
        """
        if answer_mode not in ANSWER_MODES:
            raise ConfigError(f"answer_mode must be one of {ANSWER_MODES}")
        if want_sfr:
            want_reverse = True
        v = _as_batch(v_raw, self.d_v, "visual features")
        q_arr = np.asarray(q_raw.data if isinstance(q_raw, Tensor) else q_raw, dtype=np.float64)
        k = len(self.schema)
        if q_arr.ndim != 3 or q_arr.shape[0] != v.data.shape[0] or q_arr.shape[1] != k or q_arr.shape[2] != self.d_q:
            raise ShapeError(
                f"question features expect shape (batch, {k}, {self.d_q}), got {q_arr.shape}"
            )
        pv = self.project_visual(v)
        out = PassOutputs(pv, [], [], [], [])
        if want_reverse:
            out.q_inferred, out.v_inferred = [], []
        if want_sfr:
            out.sfr_q_logits, out.sfr_v_logits = [], []
        for i in range(k):
            pq = self.project_question(np.ascontiguousarray(q_arr[:, i, :]))
            fused = self.fuse(pq, pv)
            logits = self.answer_logits(fused, i)
            probs = nd.softmax_rows(logits)
            out.question_proj.append(pq)
            out.fused.append(fused)
            out.logits.append(logits)
            out.probs.append(probs)
            if want_reverse:
                if answer_mode == "hard":
                    c = self.schema.cardinalities[i]
                    hard = np.zeros((probs.data.shape[0], c))
                    hard[np.arange(hard.shape[0]), probs.data.argmax(axis=1)] = 1.0
                    emb = self.embed_answer(Tensor(hard), i)
                else:
                    emb = self.embed_answer(probs, i)
                q_inf = self._mlp(self.fuse(emb, pv), ["rev_q.h", "rev_q.out"])
                v_inf = self._mlp(self.fuse(pq, emb), ["rev_v.h", "rev_v.out"])
                out.q_inferred.append(q_inf)
                out.v_inferred.append(v_inf)
                if want_sfr:
                    out.sfr_q_logits.append(self.second_forward_question(q_inf, pv, i))
                    out.sfr_v_logits.append(self.second_forward_visual(v_inf, pq, i))
        if want_diag:
            out.diag_logits = self.diagnose(out.fused)
        return out
