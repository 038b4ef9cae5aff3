"""Run configuration: parsing, validation, canonical form, hashing.

Configs are JSON. Every field is validated before any compute and every
rejection names the offending field by path (for example
"optimizer.momentum"). Unknown fields are rejected so typos cannot
silently fall back to defaults.

The canonical form is the fully resolved config (defaults applied,
schema and dims made explicit, output directory excluded); its sha256
over compact sorted JSON is the config hash embedded in checkpoints.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .losses import ABLATION_MODES, TERM_NAMES, LossWeights
from .model import AttributeSchema
from .optim import OptimizerState
from .data import SynthConfig

SOURCES = ("synth", "manifest")


def _reject(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _as_int(value, path: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _reject(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _reject(path, f"must be >= {minimum}, got {value}")
    return int(value)


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _reject(path, f"expected a number, got {value!r}")
    return float(value)


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        _reject(path, f"expected true/false, got {value!r}")
    return value


def _as_str(value, path: str) -> str:
    if not isinstance(value, str):
        _reject(path, f"expected a string, got {value!r}")
    return value


def _section(raw: dict, name: str, allowed) -> dict:
    sec = raw.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        _reject(name, f"expected an object, got {sec!r}")
    for key in sec:
        if key not in allowed:
            _reject(f"{name}.{key}", "unknown config field")
    return sec


@dataclass
class RunConfig:
    source: str
    synth: SynthConfig | None
    manifest: str | None
    test_fraction: float
    d: int
    fusion: str
    head_hidden: int
    head_width: int | None
    stop_answer_gradient: bool
    weights: LossWeights
    explicit_weights: frozenset
    mode: str
    diag_weight: float
    base_lr: float
    momentum: float
    decay_factor: float
    decay_period: int
    single_decay: bool
    epochs: int
    batch_size: int
    normalize: bool
    curve_samples: int
    seed: int
    out_dir: str | None = None
    _resolved_schema: AttributeSchema | None = field(default=None, repr=False)
    _resolved_dims: tuple | None = field(default=None, repr=False)

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            base_lr=self.base_lr,
            momentum=self.momentum,
            decay_factor=self.decay_factor,
            decay_period=self.decay_period,
            single_decay=self.single_decay,
        )

    def active_weights(self) -> LossWeights:
        return self.weights.for_mode(self.mode)

    def resolve_data_shape(self, schema: AttributeSchema, d_v: int, d_q: int):
        self._resolved_schema = schema
        self._resolved_dims = (int(d_v), int(d_q))

    def canonical(self) -> dict:
        """Fully resolved config as a plain dict; excludes out_dir."""
        if self.source == "synth":
            sc = self.synth
            dataset = {
                "source": "synth",
                "schema": sc.schema.to_json(),
                "n": sc.n,
                "d_v": sc.d_v,
                "d_q": sc.d_q,
                "noise_sigma": sc.noise_sigma,
                "class_sep": sc.class_sep,
                "answer_coupling": sc.answer_coupling,
                "hint_strength": sc.hint_strength,
                "hint_reliability": sc.hint_reliability,
                "n_centers": sc.n_centers,
                "seed": sc.seed,
            }
        else:
            if self._resolved_schema is None or self._resolved_dims is None:
                raise ConfigError(
                    "manifest-backed config not resolved against its dataset yet"
                )
            dataset = {
                "source": "manifest",
                "path": self.manifest,
                "schema": self._resolved_schema.to_json(),
                "d_v": self._resolved_dims[0],
                "d_q": self._resolved_dims[1],
            }
        return {
            "dataset": dataset,
            "split": {"test_fraction": self.test_fraction},
            "model": {
                "d": self.d,
                "fusion": self.fusion,
                "head_hidden": self.head_hidden,
                "head_width": self.head_width,
                "stop_answer_gradient": self.stop_answer_gradient,
            },
            "loss_weights": self.weights.as_dict(),
            "mode": self.mode,
            "diag_weight": self.diag_weight,
            "optimizer": {
                "base_lr": self.base_lr,
                "momentum": self.momentum,
                "decay_factor": self.decay_factor,
                "decay_period": self.decay_period,
                "single_decay": self.single_decay,
            },
            "train": {
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "normalize": self.normalize,
                "curve_samples": self.curve_samples,
            },
            "seed": self.seed,
        }


def config_hash(canonical: dict) -> str:
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return raw


def _parse_schema(value, path: str) -> AttributeSchema:
    if not isinstance(value, list) or not value:
        _reject(path, "expected a nonempty list of {name, classes} entries")
    rows = []
    for j, entry in enumerate(value):
        if not isinstance(entry, dict) or set(entry) != {"name", "classes"}:
            _reject(f"{path}[{j}]", "expected exactly the fields name and classes")
        rows.append((
            _as_str(entry["name"], f"{path}[{j}].name"),
            _as_int(entry["classes"], f"{path}[{j}].classes", minimum=2),
        ))
    try:
        return AttributeSchema(rows)
    except ConfigError as exc:
        _reject(path, exc.message)


def build_run_config(
    raw: dict,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    known_top = {
        "dataset",
        "split",
        "model",
        "loss_weights",
        "mode",
        "diag_weight",
        "optimizer",
        "train",
        "seed",
        "out_dir",
    }
    for key in raw:
        if key not in known_top:
            _reject(key, "unknown config field")

    seed = _as_int(raw.get("seed", 0), "seed")
    if seed_override is not None:
        seed = int(seed_override)

    ds_sec = _section(
        raw,
        "dataset",
        {
            "source",
            "schema",
            "n",
            "d_v",
            "d_q",
            "noise_sigma",
            "class_sep",
            "answer_coupling",
            "hint_strength",
            "hint_reliability",
            "n_centers",
            "seed",
            "manifest",
        },
    )
    source = _as_str(ds_sec.get("source", "synth"), "dataset.source")
    if source not in SOURCES:
        _reject("dataset.source", f"must be one of {SOURCES}, got {source!r}")
    synth_cfg = None
    manifest = None
    if source == "manifest":
        if "manifest" not in ds_sec:
            _reject("dataset.manifest", "required when dataset.source is 'manifest'")
        manifest = _as_str(ds_sec["manifest"], "dataset.manifest")
        for key in (
            "n",
            "d_v",
            "d_q",
            "noise_sigma",
            "class_sep",
            "answer_coupling",
            "hint_strength",
            "hint_reliability",
            "n_centers",
            "schema",
        ):
            if key in ds_sec:
                _reject(
                    f"dataset.{key}",
                    "not allowed when dataset.source is 'manifest' (read from the file)",
                )
    else:
        if "manifest" in ds_sec:
            _reject("dataset.manifest", "only allowed when dataset.source is 'manifest'")
        schema = (
            _parse_schema(ds_sec["schema"], "dataset.schema")
            if "schema" in ds_sec
            else AttributeSchema.default()
        )
        try:
            synth_cfg = SynthConfig(
                schema=schema,
                n=_as_int(ds_sec.get("n", 3000), "dataset.n", minimum=1),
                d_v=_as_int(ds_sec.get("d_v", 24), "dataset.d_v", minimum=1),
                d_q=_as_int(ds_sec.get("d_q", 8), "dataset.d_q", minimum=1),
                noise_sigma=_as_float(ds_sec.get("noise_sigma", 0.25), "dataset.noise_sigma"),
                class_sep=_as_float(ds_sec.get("class_sep", 1.0), "dataset.class_sep"),
                answer_coupling=_as_float(
                    ds_sec.get("answer_coupling", 0.95), "dataset.answer_coupling"
                ),
                hint_strength=_as_float(
                    ds_sec.get("hint_strength", 1.0), "dataset.hint_strength"
                ),
                hint_reliability=_as_float(
                    ds_sec.get("hint_reliability", 0.75), "dataset.hint_reliability"
                ),
                n_centers=_as_int(ds_sec.get("n_centers", 5), "dataset.n_centers", minimum=1),
                seed=_as_int(ds_sec.get("seed", seed), "dataset.seed"),
            )
        except ConfigError:
            raise

    split_sec = _section(raw, "split", {"test_fraction"})
    test_fraction = _as_float(split_sec.get("test_fraction", 0.3), "split.test_fraction")
    if not (0.0 < test_fraction < 1.0):
        _reject("split.test_fraction", f"must lie in (0, 1), got {test_fraction}")

    model_sec = _section(
        raw, "model", {"d", "fusion", "head_hidden", "head_width", "stop_answer_gradient"}
    )
    d = _as_int(model_sec.get("d", 64), "model.d", minimum=1)
    fusion = _as_str(model_sec.get("fusion", "add"), "model.fusion")
    if fusion not in ("add", "concat"):
        _reject("model.fusion", f"must be 'add' or 'concat', got {fusion!r}")
    head_hidden = _as_int(model_sec.get("head_hidden", 1), "model.head_hidden", minimum=0)
    head_width = model_sec.get("head_width")
    if head_width is not None:
        head_width = _as_int(head_width, "model.head_width", minimum=1)
    stop_answer_gradient = _as_bool(
        model_sec.get("stop_answer_gradient", False), "model.stop_answer_gradient"
    )

    lw_sec = _section(raw, "loss_weights", set(TERM_NAMES))
    explicit = frozenset(lw_sec)
    lw_values = {}
    for name in TERM_NAMES:
        if name in lw_sec:
            lw_values[name] = _as_float(lw_sec[name], f"loss_weights.{name}")
    try:
        weights = LossWeights(**lw_values)
    except ConfigError as exc:
        raise ConfigError(exc.message) from exc

    mode = _as_str(raw.get("mode", "full"), "mode")
    if mode not in ABLATION_MODES:
        _reject("mode", f"must be one of {ABLATION_MODES}, got {mode!r}")
    from .losses import MODE_TERMS

    for name in sorted(explicit):
        if name not in MODE_TERMS[mode] and getattr(weights, name) > 0.0:
            _reject(
                f"loss_weights.{name}",
                f"positive weight conflicts with mode {mode!r}, which excludes it",
            )

    diag_weight = _as_float(raw.get("diag_weight", 1.0), "diag_weight")
    if not (diag_weight >= 0.0):
        _reject("diag_weight", f"must be >= 0, got {diag_weight}")

    opt_sec = _section(
        raw,
        "optimizer",
        {"base_lr", "momentum", "decay_factor", "decay_period", "single_decay"},
    )
    base_lr = _as_float(opt_sec.get("base_lr", 0.001), "optimizer.base_lr")
    momentum = _as_float(opt_sec.get("momentum", 0.9), "optimizer.momentum")
    decay_factor = _as_float(opt_sec.get("decay_factor", 0.1), "optimizer.decay_factor")
    decay_period = _as_int(opt_sec.get("decay_period", 10), "optimizer.decay_period", minimum=1)
    single_decay = _as_bool(opt_sec.get("single_decay", False), "optimizer.single_decay")
    if not base_lr > 0.0:
        _reject("optimizer.base_lr", f"must be > 0, got {base_lr}")
    if not (0.0 <= momentum < 1.0):
        _reject("optimizer.momentum", f"must lie in [0, 1), got {momentum}")
    if not (0.0 < decay_factor <= 1.0):
        _reject("optimizer.decay_factor", f"must lie in (0, 1], got {decay_factor}")

    train_sec = _section(raw, "train", {"epochs", "batch_size", "normalize", "curve_samples"})
    epochs = _as_int(train_sec.get("epochs", 30), "train.epochs", minimum=1)
    batch_size = _as_int(train_sec.get("batch_size", 32), "train.batch_size", minimum=1)
    normalize = _as_bool(train_sec.get("normalize", True), "train.normalize")
    curve_samples = _as_int(
        train_sec.get("curve_samples", 512), "train.curve_samples", minimum=1
    )

    out_dir = raw.get("out_dir")
    if out_dir is not None:
        out_dir = _as_str(out_dir, "out_dir")
    if out_override is not None:
        out_dir = str(out_override)

    return RunConfig(
        source=source,
        synth=synth_cfg,
        manifest=manifest,
        test_fraction=test_fraction,
        d=d,
        fusion=fusion,
        head_hidden=head_hidden,
        head_width=head_width,
        stop_answer_gradient=stop_answer_gradient,
        weights=weights,
        explicit_weights=explicit,
        mode=mode,
        diag_weight=diag_weight,
        base_lr=base_lr,
        momentum=momentum,
        decay_factor=decay_factor,
        decay_period=decay_period,
        single_decay=single_decay,
        epochs=epochs,
        batch_size=batch_size,
        normalize=normalize,
        curve_samples=curve_samples,
        seed=seed,
        out_dir=out_dir,
    )
