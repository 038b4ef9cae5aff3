"""Config-driven training runs and checkpoint reconstruction.

One run writes into its output directory:

    epoch_log.csv         per-epoch loss breakdown, lr, objective
    curves.csv            per-epoch reliability curve rows
    checkpoint.bin        parameters + normalization stats + config hash
    resolved_config.json  the canonical config plus the output directory

Determinism: the seed fans out into fixed lanes (dataset generation,
split, parameter init, batch shuffling), every reduction happens in a
fixed order, and no output file contains timestamps, so identical
config + seed reproduces every file byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as nd
from .autodiff import Tape
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_hash
from .data import (
    Dataset,
    NormStats,
    SynthConfig,
    feature_stats,
    load_features,
    normalize,
    split,
    synth_generate,
)
from .errors import CheckpointError, ConfigError, DivergenceError, SchemaMismatchError
from .evaluation import curve_point
from .losses import total_loss
from .metrics import CurveTracker
from .model import AttributeSchema, TriVqaModel
from .optim import learning_rate, sgd_step

EPOCH_LOG_HEADER = (
    "epoch,lr,ce_forward,rev_q,rev_v,sfr_q_ce,sfr_v_ce,"
    "consistency_q,consistency_v,diag_ce,total,objective"
)

NORM_BLOCKS = ("norm.v_mean", "norm.v_std", "norm.q_mean", "norm.q_std")


@dataclass
class TrainResult:
    out_dir: Path
    checkpoint_path: Path
    epoch_log_path: Path
    curves_path: Path
    config_path: Path
    model: TriVqaModel
    canonical: dict
    train_ds: Dataset
    test_ds: Dataset
    stats: NormStats | None
    tracker: CurveTracker
    epoch_rows: list[dict]


def prepare_datasets(rc: RunConfig) -> tuple[Dataset, Dataset, NormStats | None]:
    """Generate/load, split, and normalize according to the config."""
    if rc.source == "synth":
        full = synth_generate(rc.synth)
    else:
        full = load_features(rc.manifest)
        rc.resolve_data_shape(full.schema, full.d_v, full.d_q)
    train_ds, test_ds = split(full, rc.test_fraction, rc.seed)
    stats = None
    if rc.normalize:
        stats = feature_stats(train_ds)
        train_ds = normalize(train_ds, stats)
        test_ds = normalize(test_ds, stats)
    return train_ds, test_ds, stats


def _mode_needs(mode: str) -> tuple[bool, bool]:
    want_sfr = mode in ("+sfr", "full")
    want_reverse = mode != "baseline"
    return want_reverse, want_sfr


def run_training(rc: RunConfig) -> TrainResult:
    if rc.out_dir is None:
        raise ConfigError("out_dir: an output directory is required to train")
    out_dir = Path(rc.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_ds, test_ds, stats = prepare_datasets(rc)
    schema = train_ds.schema
    canonical = rc.canonical()
    weights = rc.active_weights()
    want_reverse, want_sfr = _mode_needs(rc.mode)
    diag_on = rc.diag_weight > 0.0

    model = TriVqaModel(
        schema,
        train_ds.d_v,
        train_ds.d_q,
        d=rc.d,
        fusion=rc.fusion,
        head_hidden=rc.head_hidden,
        head_width=rc.head_width,
        stop_answer_gradient=rc.stop_answer_gradient,
        rng=np.random.default_rng([rc.seed, 3]),
    )
    opt = rc.optimizer_state()
    shuffle_rng = np.random.default_rng([rc.seed, 4])

    v_all = train_ds.v_matrix()
    q_all = train_ds.q_tensor()
    ans_all = train_ds.answers_matrix()
    diag_all = train_ds.diagnosis_vector()
    n = len(train_ds)

    curve_ds = Dataset(
        schema,
        train_ds.samples[: min(rc.curve_samples, n)],
        train_ds.d_v,
        train_ds.d_q,
    )
    tracker = CurveTracker()
    epoch_lines = [EPOCH_LOG_HEADER]
    epoch_rows: list[dict] = []

    for epoch in range(rc.epochs):
        # curve row reflects the parameters entering this epoch
        tracker.add(epoch, curve_point(model, curve_ds, batch_size=256))
        perm = shuffle_rng.permutation(n)
        sums = {name: 0.0 for name in (
            "ce_forward", "rev_q", "rev_v", "sfr_q_ce", "sfr_v_ce",
            "consistency_q", "consistency_v", "total",
        )}
        diag_sum = 0.0
        diag_count = 0
        objective_sum = 0.0
        for start in range(0, n, rc.batch_size):
            idx = perm[start : start + rc.batch_size]
            bsize = len(idx)
            v_b = np.ascontiguousarray(v_all[idx])
            q_b = np.ascontiguousarray(q_all[idx])
            a_b = np.ascontiguousarray(ans_all[idx])
            d_b = diag_all[idx]
            with Tape() as tape:
                model.watch_all(tape)
                outs = model.full_pass(
                    v_b,
                    q_b,
                    want_reverse=want_reverse,
                    want_sfr=want_sfr,
                    want_diag=diag_on,
                )
                bd, objective = total_loss(outs, a_b, weights, rc.mode)
                labeled = d_b >= 0
                n_labeled = int(labeled.sum())
                diag_val = 0.0
                if diag_on and n_labeled:
                    if n_labeled == bsize:
                        diag_ce = nd.cross_entropy(outs.diag_logits, d_b)
                    else:
                        rows = np.flatnonzero(labeled)
                        diag_ce = nd.cross_entropy(
                            nd.take_rows(outs.diag_logits, rows), d_b[rows]
                        )
                    diag_val = diag_ce.item()
                    objective = nd.add(objective, nd.scale(diag_ce, rc.diag_weight))
                obj_val = objective.item()
                if not np.isfinite(obj_val):
                    last = epoch - 1 if epoch > 0 else None
                    raise DivergenceError(
                        f"training diverged: non-finite loss in epoch {epoch}; "
                        f"last finite epoch: {last if last is not None else 'none'}"
                    )
                grads = nd.backward(objective, tape)
                grad_arrays = {name: grads[p] for name, p in model.params.items()}
            sgd_step(model.params, grad_arrays, opt, epoch)
            for name in sums:
                sums[name] += getattr(bd, name) * bsize
            diag_sum += diag_val * n_labeled
            diag_count += n_labeled
            objective_sum += obj_val * bsize
        lr = learning_rate(opt, epoch)
        row = {name: sums[name] / n for name in sums}
        row["diag_ce"] = diag_sum / diag_count if diag_count else 0.0
        row["objective"] = objective_sum / n
        row["lr"] = lr
        row["epoch"] = epoch
        epoch_rows.append(row)
        epoch_lines.append(
            f"{epoch},{lr!r},"
            + ",".join(
                repr(row[name])
                for name in (
                    "ce_forward", "rev_q", "rev_v", "sfr_q_ce", "sfr_v_ce",
                    "consistency_q", "consistency_v", "diag_ce", "total", "objective",
                )
            )
        )

    epoch_log_path = out_dir / "epoch_log.csv"
    epoch_log_path.write_text("\n".join(epoch_lines) + "\n")
    curves_path = out_dir / "curves.csv"
    tracker.write_csv(curves_path)

    blocks = {name: p.data for name, p in model.params.items()}
    if stats is not None:
        blocks["norm.v_mean"] = stats.v_mean
        blocks["norm.v_std"] = stats.v_std
        blocks["norm.q_mean"] = stats.q_mean
        blocks["norm.q_std"] = stats.q_std
    checkpoint_path = out_dir / "checkpoint.bin"
    save_checkpoint(checkpoint_path, canonical, blocks)

    config_path = out_dir / "resolved_config.json"
    resolved = dict(canonical)
    resolved["out_dir"] = str(out_dir)
    config_path.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")

    return TrainResult(
        out_dir=out_dir,
        checkpoint_path=checkpoint_path,
        epoch_log_path=epoch_log_path,
        curves_path=curves_path,
        config_path=config_path,
        model=model,
        canonical=canonical,
        train_ds=train_ds,
        test_ds=test_ds,
        stats=stats,
        tracker=tracker,
        epoch_rows=epoch_rows,
    )


# ---------------------------------------------------------------------------
# checkpoint reconstruction


def model_from_checkpoint(path) -> tuple[TriVqaModel, dict, NormStats | None, str]:
    canonical, blocks, hash_hex = load_checkpoint(path)
    try:
        schema = AttributeSchema.from_json(canonical["dataset"]["schema"])
        mc = canonical["model"]
        model = TriVqaModel(
            schema,
            int(canonical["dataset"]["d_v"]),
            int(canonical["dataset"]["d_q"]),
            d=int(mc["d"]),
            fusion=mc["fusion"],
            head_hidden=int(mc["head_hidden"]),
            head_width=mc["head_width"],
            stop_answer_gradient=mc["stop_answer_gradient"],
            params={k: v for k, v in blocks.items() if not k.startswith("norm.")},
        )
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(
            f"checkpoint {path} does not reconstruct a model: {exc}"
        ) from exc
    stats = None
    if "norm.v_mean" in blocks:
        missing = [b for b in NORM_BLOCKS if b not in blocks]
        if missing:
            raise CheckpointError(f"checkpoint {path} lacks stat blocks {missing}")
        stats = NormStats(
            blocks["norm.v_mean"],
            blocks["norm.v_std"],
            blocks["norm.q_mean"],
            blocks["norm.q_std"],
        )
    return model, canonical, stats, hash_hex


def dataset_from_canonical(canonical: dict, data_manifest=None) -> Dataset:
    """The full (unsplit, unnormalized) dataset a checkpoint refers to;
    data_manifest overrides the source but must match the schema."""
    ds_sec = canonical["dataset"]
    if data_manifest is not None:
        ds = load_features(data_manifest)
        want_schema = AttributeSchema.from_json(ds_sec["schema"])
        if ds.schema != want_schema or ds.d_v != int(ds_sec["d_v"]) or ds.d_q != int(
            ds_sec["d_q"]
        ):
            raise SchemaMismatchError(
                f"dataset {data_manifest} (d_v={ds.d_v}, d_q={ds.d_q}, schema="
                f"{ds.schema.to_json()}) does not match the checkpoint "
                f"(d_v={ds_sec['d_v']}, d_q={ds_sec['d_q']}, schema={ds_sec['schema']})"
            )
        return ds
    if ds_sec["source"] == "synth":
        cfg = SynthConfig(
            schema=AttributeSchema.from_json(ds_sec["schema"]),
            n=int(ds_sec["n"]),
            d_v=int(ds_sec["d_v"]),
            d_q=int(ds_sec["d_q"]),
            noise_sigma=float(ds_sec["noise_sigma"]),
            class_sep=float(ds_sec["class_sep"]),
            answer_coupling=float(ds_sec["answer_coupling"]),
            hint_strength=float(ds_sec["hint_strength"]),
            hint_reliability=float(ds_sec["hint_reliability"]),
            n_centers=int(ds_sec["n_centers"]),
            seed=int(ds_sec["seed"]),
        )
        return synth_generate(cfg)
    return load_features(ds_sec["path"])


def eval_split(
    canonical: dict,
    ds: Dataset,
    which: str,
    stats: NormStats | None,
) -> Dataset:
    """Reproduce the run's split and return the requested part, normalized
    with the checkpoint's training statistics."""
    if which not in ("train", "test", "all"):
        raise ConfigError(f"split selector must be train, test, or all, got {which!r}")
    if which == "all":
        part = ds
    else:
        train_ds, test_ds = split(
            ds, float(canonical["split"]["test_fraction"]), int(canonical["seed"])
        )
        part = train_ds if which == "train" else test_ds
    return normalize(part, stats) if stats is not None else part
