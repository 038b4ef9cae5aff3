"""Command line interface.

Verbs: synth, train, eval, ablate, reliability, gradcheck. Every verb
takes --config/--seed/--out where meaningful; --seed overrides the
config seed, --out the config out_dir. Errors print one line
``ERROR <CODE>: <message>`` to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import build_run_config, load_config_file
from .data import save_features, synth_generate
from .errors import ConfigError, TriVqaError
from .evaluation import DEFAULT_RELIABILITY_MODE, MetricsReport, evaluate
from .gradcheck import miniature_model_check, standard_suite
from .kernels import BACKEND
from .losses import ABLATION_MODES
from .train import (
    dataset_from_canonical,
    eval_split,
    model_from_checkpoint,
    run_training,
)


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _load_run_config(args) -> "RunConfig":
    if args.config is None:
        raise ConfigError("config: --config PATH is required for this command")
    raw = load_config_file(args.config)
    return build_run_config(raw, seed_override=args.seed, out_override=args.out)


def cmd_synth(args) -> int:
    rc = _load_run_config(args)
    if rc.source != "synth":
        raise ConfigError("dataset.source: synth command needs a synth dataset config")
    if rc.out_dir is None:
        raise ConfigError("out_dir: an output directory is required")
    ds = synth_generate(rc.synth)
    out = Path(rc.out_dir)
    manifest = save_features(ds, out / "manifest.json")
    print(
        f"wrote {manifest} (n={len(ds)}, K={len(ds.schema)}, "
        f"d_v={ds.d_v}, d_q={ds.d_q})"
    )
    return 0


def cmd_train(args) -> int:
    rc = _load_run_config(args)
    result = run_training(rc)
    for row in result.epoch_rows:
        print(
            f"epoch {row['epoch']:3d}  lr {row['lr']:.6g}  "
            f"total {row['total']:.4f}  objective {row['objective']:.4f}"
        )
    print(
        f"trained mode={rc.mode} epochs={rc.epochs} backend={BACKEND} "
        f"params={result.model.parameter_count()}"
    )
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _write_report(report: MetricsReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    attr_lines = ["attribute,accuracy"]
    for name, acc in report.per_attribute_accuracy.items():
        attr_lines.append(f"{name},{acc!r}")
    (out_dir / "attributes.csv").write_text("\n".join(attr_lines) + "\n")
    rel_lines = [
        "attribute,direction,n_correct,n_incorrect,mse_correct,mse_incorrect,"
        "euclidean_correct,euclidean_incorrect,verdict_mse,verdict_euclidean"
    ]
    for g in report.reliability.groups:
        r = g.as_row()
        rel_lines.append(
            ",".join(
                str(r[k]) if not isinstance(r[k], float) else repr(r[k])
                for k in (
                    "attribute", "direction", "n_correct", "n_incorrect",
                    "mse_correct", "mse_incorrect", "euclidean_correct",
                    "euclidean_incorrect", "verdict_mse", "verdict_euclidean",
                )
            )
        )
    (out_dir / "reliability.csv").write_text("\n".join(rel_lines) + "\n")


def _evaluate_checkpoint(args) -> MetricsReport:
    model, canonical, stats, _ = model_from_checkpoint(args.checkpoint)
    full = dataset_from_canonical(canonical, data_manifest=args.data)
    part = eval_split(canonical, full, args.split, stats)
    return evaluate(model, part, args.split, answer_mode=args.answer_mode)


def cmd_eval(args) -> int:
    report = _evaluate_checkpoint(args)
    print(f"split={report.split} n={report.n_samples}")
    for name, acc in report.per_attribute_accuracy.items():
        print(f"  {name:12s} accuracy {_fmt(acc)}")
    print(f"  mean attribute accuracy {_fmt(report.mean_attribute_accuracy)}")
    if report.sfr_q_accuracy is not None:
        print(
            f"  re-answer accuracy: from inferred question {_fmt(report.sfr_q_accuracy)}, "
            f"from inferred visual {_fmt(report.sfr_v_accuracy)}"
        )
    d = report.diagnosis
    if d is not None:
        print(
            f"  diagnosis: sen {_fmt(d.sensitivity)} spe {_fmt(d.specificity)} "
            f"acc {_fmt(d.accuracy)} auc {_fmt(d.auc)}"
        )
    if args.out:
        _write_report(report, Path(args.out))
        print(f"report written to {args.out}")
    return 0


def cmd_reliability(args) -> int:
    report = _evaluate_checkpoint(args)
    print(f"split={report.split} n={report.n_samples} answer_mode={args.answer_mode}")
    for g in report.reliability.groups:
        r = g.as_row()
        print(
            f"  {g.attribute:12s} {g.direction:8s} "
            f"mse {_fmt(g.mse_correct)} vs {_fmt(g.mse_incorrect)} "
            f"({r['verdict_mse']})  euclidean {_fmt(g.euclidean_correct)} vs "
            f"{_fmt(g.euclidean_incorrect)} ({r['verdict_euclidean']})"
        )
    for direction in ("av_to_q", "aq_to_v"):
        good, decided = report.reliability.verdict_counts(direction, "mse")
        print(f"  {direction}: correct-group mse lower in {good}/{decided} decided groups")
    if args.out:
        _write_report(report, Path(args.out))
        print(f"report written to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    rc = _load_run_config(args)
    if rc.out_dir is None:
        raise ConfigError("out_dir: an output directory is required")
    base_out = Path(rc.out_dir)
    rows = []
    for mode in ABLATION_MODES:
        mode_rc = dataclasses.replace(
            rc, mode=mode, out_dir=str(base_out / mode.replace("+", "plus_"))
        )
        result = run_training(mode_rc)
        report = evaluate(
            result.model, result.test_ds, "test", want_sfr=False
        )
        rows.append((mode, report))
        print(
            f"mode {mode:10s} mean attribute accuracy "
            f"{report.mean_attribute_accuracy:.4f}"
        )
    names = rows[0][1].per_attribute_accuracy.keys()
    lines = ["mode,mean_attribute_accuracy," + ",".join(names)]
    for mode, report in rows:
        lines.append(
            f"{mode},{report.mean_attribute_accuracy!r},"
            + ",".join(repr(report.per_attribute_accuracy[n]) for n in names)
        )
    table = base_out / "ablation.csv"
    table.write_text("\n".join(lines) + "\n")
    print(f"ablation table: {table}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.corrupt_block:
        reports = [
            miniature_model_check(
                "add", seed=args.seed or 0, tolerance=args.tolerance,
                corrupt_block=args.corrupt_block,
            )
        ]
    else:
        reports = standard_suite(tolerance=args.tolerance, seed=args.seed or 0)
    all_lines = []
    for rep in reports:
        all_lines.extend(rep.lines())
    print(f"kernel backend: {BACKEND}")
    print("\n".join(all_lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.txt").write_text("\n".join(all_lines) + "\n")
    failed = sum(1 for rep in reports if not rep.passed)
    if failed:
        print(f"ERROR GRADCHECK: {failed} fragment(s) exceeded tolerance", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="trivqa",
        description="Triangular-reasoning VQA: train, evaluate, ablate, "
        "and audit answer reliability on feature-vector datasets.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON config path")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("synth", help="generate a synthetic dataset to files")
    common(sp)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("train", help="train one run from a config")
    common(sp)
    sp.set_defaults(fn=cmd_train)

    def eval_args(sp):
        sp.add_argument("--checkpoint", required=True, help="checkpoint.bin path")
        sp.add_argument("--data", default=None, help="override dataset manifest")
        sp.add_argument(
            "--split", default="test", choices=("train", "test", "all"),
            help="which part of the run's split to evaluate",
        )
        sp.add_argument(
            "--answer-mode", default=DEFAULT_RELIABILITY_MODE,
            choices=("soft", "hard"),
            help="answer distribution entering the reverse paths",
        )
        sp.add_argument("--out", default=None, help="directory for report files")

    sp = sub.add_parser("eval", help="full metrics report for a checkpoint")
    eval_args(sp)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser(
        "reliability", help="correct-vs-incorrect reliability table for a checkpoint"
    )
    eval_args(sp)
    sp.set_defaults(fn=cmd_reliability)

    sp = sub.add_parser("ablate", help="train every ablation mode and compare")
    common(sp)
    sp.set_defaults(fn=cmd_ablate)

    sp = sub.add_parser("gradcheck", help="finite-difference self-test")
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument(
        "--corrupt-block",
        default=None,
        help="negative control: offset this block's analytic gradient",
    )
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TriVqaError as exc:
        print(f"ERROR {exc.code}: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
