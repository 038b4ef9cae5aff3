"""Evaluation sweep: reliability records, curve points, report assembly."""

import numpy as np

import pytest

from trivqa.data import synth_generate
from trivqa.evaluation import (
    curve_point,
    evaluate,
    reliability_records,
    run_eval_pass,
)
from trivqa.metrics import reliability_measure
from trivqa.model import TriVqaModel

from conftest import tiny_synth


@pytest.fixture(scope="module")
def setup():
    ds = synth_generate(tiny_synth(n=64))
    model = TriVqaModel(ds.schema, d_v=8, d_q=4, d=16, rng=np.random.default_rng(2))
    return model, ds


def test_eval_pass_shapes(setup):
    model, ds = setup
    ep = run_eval_pass(model, ds, batch_size=20, want_sfr=True)
    assert ep.predictions.shape == (64, 2)
    assert ep.labels.shape == (64, 2)
    assert ep.sfr_q_predictions.shape == (64, 2)
    assert ep.rel_mse.shape == (64, 2, 2)
    assert ep.rel_euclid.shape == (64, 2, 2)
    assert ep.diag_scores.shape == (64,)
    assert np.all((ep.diag_scores >= 0) & (ep.diag_scores <= 1))
    assert len(ep.ids) == 64


def test_batch_size_does_not_change_results(setup):
    model, ds = setup
    a = run_eval_pass(model, ds, batch_size=7)
    b = run_eval_pass(model, ds, batch_size=64)
    assert np.array_equal(a.predictions, b.predictions)
    # matmul accumulation order shifts with the block shape, so the float
    # outputs can wiggle in the last ulp
    assert np.allclose(a.rel_mse, b.rel_mse, rtol=1e-12, atol=0.0)
    assert np.allclose(a.diag_scores, b.diag_scores, rtol=1e-12, atol=0.0)


def test_reliability_entries_match_manual_recompute(setup):
    model, ds = setup
    ep = run_eval_pass(model, ds, batch_size=64, answer_mode="soft")
    v = ds.v_matrix()
    q = ds.q_tensor()
    outs = model.full_pass(v, q, want_reverse=True, answer_mode="soft")
    for i in range(2):
        for s in (0, 13, 63):
            mse_q, euc_q = reliability_measure(
                outs.q_inferred[i].data[s], outs.question_proj[i].data[s]
            )
            assert ep.rel_mse[s, i, 0] == pytest.approx(mse_q, rel=1e-12)
            assert ep.rel_euclid[s, i, 0] == pytest.approx(euc_q, rel=1e-12)
            mse_v, euc_v = reliability_measure(
                outs.v_inferred[i].data[s], outs.visual_proj.data[s]
            )
            assert ep.rel_mse[s, i, 1] == pytest.approx(mse_v, rel=1e-12)
            assert ep.rel_euclid[s, i, 1] == pytest.approx(euc_v, rel=1e-12)


def test_records_carry_correctness_flags(setup):
    model, ds = setup
    ep = run_eval_pass(model, ds)
    records = reliability_records(ds, ep)
    assert len(records) == 64 * 2 * 2
    by_key = {(r.sample_id, r.attribute, r.direction): r for r in records}
    correct = ep.predictions == ep.labels
    for s in (0, 5, 40):
        for i, attr in enumerate(ds.schema.names):
            r = by_key[(ep.ids[s], attr, "av_to_q")]
            assert r.answer_correct == bool(correct[s, i])
            assert r.mse == pytest.approx(ep.rel_mse[s, i, 0])


def test_records_require_reliability_pass(setup):
    model, ds = setup
    ep = run_eval_pass(model, ds, want_reliability=False)
    with pytest.raises(ValueError):
        reliability_records(ds, ep)


def test_soft_and_hard_modes_differ_on_uncertain_model(setup):
    model, ds = setup
    soft = run_eval_pass(model, ds, answer_mode="soft")
    hard = run_eval_pass(model, ds, answer_mode="hard")
    # an untrained model is uncertain, so the one-hot swap moves the
    # reverse features while forward predictions stay identical
    assert np.array_equal(soft.predictions, hard.predictions)
    assert not np.allclose(soft.rel_mse, hard.rel_mse)


def test_curve_point_is_mean_of_soft_pass(setup):
    model, ds = setup
    point = curve_point(model, ds)
    ep = run_eval_pass(model, ds, answer_mode="soft")
    assert point["av_to_q"][0] == pytest.approx(ep.rel_mse[:, :, 0].mean(), rel=1e-12)
    assert point["aq_to_v"][1] == pytest.approx(ep.rel_euclid[:, :, 1].mean(), rel=1e-12)


def test_report_assembly(setup):
    model, ds = setup
    report = evaluate(model, ds, "train")
    assert report.split == "train"
    assert report.n_samples == 64
    assert set(report.per_attribute_accuracy) == {"size", "edge"}
    assert report.mean_attribute_accuracy == pytest.approx(
        np.mean(list(report.per_attribute_accuracy.values()))
    )
    assert report.sfr_q_accuracy is not None
    assert report.diagnosis is not None
    payload = report.to_json_dict()
    assert payload["n_samples"] == 64
    assert len(payload["reliability"]) == 4
    import json

    json.dumps(payload)  # must be JSON-clean


def test_report_without_sfr(setup):
    model, ds = setup
    report = evaluate(model, ds, "train", want_sfr=False)
    assert report.sfr_q_accuracy is None
    assert report.sfr_v_accuracy is None
