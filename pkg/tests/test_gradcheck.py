"""Finite-difference self-test: positive and negative controls."""

import numpy as np
import pytest

import trivqa.autodiff as nd
from trivqa.autodiff import Tensor
from trivqa.errors import ConfigError
from trivqa.gradcheck import grad_check, miniature_model_check, standard_suite
from trivqa.model import AttributeSchema, TriVqaModel


def quadratic_setup():
    rng = np.random.default_rng(3)
    w = Tensor(rng.standard_normal((4, 3)))
    b = Tensor(rng.standard_normal(3))
    x = rng.standard_normal((6, 4))
    y = rng.standard_normal((6, 3))

    def loss_fn():
        return nd.mse(nd.add(nd.matmul(Tensor(x), w), b), Tensor(y))

    return {"w": w, "b": b}, loss_fn


def test_simple_fragment_passes():
    params, loss_fn = quadratic_setup()
    report = grad_check(params, loss_fn, fragment="quad")
    assert report.passed
    assert report.worst < 1e-4
    assert [b.name for b in report.blocks] == ["w", "b"]


def test_corrupt_block_is_caught():
    params, loss_fn = quadratic_setup()
    report = grad_check(params, loss_fn, fragment="quad", corrupt_block="b")
    assert not report.passed
    by_name = {b.name: b for b in report.blocks}
    assert not by_name["b"].ok
    assert by_name["w"].ok


def test_unknown_corrupt_block_rejected():
    params, loss_fn = quadratic_setup()
    with pytest.raises(ConfigError):
        grad_check(params, loss_fn, corrupt_block="nope")


def test_standard_suite_all_pass():
    reports = standard_suite()
    names = [r.fragment for r in reports]
    assert names == [
        "linear",
        "relu-mlp",
        "softmax-ce",
        "tri-vqa-mini-add",
        "tri-vqa-mini-concat",
    ]
    for r in reports:
        assert r.passed, f"{r.fragment} worst={r.worst}"


def test_miniature_covers_every_block():
    report = miniature_model_check("concat", seed=1)
    assert report.passed
    rng = np.random.default_rng([1, 17])
    model = TriVqaModel(
        AttributeSchema([("attr_a", 3), ("attr_b", 2)]),
        d_v=12,
        d_q=9,
        d=8,
        fusion="concat",
        rng=rng,
    )
    assert {b.name for b in report.blocks} == set(model.block_shapes())


def test_miniature_stop_answer_gradient_variant():
    report = miniature_model_check("add", seed=2, stop_answer_gradient=True)
    assert report.passed, report.worst


def test_miniature_corrupt_block_fails_loudly():
    report = miniature_model_check("add", seed=0, corrupt_block="rev_q.out.w")
    assert not report.passed
    bad = [b.name for b in report.blocks if not b.ok]
    assert "rev_q.out.w" in bad


def test_report_lines_format():
    params, loss_fn = quadratic_setup()
    report = grad_check(params, loss_fn, fragment="quad")
    lines = report.lines()
    assert lines[0].startswith("[quad] tolerance=")
    assert any(line.startswith("  block=w max_rel_err=") for line in lines)
    assert lines[-1].startswith("[quad] PASS worst=")
    assert lines[-1].endswith("s)")
