import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import NoActivationError, RuleBaseError
from app.fuzzy.engine import (
    MembershipFunction,
    OutputDistribution,
    defuzz_centroid,
    defuzz_mean_of_max,
    evaluate,
    infer,
    load_rulebase,
    mf_eval,
    rule_strengths,
    rulebase_from_dict,
    rulebase_to_dict,
    snorm,
    tnorm,
)

OUT_TERMS = {
    "negative": [-1.0, -1.0, -0.5, 0.0],
    "zero": [-0.5, 0.0, 0.0, 0.5],
    "positive": [0.0, 0.5, 1.0, 1.0],
}


def _spec(rules, q=1001, **extra):
    return {
        "variables": [
            {"name": "a", "universe": [0, 1], "terms": {"lo": [0, 0, 0.25, 0.5], "hi": [0.5, 0.75, 1, 1]}},
            {"name": "b", "universe": [0, 1], "terms": {"lo": [0, 0, 0.25, 0.5], "hi": [0.5, 0.75, 1, 1]}},
            {"name": "out", "universe": [-1, 1], "terms": OUT_TERMS},
        ],
        "rules": rules,
        "q": q,
        **extra,
    }


@pytest.mark.parametrize("x,expected", [(0.0, 0.0), (0.25, 1.0), (0.5, 1.0), (0.625, 0.5), (0.8, 0.0), (-3, 0.0)])
def test_trapezoid_examples(x, expected):
    mf = MembershipFunction(a=0.0, b=0.25, c=0.5, d=0.75)
    assert mf_eval(mf, x) == pytest.approx(expected)


def test_shoulders_and_triangles():
    left_shoulder = MembershipFunction.of((0.0, 0.0, 0.25, 0.5))
    assert mf_eval(left_shoulder, 0.0) == 1.0
    assert mf_eval(left_shoulder, 0.375) == pytest.approx(0.5)
    triangle = MembershipFunction.of((-0.5, 0.0, 0.0, 0.5))
    assert mf_eval(triangle, 0.0) == 1.0
    assert mf_eval(triangle, 0.25) == pytest.approx(0.5)


def test_membership_corners_must_be_ordered():
    with pytest.raises(ValidationError):
        MembershipFunction(a=0.5, b=0.25, c=0.75, d=1.0)


def test_norm_examples():
    assert tnorm(0.3, 0.8) == 0.3
    assert tnorm(0.5, 0.4, "product") == pytest.approx(0.2)
    assert snorm(0.3, 0.8) == 0.8
    assert snorm(0.5, 0.5, "probabilistic_sum") == pytest.approx(0.75)


def test_norm_laws():
    rng = np.random.default_rng(2)
    for a, b, c in rng.random((200, 3)):
        for kind in ("min", "product"):
            assert tnorm(a, b, kind) == pytest.approx(tnorm(b, a, kind))
            assert tnorm(a, 1.0, kind) == pytest.approx(a)
            assert tnorm(tnorm(a, b, kind), c, kind) == pytest.approx(tnorm(a, tnorm(b, c, kind), kind))
            assert 0.0 <= tnorm(a, b, kind) <= min(a, b) + 1e-12
        for kind in ("max", "probabilistic_sum"):
            assert snorm(a, b, kind) == pytest.approx(snorm(b, a, kind))
            assert snorm(a, 0.0, kind) == pytest.approx(a)
            assert max(a, b) - 1e-12 <= snorm(a, b, kind) <= 1.0


def test_no_rule_fires_gives_zero_distribution_and_no_activation():
    rb = rulebase_from_dict(_spec([{"if": [["a", "hi"]], "then": [["out", "positive"]]}]))
    dist = infer(rb, {"a": 0.1})["out"]
    assert not dist.values.any()
    with pytest.raises(NoActivationError):
        defuzz_centroid(dist)
    with pytest.raises(NoActivationError):
        defuzz_mean_of_max(dist)
    assert evaluate(rb, {"a": 0.1}) == {"out": None}


def test_full_strength_rule_reproduces_the_term():
    rb = rulebase_from_dict(_spec([{"if": [["a", "hi"]], "then": [["out", "positive"]]}]))
    dist = infer(rb, {"a": 0.9})["out"]
    expected = MembershipFunction.of(OUT_TERMS["positive"]).sample(dist.positions)
    assert np.allclose(dist.values, expected)


def test_two_rules_clip_and_take_the_maximum():
    rb = rulebase_from_dict(_spec([
        {"if": [["a", "lo"]], "then": [["out", "negative"]]},
        {"if": [["b", "hi"]], "then": [["out", "positive"]]},
    ]))
    # a=0.4 -> lo 0.4; b=0.65 -> hi 0.6
    assert rule_strengths(rb, {"a": 0.4, "b": 0.65}) == pytest.approx([0.4, 0.6])
    dist = infer(rb, {"a": 0.4, "b": 0.65})["out"]
    z = dist.positions
    neg = np.minimum(MembershipFunction.of(OUT_TERMS["negative"]).sample(z), 0.4)
    pos = np.minimum(MembershipFunction.of(OUT_TERMS["positive"]).sample(z), 0.6)
    assert np.allclose(dist.values, np.maximum(neg, pos))
    assert dist.values.max() == pytest.approx(0.6)


def test_connectives_and_negation():
    rb = rulebase_from_dict(_spec([
        {"if": [["a", "hi"], ["b", "hi"]], "then": [["out", "positive"]], "connective": "or"},
        {"if": [["a", "hi"], ["b", "hi", "not"]], "then": [["out", "negative"]]},
    ], **{"and": "product", "or": "probabilistic_sum"}))
    # a: hi 0.4 ; b: hi 0.2
    s_or, s_and_not = rule_strengths(rb, {"a": 0.6, "b": 0.55})
    assert s_or == pytest.approx(0.4 + 0.2 - 0.08)
    assert s_and_not == pytest.approx(0.4 * 0.8)


def test_bounded_sum_aggregation_saturates_at_one():
    rules = [
        {"if": [["a", "hi"]], "then": [["out", "zero"]]},
        {"if": [["b", "hi"]], "then": [["out", "zero"]]},
    ]
    rb = rulebase_from_dict(_spec(rules, aggregation="bounded_sum"))
    dist = infer(rb, {"a": 1.0, "b": 1.0})["out"]
    assert dist.values.max() == 1.0
    rb = rulebase_from_dict(_spec(rules, aggregation="bounded_sum"))
    half = infer(rb, {"a": 0.6, "b": 0.6})["out"]  # each clipped at 0.4
    assert half.values.max() == pytest.approx(0.8)


def test_centroid_examples():
    z = np.linspace(-1, 1, 5)
    assert defuzz_centroid(OutputDistribution("v", z, np.ones(5))) == pytest.approx(0.0)
    spike = np.array([0, 0, 0, 1.0, 0])
    assert defuzz_centroid(OutputDistribution("v", z, spike)) == pytest.approx(0.5)
    assert defuzz_centroid(OutputDistribution("v", z, np.array([0, 1.0, 0, 1.0, 1.0]))) == pytest.approx(0.5 / 3 * 2)


def test_mean_of_max_examples():
    z = np.linspace(-1, 1, 5)
    assert defuzz_mean_of_max(OutputDistribution("v", z, np.array([0, 1.0, 1.0, 0.2, 0]))) == pytest.approx(-0.25)
    assert defuzz_mean_of_max(OutputDistribution("v", z, np.array([0.1, 0, 0, 0, 0.4]))) == pytest.approx(1.0)


def test_mean_of_max_matches_argmax_scan():
    rng = np.random.default_rng(6)
    z = np.linspace(-1, 1, 101)
    for _ in range(100):
        values = np.round(rng.random(101), 1)
        expected = z[values == values.max()].mean()
        assert defuzz_mean_of_max(OutputDistribution("v", z, values)) == pytest.approx(expected)


def test_mean_of_max_ignores_uniform_scaling():
    rng = np.random.default_rng(7)
    z = np.linspace(-1, 1, 51)
    for _ in range(50):
        values = np.round(rng.random(51), 1)
        values[0] = 1.0
        scaled = values * rng.uniform(0.1, 1.0)
        assert defuzz_mean_of_max(OutputDistribution("v", z, scaled)) == pytest.approx(
            defuzz_mean_of_max(OutputDistribution("v", z, values))
        )


def test_centroid_matches_dense_integration():
    rules = [
        {"if": [["a", "lo"]], "then": [["out", "negative"]]},
        {"if": [["a", "hi"]], "then": [["out", "zero"]]},
        {"if": [["b", "hi"]], "then": [["out", "positive"]]},
    ]
    coarse = rulebase_from_dict(_spec(rules, q=1001))
    dense = rulebase_from_dict(_spec(rules, q=100001))
    rng = np.random.default_rng(9)
    checked = 0
    for a, b in rng.random((60, 2)):
        inputs = {"a": float(a), "b": float(b)}
        if max(rule_strengths(coarse, inputs)) < 0.2:
            continue
        got = defuzz_centroid(infer(coarse, inputs)["out"])
        ref = defuzz_centroid(infer(dense, inputs)["out"])
        assert abs(got - ref) < 1e-3
        checked += 1
    assert checked > 10


def test_centroid_stays_inside_active_support():
    rb = rulebase_from_dict(_spec([{"if": [["a", "hi"]], "then": [["out", "positive"]]}]))
    for a in np.linspace(0.55, 1.0, 10):
        c = defuzz_centroid(infer(rb, {"a": float(a)})["out"])
        assert 0.0 <= c <= 1.0


def test_sample_positions_are_symmetric():
    rb = rulebase_from_dict(_spec([{"if": [["a", "hi"]], "then": [["out", "positive"]]}], q=11))
    z = infer(rb, {"a": 1.0})["out"].positions
    assert np.array_equal(z, -z[::-1])
    assert z[0] == -1.0 and z[-1] == 1.0 and z[5] == 0.0


@pytest.mark.parametrize("bad", [
    {"rules": [{"if": [["a", "huge"]], "then": [["out", "positive"]]}]},
    {"rules": [{"if": [["c", "lo"]], "then": [["out", "positive"]]}]},
    {"rules": [{"if": [["a", "lo"]], "then": [["out", "sideways"]]}]},
    {"rules": [{"if": [["a", "lo", "maybe"]], "then": [["out", "zero"]]}]},
    {"rules": [{"if": [], "then": [["out", "zero"]]}]},
    {"q": 1000},
    {"q": 1},
    {"defuzz": "bisector"},
])
def test_malformed_rule_bases_are_rejected(bad):
    spec = _spec([{"if": [["a", "lo"]], "then": [["out", "zero"]]}])
    spec.update(bad)
    with pytest.raises(RuleBaseError):
        rulebase_from_dict(spec)


def test_missing_input_is_rejected():
    rb = rulebase_from_dict(_spec([{"if": [["a", "lo"], ["b", "lo"]], "then": [["out", "zero"]]}]))
    with pytest.raises(RuleBaseError):
        infer(rb, {"a": 0.1})


def test_rule_base_file_round_trip(tmp_path):
    rb = rulebase_from_dict(_spec([
        {"name": "first", "if": [["a", "lo"], ["b", "hi", "not"]], "then": [["out", "negative"]]},
        {"if": [["b", "hi"]], "then": [["out", "positive"]], "connective": "or"},
    ], defuzz="mean_of_max"))
    path = tmp_path / "rb.json"
    path.write_text(json.dumps(rulebase_to_dict(rb)))
    loaded = load_rulebase(path)
    assert loaded.rule_names() == ["first", "rule_2"]
    assert loaded.defuzz == rb.defuzz
    for a, b in np.random.default_rng(1).random((20, 2)):
        inputs = {"a": float(a), "b": float(b)}
        assert evaluate(loaded, inputs) == evaluate(rb, inputs)


def test_invalid_json_file_is_a_rule_base_error(tmp_path):
    path = tmp_path / "rb.json"
    path.write_text("{not json")
    with pytest.raises(RuleBaseError):
        load_rulebase(path)
