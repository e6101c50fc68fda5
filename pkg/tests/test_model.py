import itertools

import numpy as np
import pytest
from hypothesis import given
from scipy.optimize import linprog

from bellmem.model import (
    BehaviorTable,
    LhvModel,
    MemoryPolicy,
    StrategyFileError,
    TrialRecord,
    behavior_from_lhv,
    behavior_from_policy,
    check_no_signaling,
    format_lhv_model,
    parse_strategy_text,
    validate_behavior,
)
from bellmem.strategies import all_assignments, demo_model, make_deterministic, uniform_model

from conftest import lhv_models

PAIRS = [(0, 0), (0, 1), (1, 0), (1, 1)]
OUTS = [(1, 1), (1, 0), (0, 1), (0, 0)]


def oracle_table(model: LhvModel) -> np.ndarray:
    """Straight loop over hidden values, settings and outcomes."""
    t = np.zeros((4, 4))
    for i in range(model.k):
        for r, (sa, sb) in enumerate(PAIRS):
            for c, (x, y) in enumerate(OUTS):
                pa = model.resp_a[i, sa] if x else 1 - model.resp_a[i, sa]
                pb = model.resp_b[i, sb] if y else 1 - model.resp_b[i, sb]
                t[r, c] += model.weights[i] * pa * pb
    return t


def test_uniform_table_validates():
    report = validate_behavior(BehaviorTable.uniform())
    assert report.ok
    assert report.max_row_deviation == 0


def test_short_row_fails_with_deviation():
    prob = np.full((4, 4), 0.25)
    prob[2] = [0.3, 0.3, 0.2, 0.1]
    report = validate_behavior(BehaviorTable(prob))
    assert not report.ok
    assert report.max_row_deviation == pytest.approx(0.1)
    assert report.row_deviations[2] == pytest.approx(0.1)


def test_negative_entry_fails():
    prob = np.full((4, 4), 0.25)
    prob[0] = [0.5, 0.5, 0.25, -0.25]
    assert not validate_behavior(BehaviorTable(prob)).ok


def test_table_shape_checked():
    with pytest.raises(ValueError):
        BehaviorTable(np.ones((3, 4)))


def test_no_signaling_uniform_and_constructed():
    assert check_no_signaling(BehaviorTable.uniform()) == 0
    # Alice detects with certainty under (a, b) and never under (a, b')
    t = BehaviorTable.from_rows({
        "ab": {"+0": 1.0}, "ab'": {"00": 1.0}, "a'b": {"00": 1.0}, "a'b'": {"00": 1.0},
    })
    assert check_no_signaling(t) == pytest.approx(1.0)


def test_demo_table():
    t = behavior_from_lhv(demo_model())
    expected = BehaviorTable.from_rows({
        "ab": {"++": 1}, "ab'": {"+0": 1}, "a'b": {"++": 1}, "a'b'": {"+0": 1},
    })
    assert t == expected


def test_half_responses_give_uniform_table():
    assert behavior_from_lhv(uniform_model()).allclose(BehaviorTable.uniform(), 0)


def test_mixture_of_two_deterministic_is_average():
    d1, d2 = make_deterministic("++,+0"), make_deterministic("0+,0+")
    mix = LhvModel(
        weights=[0.5, 0.5],
        resp_a=np.vstack([d1.resp_a, d2.resp_a]),
        resp_b=np.vstack([d1.resp_b, d2.resp_b]),
    )
    avg = (behavior_from_lhv(d1).prob + behavior_from_lhv(d2).prob) / 2
    assert np.allclose(behavior_from_lhv(mix).prob, avg, atol=0)


@given(lhv_models())
def test_lhv_tables_valid_and_no_signaling(model):
    t = behavior_from_lhv(model)
    assert validate_behavior(t).ok
    assert check_no_signaling(t) <= 1e-12
    assert np.max(np.abs(t.prob - oracle_table(model))) <= 1e-12


@given(lhv_models(), lhv_models())
def test_table_affine_in_weights(m1, m2):
    mix = LhvModel(
        weights=np.concatenate([0.3 * m1.weights, 0.7 * m2.weights]),
        resp_a=np.vstack([m1.resp_a, m2.resp_a]),
        resp_b=np.vstack([m1.resp_b, m2.resp_b]),
    )
    expect = 0.3 * behavior_from_lhv(m1).prob + 0.7 * behavior_from_lhv(m2).prob
    assert np.max(np.abs(behavior_from_lhv(mix).prob - expect)) <= 1e-12


def _vertex_tables():
    return np.array([behavior_from_lhv(make_deterministic(a)).prob.reshape(-1) for a in all_assignments()])


@given(lhv_models(max_k=3))
def test_table_is_convex_combination_of_vertices(model):
    # closed form: each hidden value spreads over the 16 assignments as a product measure
    mu = np.zeros(16)
    for i in range(model.k):
        for j, bits in enumerate(itertools.product((1, 0), repeat=4)):
            p = model.weights[i]
            for resp, bit in zip((*model.resp_a[i], *model.resp_b[i]), bits):
                p *= resp if bit else 1 - resp
            mu[j] += p
    V = _vertex_tables()
    assert np.max(np.abs(mu @ V - behavior_from_lhv(model).prob.reshape(-1))) <= 1e-12


def test_convex_membership_by_lp():
    rng = np.random.default_rng(3)
    V = _vertex_tables()
    for _ in range(20):
        k = int(rng.integers(1, 5))
        w = rng.exponential(size=k)
        model = LhvModel(w / w.sum(), rng.uniform(size=(k, 2)), rng.uniform(size=(k, 2)))
        target = behavior_from_lhv(model).prob.reshape(-1)
        res = linprog(np.zeros(16), A_eq=np.vstack([V.T, np.ones(16)]),
                      b_eq=np.append(target, 1.0), bounds=[(0, None)] * 16)
        assert res.status == 0


def test_lhv_model_invariants():
    with pytest.raises(ValueError):
        LhvModel([0.5, 0.4], [[0, 0], [0, 0]], [[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        LhvModel([1.0], [[1.2, 0]], [[0, 0]])
    with pytest.raises(ValueError):
        LhvModel([1.0], [[0, 0], [0, 0]], [[0, 0]])
    with pytest.raises(TypeError):
        behavior_from_lhv(BehaviorTable.uniform())


def _rec(i, sa, sb, oa, ob):
    return TrialRecord(i, True, sa, sb, oa, ob)


def test_policy_depth0_history_independent():
    policy = MemoryPolicy.stationary(demo_model())
    d = behavior_from_lhv(demo_model())
    assert behavior_from_policy(policy, []) == d
    assert behavior_from_policy(policy, [_rec(1, 0, 1, 1, 0), _rec(2, 1, 1, 0, 1)]) == d


def test_policy_depth1_switches_on_last_outcome():
    D, U = demo_model(), uniform_model()

    def model_at(window):
        return D if window and window[-1].outcome == 0 else U

    policy = MemoryPolicy(model_at, depth=1)
    assert behavior_from_policy(policy, [_rec(1, 0, 0, 1, 1)]) == behavior_from_lhv(D)
    assert behavior_from_policy(policy, [_rec(1, 0, 0, 1, 1), _rec(2, 0, 0, 1, 0)]) == behavior_from_lhv(U)
    assert behavior_from_policy(policy, []).allclose(BehaviorTable.uniform(), 0)


def test_policy_window_is_bounded():
    seen = []

    def model_at(window):
        seen.append(len(window))
        return D

    D = demo_model()
    policy = MemoryPolicy(model_at, depth=2)
    history = [_rec(i, 0, 0, 0, 0) for i in range(1, 6)]
    behavior_from_policy(policy, history)
    assert seen == [2]


def test_policy_returning_garbage_rejected():
    policy = MemoryPolicy(lambda w: BehaviorTable.uniform(), depth=0)
    with pytest.raises(TypeError):
        behavior_from_policy(policy, [])


def test_trial_record_no_emission_must_be_00():
    with pytest.raises(ValueError):
        TrialRecord(1, False, 0, 0, 1, 0)


STRATEGY = """\
# two hidden values
lambda x weight=0.25
lambda y weight=0.75
respA x a=1 a'=0.5
respB x b=0 b'=1
respA y a=0.2 a'=0.3
respB y b=0.4 b'=0.6
"""


def test_parse_strategy_file():
    sf = parse_strategy_text(STRATEGY)
    m = sf.models["main"]
    assert m.labels == ("x", "y")
    assert np.allclose(m.weights, [0.25, 0.75])
    assert np.allclose(m.resp_a, [[1, 0.5], [0.2, 0.3]])
    assert np.allclose(m.resp_b, [[0, 1], [0.4, 0.6]])


def test_strategy_file_round_trip():
    m = parse_strategy_text(STRATEGY).models["main"]
    assert parse_strategy_text(format_lhv_model(m)).models["main"] == m


@pytest.mark.parametrize(
    "text, lineno",
    [
        ("lambda x weight=1\nrespA x a=1 a'=0\nrespB x b=2 b'=0\n", 3),
        ("lambda x weight=1\nrespA x a=1\nrespB x b=0 b'=0\n", 2),
        ("lambda x weight=1\nbogus\n", 2),
        ("lambda x weight=0.5\nrespA x a=1 a'=0\nrespB x b=0 b'=0\n", 1),
        ("lambda x weight=1\nrespA x a=1 a'=0\n", 1),
        ("lambda x weight=1\nrespA x a=1 a'=0\nrespB x b=0 b'=0\nrespB y b=0 b'=0\n", 4),
        ("lambda x weight=abc\n", 1),
        ("lambda x weight=1\nlambda x weight=0\n", 2),
    ],
)
def test_strategy_parse_errors_carry_line(text, lineno):
    with pytest.raises(StrategyFileError) as info:
        parse_strategy_text(text)
    assert info.value.lineno == lineno
    assert f"line {lineno}" in str(info.value)
