import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from bellmem.engine import SettingsDistribution, SourceModel, run_session
from bellmem.model import BehaviorTable, TrialRecord, behavior_from_lhv
from bellmem.statistics import (
    CountStatistic,
    CountsMatrix,
    SignalingError,
    ZeroPairError,
    analysis_report,
    b_conditional,
    b_value,
    check_identity,
    chsh_estimate,
    chsh_value,
    correlator,
    counts_from_records,
    expected_increment,
    fluctuation_monte_carlo,
    format_report,
    martingale_pvalue,
    parse_report,
    t_statistic,
)
from bellmem.strategies import (
    all_assignments,
    behavior_playback,
    demo_model,
    make_deterministic,
    pr_box_table,
    random_lhv_model,
)

from conftest import lhv_models

ALL_00 = BehaviorTable(np.tile([0, 0, 0, 1.0], (4, 1)))
DEMO = behavior_from_lhv(demo_model())


def biased_demo_drift(eps):
    """Enumerate setting pairs with their probabilities and the demo outcomes."""
    p = {"a": (1 + eps) / 2, "a'": (1 - eps) / 2, "b": (1 + eps) / 2, "b'": (1 - eps) / 2}
    alice = {"a": "+", "a'": "+"}
    bob = {"b": "+", "b'": "0"}
    drift = 0.0
    for x, y in itertools.product(("a", "a'"), ("b", "b'")):
        o = alice[x] + bob[y]
        s = {("a", "b", "++"): -1, ("a", "b'", "+0"): 1, ("a'", "b", "0+"): 1, ("a'", "b'", "++"): 1}.get((x, y, o), 0)
        drift += p[x] * p[y] * s
    return drift


def test_closed_form_biased_drift():
    for eps in (0.0, 0.05, 0.1, 0.2):
        assert biased_demo_drift(eps) == pytest.approx(-eps * (1 + eps) / 2, abs=1e-15)
        dist = SettingsDistribution(eps, eps)
        assert expected_increment(DEMO, dist) == pytest.approx(biased_demo_drift(eps), abs=1e-15)


def test_b_value_examples():
    assert b_value(DEMO) == 0
    assert b_value(BehaviorTable.uniform()) == 0.5
    vals = [b_value(behavior_from_lhv(make_deterministic(a))) for a in all_assignments()]
    assert min(vals) == 0 and max(vals) == 1


def test_b_value_rejects_invalid():
    with pytest.raises(ValueError):
        b_value(BehaviorTable(np.zeros((4, 4))))


def test_chsh_and_correlators():
    assert chsh_value(ALL_00) == 2
    assert chsh_value(DEMO) == 2
    assert chsh_value(BehaviorTable.uniform()) == 0
    assert correlator(ALL_00, "a'b") == 1
    assert correlator(DEMO, "ab") == 1
    assert correlator(DEMO, "ab'") == -1
    assert correlator(DEMO, 3) == -1


def test_identity_examples():
    assert check_identity(BehaviorTable.uniform()) == 0
    assert check_identity(DEMO) == 0
    assert b_value(pr_box_table()) == -0.5
    assert chsh_value(pr_box_table()) == 4
    assert check_identity(pr_box_table()) == 0


def test_identity_rejects_signaling():
    t = BehaviorTable.from_rows({"ab": {"+0": 1}, "ab'": {"00": 1}, "a'b": {"00": 1}, "a'b'": {"00": 1}})
    with pytest.raises(SignalingError) as info:
        check_identity(t)
    assert info.value.deviation == 1


def test_identity_symbolic():
    # general no-signaling table: marginals pA(x), pB(y) plus the four P(++) cells
    pa, pa_, pb, pb_ = sp.symbols("pa pa_ pb pb_")
    c = sp.symbols("c0:4")
    margA = {0: pa, 1: pa_}
    margB = {0: pb, 1: pb_}
    rows = {}
    for i, (x, y) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        pp = c[i]
        rows[i] = (pp, margA[x] - pp, margB[y] - pp, 1 - margA[x] - margB[y] + pp)
    E = {i: r[0] + r[3] - r[1] - r[2] for i, r in rows.items()}
    S = E[0] + E[2] + E[1] - E[3]
    B = rows[1][1] + rows[2][2] + rows[3][0] - rows[0][0]
    assert sp.simplify(S - (2 - 4 * B)) == 0


@given(lhv_models())
def test_identity_and_bounds_on_lhv(model):
    t = behavior_from_lhv(model)
    b, s = b_value(t), chsh_value(t)
    assert b >= -1e-12
    assert s <= 2 + 1e-12
    assert check_identity(t) <= 1e-12


def test_counts_basic():
    assert counts_from_records([]).total == 0
    recs = [TrialRecord(i + 1, True, sa, sb, 1, 1) for i, (sa, sb) in enumerate(itertools.product((0, 1), repeat=2))]
    c = counts_from_records(recs)
    assert np.array_equal(c.counts[:, 0], [1, 1, 1, 1])
    assert c.total == 4
    with pytest.raises(ValueError, match="record 1"):
        counts_from_records([recs[0], (0, 0, 0, 0)])


def test_counts_demo_session_within_five_sigma():
    n = 10**5
    s = run_session(random_lhv_model(2, 5), SourceModel(1), SettingsDistribution(), n, 1)
    c = counts_from_records(s)
    assert c.total == n
    p = behavior_from_lhv(random_lhv_model(2, 5)).prob
    tot = c.pair_totals()[:, None]
    assert np.all(np.abs(c.counts / tot - p) <= 5 * np.sqrt(p * (1 - p) / tot) + 1e-12)


@pytest.mark.parametrize("eps, q", [(0.0, 1.0), (0.1, 1.0), (0.0, 0.5)])
def test_b_conditional_demo_is_exactly_zero(eps, q):
    s = run_session(demo_model(), SourceModel(q), SettingsDistribution(eps, eps), 10**5, 2)
    est = b_conditional(counts_from_records(s))
    assert abs(est.value) <= 4 * est.se + 1e-15
    if q == 1.0:
        assert est.value == 0 and est.se == 0


def test_b_conditional_zero_pair():
    counts = CountsMatrix(np.array([[5, 0, 0, 0], [0, 0, 0, 0], [1, 1, 1, 1], [2, 0, 0, 0]]))
    with pytest.raises(ZeroPairError, match="ab'"):
        b_conditional(counts)
    with pytest.raises(ZeroPairError):
        chsh_estimate(counts)


def test_b_conditional_standard_error_by_hand():
    counts = CountsMatrix(np.array([[30, 10, 0, 60], [0, 20, 0, 80], [0, 0, 50, 50], [40, 0, 0, 10]]))
    est = b_conditional(counts)
    assert est.value == pytest.approx(0.2 + 0.5 + 0.8 - 0.3)
    assert est.se == pytest.approx(math.sqrt(0.3 * 0.7 / 100 + 0.2 * 0.8 / 100 + 0.25 / 100 + 0.16 / 50))


def test_t_statistic_examples():
    s = run_session(demo_model(), SourceModel(0), SettingsDistribution(), 1000, 0)
    assert t_statistic(s).t == 0
    n = 10**6
    s = run_session(demo_model(), SourceModel(1), SettingsDistribution(), n, 5)
    assert abs(t_statistic(s).b_joint4) <= 0.005
    s = run_session(demo_model(), SourceModel(1), SettingsDistribution(0.1, 0.1), n, 5)
    assert t_statistic(s).b_joint4 == pytest.approx(4 * biased_demo_drift(0.1), abs=0.01)
    assert 4 * biased_demo_drift(0.1) == pytest.approx(-0.22)


def test_count_statistic_bounds():
    with pytest.raises(ValueError):
        CountStatistic(5, 4)


def test_chsh_estimate_degeneracy():
    s = run_session(demo_model(), SourceModel(0), SettingsDistribution(), 1000, 0)
    assert chsh_estimate(counts_from_records(s)).value == 2
    s = run_session(random_lhv_model(3, 1), SourceModel(0.01), SettingsDistribution(), 10**6, 0)
    assert abs(chsh_estimate(counts_from_records(s)).value - 2) <= 0.05


def test_chsh_estimate_demo_closed_form():
    q = 0.3
    s = run_session(demo_model(), SourceModel(q), SettingsDistribution(), 10**6, 4)
    est = chsh_estimate(counts_from_records(s))
    # E(ab)=E(a'b)=1, E(ab')=E(a'b')=1-2q
    assert est.value == pytest.approx(1 + 1 + (1 - 2 * q) - (1 - 2 * q), abs=5 * est.se + 1e-12)


def test_martingale_pvalue_examples():
    assert martingale_pvalue(0, 17) == 1
    assert martingale_pvalue(5, 17) == 1
    assert martingale_pvalue(-200, 10**4) == pytest.approx(math.exp(-2), rel=1e-15)
    assert martingale_pvalue(-200, 10**4) == pytest.approx(0.13534, abs=1e-5)
    assert martingale_pvalue(-50, 50) == pytest.approx(math.exp(-25))
    with pytest.raises(ValueError):
        martingale_pvalue(-11, 10)
    with pytest.raises(ValueError):
        martingale_pvalue(0, 0)


@given(st.integers(1, 10**6), st.data())
def test_martingale_pvalue_monotone(n, data):
    t1 = data.draw(st.integers(-n, -1))
    t2 = data.draw(st.integers(-n, t1))
    assert martingale_pvalue(t2, n) <= martingale_pvalue(t1, n)
    assert martingale_pvalue(t1, n) <= martingale_pvalue(t1, n + 1)


def test_filter_invariance_and_dilution():
    from bellmem.engine import filter_detected

    for q in (0.1, 0.5, 1.0):
        s = run_session(random_lhv_model(3, 2), SourceModel(q), SettingsDistribution(), 20000, 1)
        assert t_statistic(filter_detected(s)).t == t_statistic(s).t


def test_dilution_scales_drift():
    model = make_deterministic("++,0+")  # B = 1
    n = 10**6
    for q in (0.2, 1.0):
        b4 = t_statistic(run_session(model, SourceModel(q), SettingsDistribution(), n, 3)).b_joint4
        # increments for this model have variance at most 1
        assert b4 == pytest.approx(q * 1.0, abs=5 * 4 / math.sqrt(n))


def test_fluctuation_summary_is_reproducible():
    a = fluctuation_monte_carlo(demo_model(), SettingsDistribution(), SourceModel(1), 100, 200, 9)
    b = fluctuation_monte_carlo(demo_model(), SettingsDistribution(), SourceModel(1), 100, 200, 9)
    assert np.array_equal(a.b_joint4, b.b_joint4)
    assert a.quantiles == b.quantiles


def test_fluctuation_demo_symmetric():
    reps = 10**4
    summary = fluctuation_monte_carlo(demo_model(), SettingsDistribution(), SourceModel(1), 100, reps, 1)
    # exact: T is a symmetric walk, P(T<0) = (1 - P(T=0))/2
    assert summary.frac_negative == pytest.approx(0.5 * (1 - np.mean(summary.b_joint4 == 0)), abs=5 * 0.5 / math.sqrt(reps))
    assert summary.frac_reject <= 0.05


def test_fluctuation_positive_drift_never_negative():
    summary = fluctuation_monte_carlo(make_deterministic("++,0+"), SettingsDistribution(), SourceModel(1), 10**4, 50, 2)
    assert summary.frac_negative == 0
    assert summary.frac_reject == 0


def test_fluctuation_rejects_zero_reps():
    with pytest.raises(ValueError):
        fluctuation_monte_carlo(demo_model(), SettingsDistribution(), SourceModel(1), 10, 0, 0)


def test_report_keys_and_round_trip():
    s = run_session(behavior_playback(pr_box_table()), SourceModel(1), SettingsDistribution(), 1000, 1)
    rep = analysis_report(s, table=pr_box_table())
    keys = list(rep)
    assert keys[0] == "n" and keys[1] == "counts.ab.++" and keys[16] == "counts.a'b'.00"
    assert keys[17:] == ["b_cond", "b_cond_se", "t", "b_joint4", "p_value", "s_hat", "s_hat_se", "identity_deviation"]
    assert parse_report(format_report(rep)) == rep


def test_report_joint_only_skips_conditionals():
    recs = [TrialRecord(1, True, 0, 0, 1, 1)]
    with pytest.raises(ZeroPairError):
        analysis_report(recs)
    rep = analysis_report(recs, conditional=False)
    assert "b_cond" not in rep and rep["t"] == -1
