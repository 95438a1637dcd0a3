import math
import random
import statistics

import numpy as np
import pytest

from coexsim import table1_params, validate, slicing_plan
from coexsim import agents
from coexsim.agents import (QTable, QTablePair, Transition, reward,
                            softmax_probs, softmax_select, ql_update,
                            doql_update, extract_policy, greedy_action,
                            build_single_user_model, value_iteration,
                            model_action_values, vi_initialize,
                            predict_avg_terminal_reward,
                            terminal_outcome_distribution,
                            DegreeDistribution, IRSA_DISTRIBUTION,
                            irsa_action, save_tables, load_tables,
                            table_fingerprint)


def scn(num_iot=1, **overrides):
    params = table1_params(num_iot=num_iot, **overrides)
    return validate(params, slicing_plan(params.bandwidth_total,
                                         params.bandwidth_total / 2))


# -- reward -------------------------------------------------------------------

def test_reward_examples():
    assert reward(0, 0, 1) == pytest.approx(25.0)
    assert reward(0, 0, 0) == 0.0
    assert reward(50, 10, 0) == -1.0


def test_reward_bounds_over_grid():
    for l in range(0, 120, 3):
        for v in range(0, 60, 2):
            win = reward(l, v, 1)
            lose = reward(l, v, 0)
            assert 0.0 < win <= 25.0
            assert -1.0 <= lose <= 0.0


# -- softmax -------------------------------------------------------------------

def test_softmax_probs_sum_to_one():
    rng = random.Random(3)
    for _ in range(200):
        values = [rng.uniform(-50, 50) for _ in range(rng.randint(1, 12))]
        probs = softmax_probs(values, rng.choice((0.01, 1.0, 100.0)))
        assert abs(sum(probs) - 1.0) < 1e-12
        assert all(p >= 0 for p in probs)


def test_softmax_uniform_when_values_equal():
    from scipy import stats
    table = QTable(n_actions=10)
    rng = random.Random(11)
    counts = [0] * 10
    draws = 100_000
    state = (0, 0, 0)
    for _ in range(draws):
        counts[softmax_select(table, state, rng, temperature=1.0)] += 1
    expected = draws / 10
    chi2 = sum((c - expected) ** 2 / expected for c in counts)
    assert chi2 < stats.chi2.ppf(0.999, df=9)


def test_softmax_low_temperature_is_greedy():
    table = QTable(n_actions=4)
    table.q[(0, 0)] = [0.1, 0.7, 0.3, 0.2]
    rng = random.Random(5)
    picks = [softmax_select(table, (0, 0, 0), rng, temperature=1e-9)
             for _ in range(2000)]
    assert all(p == 1 for p in picks)


def test_softmax_closed_form_two_actions():
    table = QTable(n_actions=2, temperature=0.7)
    table.q[(0, 0)] = [0.0, math.log(2.0) * 0.7]
    rng = random.Random(21)
    draws = 100_000
    ones = sum(softmax_select(table, (0, 0, 0), rng) for _ in range(draws))
    assert abs(ones / draws - 2.0 / 3.0) < 0.01


def test_softmax_requires_positive_temperature():
    with pytest.raises(ValueError):
        softmax_probs([1.0, 2.0], 0.0)


def test_softmax_extreme_values_stable():
    probs = softmax_probs([1e6, -1e6, 0.0], 1.0)
    assert abs(sum(probs) - 1.0) < 1e-12
    assert probs[0] == pytest.approx(1.0)


# -- update rules ---------------------------------------------------------------

def _pair(rule="as_printed"):
    pair = QTablePair(n_actions=2, learning_rate=0.1, discount=0.9,
                      update_rule=rule)
    return pair


class _Coin:
    """rng stub driving which table doql_update touches."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_doql_update_hand_example():
    # as printed: select with the other table, evaluate with the updated one
    pair = _pair()
    s, s2 = (3, 1, 0), (4, 2, 0)
    pair.q1[(3, 1)] = [1.0, 0.0]
    pair.q1[(4, 2)] = [2.0, 0.5]      # evaluation values
    pair.q2[(4, 2)] = [5.0, 1.0]      # argmax -> action 0
    t = Transition(s, 0, s2, 0.0, False)
    which = doql_update(pair, t, _Coin([0.0]))
    assert which == 1
    assert pair.q1[(3, 1)][0] == pytest.approx(0.9 * 1.0 + 0.1 * 0.9 * 2.0)
    assert pair.q1[(3, 1)][0] == pytest.approx(1.08)


def test_doql_cross_eval_variant():
    pair = _pair("cross_eval")
    s, s2 = (3, 1, 0), (4, 2, 0)
    pair.q1[(3, 1)] = [1.0, 0.0]
    pair.q1[(4, 2)] = [0.0, 9.0]      # own argmax -> action 1
    pair.q2[(4, 2)] = [0.3, 2.0]      # evaluated there
    doql_update(pair, Transition(s, 0, s2, 0.0, False), _Coin([0.0]))
    assert pair.q1[(3, 1)][0] == pytest.approx(0.9 + 0.1 * 0.9 * 2.0)


def test_doql_zero_learning_rate_is_identity():
    pair = _pair()
    pair.learning_rate = 0.0
    pair.q1[(0, 0)] = [0.4, 0.6]
    doql_update(pair, Transition((0, 0, 0), 1, (1, 1, 0), 5.0, False),
                _Coin([0.0]))
    assert pair.q1[(0, 0)] == [0.4, 0.6]


def test_doql_terminal_full_rate_writes_reward():
    pair = _pair()
    pair.learning_rate = 1.0
    doql_update(pair, Transition((0, 0, 0), 1, (1, 1, 1), 25.0, True),
                _Coin([0.9]))
    assert pair.q2[(0, 0)][1] == pytest.approx(25.0)
    assert (0, 0) not in pair.q1       # exactly one table touched


def test_doql_table_choice_is_fair():
    pair = QTablePair(n_actions=2)
    rng = random.Random(13)
    t = Transition((0, 0, 0), 0, (1, 0, 0), 0.0, True)
    ones = sum(doql_update(pair, t, rng) == 1 for _ in range(100_000))
    assert abs(ones / 100_000 - 0.5) < 0.01


def test_ql_update_hand_example():
    table = QTable(n_actions=2, learning_rate=0.1, discount=0.9)
    table.q[(3, 1)] = [1.0, 0.0]
    table.q[(4, 2)] = [2.0, 0.5]
    ql_update(table, Transition((3, 1, 0), 0, (4, 2, 0), 0.0, False))
    assert table.q[(3, 1)][0] == pytest.approx(1.08)


def test_ql_zero_learning_rate_is_identity():
    table = QTable(n_actions=2, learning_rate=0.0)
    table.q[(0, 0)] = [0.7, 0.1]
    ql_update(table, Transition((0, 0, 0), 0, (1, 0, 0), 3.0, False))
    assert table.q[(0, 0)] == [0.7, 0.1]


def test_double_q_reduces_maximization_bias():
    # two-step chain: a zero-reward hop into a state whose every action has
    # mean-zero noisy terminal reward; single-table bootstrap overestimates
    s0, s1 = (0, 0, 0), (1, 0, 0)
    k = 8
    ql_est = []
    doql_est = []
    for seed in range(200):
        rng = random.Random(1000 + seed)
        table = QTable(n_actions=k, learning_rate=0.1, discount=1.0)
        pair = QTablePair(n_actions=k, learning_rate=0.1, discount=1.0)
        for _ in range(150):
            a = rng.randrange(k)
            r = rng.gauss(0.0, 1.0)
            ql_update(table, Transition(s1, a, None, r, True))
            doql_update(pair, Transition(s1, a, None, r, True), rng)
            ql_update(table, Transition(s0, 0, s1, 0.0, False))
            doql_update(pair, Transition(s0, 0, s1, 0.0, False), rng)
        ql_est.append(table.q[(0, 0)][0])
        doql_est.append(pair.action_values(s0)[0])
    assert statistics.mean(ql_est) > 0.05          # clear positive bias
    wins = sum(a > b for a, b in zip(ql_est, doql_est))
    assert wins > 130                              # sign test, p << 0.05
    assert statistics.mean(ql_est) > statistics.mean(doql_est)


# -- policy extraction -----------------------------------------------------------

def test_extract_policy_matches_single_table_greedy_when_equal():
    pair = QTablePair(n_actions=3)
    table = QTable(n_actions=3)
    rows = {(0, 0): [0.1, 0.9, 0.4], (10, 2): [0.5, 0.2, 0.1]}
    for key, row in rows.items():
        pair.q1[key] = list(row)
        pair.q2[key] = list(row)
        table.q[key] = list(row)
    assert extract_policy(pair) == extract_policy(table)


def test_extract_policy_tie_breaks_to_smaller_degree():
    pair = QTablePair(n_actions=2)
    pair.q1[(0, 0)] = [0.0, 2.0]
    pair.q2[(0, 0)] = [2.0, 0.0]
    assert extract_policy(pair)[(0, 0)] == 0


def test_extract_policy_scale_invariant():
    pair = QTablePair(n_actions=4)
    pair.q1[(1, 1)] = [0.3, 0.1, 0.9, 0.2]
    pair.q2[(1, 1)] = [0.2, 0.4, 0.8, 0.1]
    base = extract_policy(pair)
    for key in pair.q1:
        pair.q1[key] = [3.0 * v for v in pair.q1[key]]
        pair.q2[key] = [3.0 * v for v in pair.q2[key]]
    assert extract_policy(pair) == base


def test_greedy_action_prefers_first_max():
    assert greedy_action([1.0, 3.0, 3.0]) == 1


# -- single-user model + VI -------------------------------------------------------

def test_model_geometric_split():
    model = build_single_user_model(scn(), 0.5)
    si = model.index[(9, 0)]
    a = 2
    lo = model.row_ptr[si * model.n_actions + a]
    hi = model.row_ptr[si * model.n_actions + a + 1]
    entries = [(model.ent_prob[e], model.ent_next[e],
                model.ent_latency[e]) for e in range(lo, hi)]
    assert len(entries) == 3
    assert entries[0][0] == pytest.approx(0.5)      # decode at slot 1
    assert entries[0][2] == 10
    assert entries[1][0] == pytest.approx(0.25)     # decode at slot 2
    assert entries[1][2] == 11
    assert entries[2][0] == pytest.approx(0.25)     # whole frame failed
    assert entries[2][1] == model.index[(19, 2)]


def test_model_action_zero_is_deterministic_aging():
    model = build_single_user_model(scn(), 0.7)
    si = model.index[(5, 0)]
    lo = model.row_ptr[si * model.n_actions + 0]
    hi = model.row_ptr[si * model.n_actions + 1]
    assert hi - lo == 1
    assert model.ent_prob[lo] == pytest.approx(1.0)
    assert model.ent_next[lo] == model.index[(15, 0)]


def test_model_rows_normalized():
    for q in (0.0, 0.3, 0.99, 1.0):
        model = build_single_user_model(scn(), q)
        assert np.abs(model.row_sums() - 1.0).max() < 1e-12


def test_model_start_distribution():
    model = build_single_user_model(scn(), 0.5)
    dist = model.start_distribution()
    assert abs(sum(dist.values()) - 1.0) < 1e-12
    p_a = 0.1
    norm = 1.0 - (1.0 - p_a) ** 10
    assert dist[(9, 0)] == pytest.approx(p_a / norm)         # slot-0 arrival
    assert dist[(0, 0)] == pytest.approx((1 - p_a) ** 9 * p_a / norm)


def test_vi_certain_success_picks_single_shot():
    model = build_single_user_model(scn(), 1.0)
    values, policy = value_iteration(model)
    assert policy[(0, 0)] == 1       # all degrees >= 1 tie exactly
    assert values[(0, 0)] == pytest.approx(50.0 / 6.0)
    assert values[(9, 0)] == pytest.approx(reward(10, 1, 1))


def test_vi_zero_success_no_positive_value():
    model = build_single_user_model(scn(), 0.0)
    values, policy = value_iteration(model)
    assert all(v <= 0.0 for v in values.values())


def test_vi_fixed_point_within_tolerance():
    model = build_single_user_model(scn(), 0.6)
    tol = 1e-9
    values, _ = value_iteration(model, tol=tol)
    v = np.array([values[s] for s in model.states])
    q = model_action_values(model, values)
    assert np.abs(q.max(axis=1) - v).max() < 2 * tol


def test_vi_rejects_unnormalized_model():
    model = build_single_user_model(scn(), 0.4)
    model.ent_prob[0] *= 2.0
    with pytest.raises(ValueError):
        value_iteration(model)


def test_vi_initialize_matches_vi_policy():
    model = build_single_user_model(scn(), 0.8)
    _, vi_policy = value_iteration(model, discount=0.95)
    pair = QTablePair(n_actions=10, discount=0.95)
    vi_initialize(pair, model)
    assert extract_policy(pair) == vi_policy
    table = QTable(n_actions=10, discount=0.95)
    vi_initialize(table, model)
    assert extract_policy(table) == vi_policy


def test_uninitialized_tables_are_empty():
    pair = QTablePair(n_actions=10)
    assert pair.q1 == {} and pair.q2 == {}
    assert pair.action_values((4, 2, 0)) == [0.0] * 10


def test_predicted_terminal_reward_certain_success():
    model = build_single_user_model(scn(), 1.0)
    _, policy = value_iteration(model)
    predicted = predict_avg_terminal_reward(model, policy)
    start = model.start_distribution()
    expected = sum(p * reward(l0 + 1, 1, 1) for (l0, _), p in start.items())
    assert predicted == pytest.approx(expected, rel=1e-12)


def test_terminal_distribution_certain_success():
    model = build_single_user_model(scn(), 1.0)
    _, policy = value_iteration(model)
    latency_prob, drop = terminal_outcome_distribution(model, policy)
    assert drop == pytest.approx(0.0, abs=1e-15)
    start = model.start_distribution()
    for (l0, _), p in start.items():
        assert latency_prob[l0 + 1] == pytest.approx(p)


# -- degree distribution -----------------------------------------------------------

def test_irsa_distribution_frequencies():
    rng = random.Random(31)
    counts = {2: 0, 3: 0, 8: 0}
    draws = 100_000
    for _ in range(draws):
        counts[IRSA_DISTRIBUTION.sample(rng)] += 1
    assert abs(counts[2] / draws - 0.25) < 0.01
    assert abs(counts[3] / draws - 0.60) < 0.01
    assert abs(counts[8] / draws - 0.15) < 0.01


def test_irsa_support_fits_uplink():
    IRSA_DISTRIBUTION.check_support(9)
    with pytest.raises(ValueError):
        IRSA_DISTRIBUTION.check_support(7)


def test_irsa_placement_no_duplicates():
    rng = random.Random(12)
    for _ in range(2000):
        slots = irsa_action(IRSA_DISTRIBUTION, rng, 9)
        assert len(slots) == len(set(slots))
        assert all(1 <= s <= 9 for s in slots)
        assert len(slots) in (2, 3, 8)


def test_irsa_consecutive_placement_is_degree():
    rng = random.Random(12)
    degrees = {irsa_action(IRSA_DISTRIBUTION, rng, 9,
                           placement="consecutive") for _ in range(500)}
    assert degrees == {2, 3, 8}


def test_degree_distribution_validation():
    with pytest.raises(ValueError):
        DegreeDistribution((1, 2), (0.5, 0.4))


# -- persistence ------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    pair = QTablePair(n_actions=3)
    pair.q1[(0, 0)] = [0.5, -0.25, 1.0 / 3.0]
    pair.q2[(0, 0)] = [0.0, 2.0, -1.5]
    pair.q1[(12, 4)] = [1e-9, 0.0, 7.25]
    path = tmp_path / "tables.csv"
    save_tables(path, pair)
    again = load_tables(path)
    assert again.q1[(0, 0)] == pair.q1[(0, 0)]
    assert again.q2[(0, 0)] == pair.q2[(0, 0)]
    assert again.q1[(12, 4)] == pair.q1[(12, 4)]
    assert again.q2[(12, 4)] == [0.0, 0.0, 0.0]


def test_fingerprint_detects_mutation():
    pair = QTablePair(n_actions=2)
    pair.q1[(0, 0)] = [0.0, 1.0]
    before = table_fingerprint(pair)
    assert before == table_fingerprint(pair)
    pair.q1[(0, 0)][0] = 0.1
    assert table_fingerprint(pair) != before
