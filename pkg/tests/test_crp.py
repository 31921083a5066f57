import numpy as np
import pytest

from app.crp import (
    PENDING,
    Concentration,
    CrpState,
    crp_prior_weights,
    escobar_west_odds,
    remove_if_singleton,
    sample_crp_partition,
    update_concentration,
)
from app.random_source import RandomSource


def test_from_assignments_counts():
    state = CrpState.from_assignments([0, 1, 0, 2], [0.1, 0.2, 0.3])
    assert list(state.counts) == [2, 1, 1]
    assert state.k == 3
    state.check()


def test_from_assignments_rejects_empty_cluster():
    with pytest.raises(ValueError):
        CrpState.from_assignments([0, 0], [0.1, 0.2])


def test_concentration_must_be_positive():
    with pytest.raises(ValueError):
        Concentration(0.0, 5.0, 5.0)


def test_singleton_removal_moves_last_cluster_into_the_gap():
    state = CrpState.from_assignments([0, 1, 2, 2], [10.0, 20.0, 30.0])
    remove_if_singleton(state, 1)
    assert state.assignments[1] == PENDING
    assert list(state.assignments) == [0, PENDING, 1, 1]
    assert state.values == [10.0, 30.0]
    state.check()


def test_non_singleton_is_left_in_place():
    state = CrpState.from_assignments([0, 0, 1], [1.0, 2.0])
    remove_if_singleton(state, 0)
    assert list(state.assignments) == [0, 0, 1]
    assert state.k == 2


def test_prior_weights_exclude_the_unit():
    state = CrpState.from_assignments([0, 0, 1], [1.0, 2.0])
    counts, new = crp_prior_weights(state, 0, Concentration(0.7, 5.0, 5.0))
    assert list(counts) == [1.0, 1.0]
    assert new == 0.7


def test_assign_new_then_compact_orders_by_first_appearance():
    state = CrpState.from_assignments([0, 0, 1], [1.0, 2.0])
    state.assign_new(0, 5.0)
    state.assign(1, 1)
    state.compact()
    assert list(state.assignments) == [0, 1, 1]
    assert state.values == [5.0, 2.0]
    state.check()


def test_compact_drops_empty_clusters():
    state = CrpState.from_assignments([0, 1], [1.0, 2.0])
    state.assign(1, 0)
    state.compact()
    assert state.k == 1
    assert list(state.counts) == [2]


def test_escobar_west_odds_hand_value():
    odds = escobar_west_odds(k_live=3, n_units=34, log_gamma=np.log(0.5), shape=5.0, rate=5.0)
    assert odds == pytest.approx(7.0 / (34.0 * (5.0 + np.log(2.0))))


def test_concentration_update_matches_gamma_mixture():
    rng = RandomSource(seed=3)
    conc = Concentration(1.0, 5.0, 5.0)
    k, n, g = 3, 34, 0.5
    rate = 5.0 - np.log(g)
    odds = escobar_west_odds(k, n, np.log(g), 5.0, 5.0)
    pi = odds / (1 + odds)
    expected = pi * (5.0 + k) / rate + (1 - pi) * (5.0 + k - 1) / rate

    draws = [update_concentration(rng, conc, k, n, gamma_draw=g).value for _ in range(40_000)]
    assert np.mean(draws) == pytest.approx(expected, rel=0.01)


def test_concentration_update_keeps_prior():
    rng = RandomSource(seed=3)
    conc = Concentration(1.0, 2.0, 3.0)
    new = update_concentration(rng, conc, 2, 10)
    assert (new.prior_shape, new.prior_rate) == (2.0, 3.0)
    assert new.value > 0


def test_concentration_update_needs_live_clusters():
    with pytest.raises(ValueError):
        update_concentration(RandomSource(seed=1), Concentration(1.0, 5.0, 5.0), 0, 10)


def test_tiny_concentration_seats_everyone_together():
    labels = sample_crp_partition(RandomSource(seed=5), 34, 1e-12)
    assert np.all(labels == 0)


def test_expected_number_of_tables():
    rng = RandomSource(seed=9)
    n, conc = 34, 1.5
    ks = [sample_crp_partition(rng, n, conc).max() + 1 for _ in range(4000)]
    expected = sum(conc / (conc + i) for i in range(n))
    assert np.mean(ks) == pytest.approx(expected, abs=0.1)


def test_partition_labels_appear_in_order():
    labels = sample_crp_partition(RandomSource(seed=2), 50, 3.0)
    first = [labels.tolist().index(k) for k in range(labels.max() + 1)]
    assert first == sorted(first)
