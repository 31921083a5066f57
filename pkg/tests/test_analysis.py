import numpy as np
import pandas as pd
import pytest

from app.analysis import (
    PartitionError,
    adjusted_rand_index,
    binder_loss,
    canonical_labels,
    conditional_refit,
    exhaustive_binder,
    minimize_binder,
    popularity_by_degree,
    scalar_summaries,
    set_partitions,
    similarity_matrix,
    split_rhat,
    summaries_frame,
)
from app.state import ChainConfig, ModelKind
from tests.conftest import DATA_DIR, make_chain

HAND_DRAWS = np.array([
    [0, 0, 0],
    [0, 0, 1],
    [3, 3, 7],
    [0, 1, 1],
])


def noisy_draws(rng, truth, n_draws=100, keep=0.6):
    """Draws equal to truth with probability `keep`, else truth with one unit moved."""
    truth = np.asarray(truth)
    k = truth.max() + 1
    draws = []
    for _ in range(n_draws):
        row = truth.copy()
        if rng.random() > keep:
            row[rng.integers(truth.size)] = rng.integers(k + 1)
        draws.append(row)
    return np.array(draws)


# ============================================================================
# Similarity and Binder loss
# ============================================================================

def test_similarity_hand_example():
    S = similarity_matrix(HAND_DRAWS).S
    assert S[0, 1] == pytest.approx(0.75)
    assert S[0, 2] == pytest.approx(0.25)
    assert S[1, 2] == pytest.approx(0.5)
    assert np.allclose(S, S.T)
    assert np.all(np.diag(S) == 1.0)


def test_binder_loss_hand_example():
    S = similarity_matrix(HAND_DRAWS).S
    assert binder_loss([1, 1, 2], S) == pytest.approx(1.0)
    assert binder_loss([5, 5, 0], S) == pytest.approx(1.0)


def test_similarity_ignores_label_permutations():
    rng = np.random.default_rng(3)
    draws = rng.integers(0, 4, size=(50, 9))
    permuted = np.array([rng.permutation(4)[row] for row in draws])
    assert np.allclose(similarity_matrix(draws).S, similarity_matrix(permuted).S)


def test_similarity_needs_draws():
    with pytest.raises(PartitionError):
        similarity_matrix(np.zeros((0, 4), dtype=int))


def test_binder_loss_size_mismatch():
    with pytest.raises(PartitionError):
        binder_loss([1, 2], np.eye(3))


def test_canonical_labels_first_appearance():
    assert canonical_labels(["b", "a", "b", "c"]).tolist() == [0, 1, 0, 2]
    assert canonical_labels([7, 7, 2]).tolist() == [0, 0, 1]


# ============================================================================
# Binder minimization
# ============================================================================

def test_set_partition_counts():
    assert sum(1 for _ in set_partitions(5)) == 52
    assert sum(1 for _ in set_partitions(8)) == 4140
    assert [p.tolist() for p in set_partitions(2)] == [[0, 0], [0, 1]]


def test_single_true_partition_is_recovered():
    truth = np.array([0, 0, 1, 1, 1, 2])
    S = similarity_matrix(np.tile(truth, (10, 1))).S
    hard = minimize_binder(S, np.tile(truth, (10, 1)))
    assert hard.labels.tolist() == [1, 1, 2, 2, 2, 3]
    assert hard.expected_loss == 0.0
    assert hard.groups() == [[1, 2], [3, 4, 5], [6]]


@pytest.mark.parametrize("truth", [
    [0, 0, 1, 1, 2],
    [0, 1, 0, 1, 0, 2, 2, 1],
    [0, 0, 0, 0, 0, 0, 0, 0],
])
def test_minimize_binder_matches_exhaustive(truth):
    rng = np.random.default_rng(len(truth))
    draws = noisy_draws(rng, truth)
    S = similarity_matrix(draws)
    fast = minimize_binder(S, draws)
    slow = exhaustive_binder(S)
    assert fast.labels.tolist() == slow.labels.tolist()
    assert fast.expected_loss == pytest.approx(slow.expected_loss)


def test_minimize_binder_never_worse_than_sampled():
    rng = np.random.default_rng(11)
    draws = rng.integers(0, 3, size=(40, 7))
    S = similarity_matrix(draws).S
    hard = minimize_binder(S, draws)
    best_sampled = min(binder_loss(d, S) for d in draws)
    assert hard.expected_loss <= best_sampled + 1e-12
    assert hard.expected_loss >= exhaustive_binder(S).expected_loss - 1e-12


def test_binder_tie_prefers_fewer_clusters():
    # S = 0.5 everywhere: every partition of 2 units has loss 0.5
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert minimize_binder(S, np.array([[0, 1]])).labels.tolist() == [1, 1]


def test_binder_tie_keeps_first_sampled_partition():
    # {1,3}{2,4} and {1,2}{3,4} both cost 2.0 with K = 2
    S = np.eye(4)
    for i, j in [(0, 1), (2, 3), (0, 2), (1, 3)]:
        S[i, j] = S[j, i] = 0.9
    draws = np.array([[0, 1, 0, 1], [0, 0, 1, 1]])
    hard = minimize_binder(S, draws)
    assert hard.expected_loss == pytest.approx(2.0)
    assert hard.labels.tolist() == [1, 2, 1, 2]
    assert minimize_binder(S, draws[::-1]).labels.tolist() == [1, 1, 2, 2]


def test_binder_needs_candidates():
    with pytest.raises(PartitionError):
        minimize_binder(np.eye(3), np.zeros((0, 3), dtype=int))


def test_exhaustive_limit():
    with pytest.raises(PartitionError):
        exhaustive_binder(np.eye(11))


def test_adjusted_rand_index():
    assert adjusted_rand_index([0, 0, 1, 1], [5, 5, 2, 2]) == pytest.approx(1.0)
    with pytest.raises(PartitionError):
        adjusted_rand_index([0, 1], [0, 1, 1])


# ============================================================================
# Scalars
# ============================================================================

def test_split_rhat_constant_and_short():
    assert split_rhat([[2.0] * 10, [2.0] * 10]) == 1.0
    assert np.isnan(split_rhat([[1.0, 2.0, 3.0]]))


def test_split_rhat_detects_disagreeing_chains():
    rng = np.random.default_rng(5)
    mixed = [rng.normal(size=500), rng.normal(size=500)]
    stuck = [rng.normal(size=500), rng.normal(loc=3.0, size=500)]
    assert split_rhat(mixed) == pytest.approx(1.0, abs=0.02)
    assert split_rhat(stuck) > 1.5


def test_scalar_summaries():
    first = make_chain([[0, 0, 1], [0, 1, 2], [0, 0, 1], [0, 0, 1]], alpha=[2.0] * 4, stream=0)
    second = make_chain([[0, 0, 0], [0, 0, 1], [0, 0, 1], [0, 0, 1]], alpha=[2.0] * 4, stream=1)
    summaries = scalar_summaries([first, second])

    K = summaries["K"]
    assert K.histogram == {1: 1, 2: 6, 3: 1}
    assert K.mode == 2
    assert K.mean == pytest.approx(2.0)
    assert K.per_chain_mean == pytest.approx([2.25, 1.75])
    assert K.psrf is None

    alpha = summaries["alpha"]
    assert alpha.sd == 0.0
    assert alpha.psrf == 1.0

    frame = summaries_frame(summaries)
    assert list(frame["scalar"]) == ["K", "L", "alpha", "nu", "eta"]
    assert {"chain0_mean", "chain1_sd"} <= set(frame.columns)


def test_scalar_summaries_need_chains():
    with pytest.raises(PartitionError):
        scalar_summaries([])


# ============================================================================
# Popularity against degree and conditional refit
# ============================================================================

def test_popularity_by_degree(triangle):
    chain = make_chain([[0, 0, 1], [0, 0, 0]], c_rows=[[0, 0, 0], [0, 1, 0]])
    frame = popularity_by_degree([chain], triangle, ModelKind.STATIC)
    assert list(frame.columns) == ["node", "degree", "theta_mean", "theta_sd"]
    assert frame["degree"].tolist() == [2, 2, 2]
    assert frame["theta_mean"].tolist() == [0.0, 0.0, 0.0]


def test_refit_rejects_bad_partitions(karate, hyper):
    config = ChainConfig(chains=1, iterations=5, burn_in=0, thin=1)
    with pytest.raises(PartitionError):
        conditional_refit(karate, ModelKind.STATIC, hyper, [0] * 33, [0] * 34, config)
    with pytest.raises(PartitionError):
        conditional_refit(karate, ModelKind.STATIC, hyper, [0] * 34, [0.0] * 33 + [np.nan], config)


def test_refit_keeps_caller_labels(karate, hyper):
    factions = pd.read_csv(DATA_DIR / "karate_faction.csv")["faction"].tolist()
    config = ChainConfig(chains=2, iterations=300, burn_in=100, thin=2, seed=9)
    report = conditional_refit(karate, ModelKind.STATIC, hyper, factions, ["all"] * 34, config)

    community = report.community
    assert set(community["cluster"]) == {"Mr Hi", "John A."}
    assert community["size"].tolist() == [17, 17]
    assert community["units"].iloc[0].split()[0] == "1"
    assert (community["beta_sd"] > 0).all()

    popularity = report.popularity
    assert popularity["cluster"].tolist() == ["all"]
    assert popularity["size"].tolist() == [34]
    # karate has 78 ties in 561 pairs
    assert popularity["theta_mean"].iloc[0] < 0
