"""
Posterior analysis of retained chains.

Similarity matrices, Binder-loss point partitions, scalar summaries with
split-chain PSRF, conditional refits of the cluster values under a fixed
partition, partition agreement and popularity-against-degree tables.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from sklearn.metrics import adjusted_rand_score

from app.gibbs import NetworkLike, observed_ties, popularity_units
from app.runner import run_chains
from app.state import ChainConfig, ChainOutput, Hyperparameters, ModelKind

logger = logging.getLogger(__name__)

SCALARS = ("K", "L", "alpha", "nu", "eta")
PSRF_SCALARS = ("alpha", "nu", "eta")
EXHAUSTIVE_LIMIT = 10


class PartitionError(Exception):
    """Exception raised for empty, mis-sized or otherwise invalid partitions."""
    pass


@dataclass
class SimilarityMatrix:
    """Co-clustering proportions; symmetric with unit diagonal."""
    S: np.ndarray

    @property
    def n(self) -> int:
        return self.S.shape[0]


@dataclass
class HardClustering:
    """Point partition with labels 1..K* and its Binder expected loss."""
    labels: np.ndarray
    expected_loss: float

    @property
    def k(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def groups(self) -> List[List[int]]:
        """1-based unit ids per cluster, clusters in label order."""
        return [list(np.flatnonzero(self.labels == k) + 1) for k in range(1, self.k + 1)]


# ============================================================================
# Partitions and similarity
# ============================================================================

def canonical_labels(labels: Sequence) -> np.ndarray:
    """0-based labels renumbered by first appearance."""
    _, first, inverse = np.unique(np.asarray(labels), return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse.ravel()].astype(np.intp)


def similarity_matrix(draws: np.ndarray) -> SimilarityMatrix:
    """
    Fraction of draws in which each pair shares a label.

    Args:
        draws: (draws, units) label matrix

    Raises:
        PartitionError: If there are no draws
    """
    draws = np.atleast_2d(np.asarray(draws))
    if draws.size == 0 or draws.shape[0] == 0:
        raise PartitionError("Similarity matrix needs at least one draw")
    n = draws.shape[1]
    S = np.zeros((n, n))
    for row in draws:
        S += row[:, None] == row[None, :]
    S /= draws.shape[0]
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(S=S)


def binder_loss(labels: Sequence, S: np.ndarray) -> float:
    """
    Sum over pairs i < j of |1{c_i = c_j} - S_ij|.

    Raises:
        PartitionError: If labels and S differ in size
    """
    labels = np.asarray(labels)
    S = np.asarray(S)
    if labels.shape[0] != S.shape[0]:
        raise PartitionError(f"Partition has {labels.shape[0]} units but S is {S.shape[0]}x{S.shape[0]}")
    iu = np.triu_indices(labels.shape[0], 1)
    same = (labels[:, None] == labels[None, :])[iu]
    return float(np.abs(same - S[iu]).sum())


def linkage_cuts(S: np.ndarray) -> List[np.ndarray]:
    """Every cut (1..n clusters) of an average-linkage tree on 1 - S."""
    n = S.shape[0]
    if n < 2:
        return [np.zeros(n, dtype=np.intp)]
    dist = squareform(np.clip(1.0 - S, 0.0, None), checks=False)
    tree = linkage(dist, method="average")
    return [fcluster(tree, t=k, criterion="maxclust") for k in range(1, n + 1)]


def _best(S: np.ndarray, candidates: Iterable[np.ndarray]) -> HardClustering:
    best_key = None
    best_labels = None
    for index, cand in enumerate(candidates):
        labels = canonical_labels(cand)
        loss = binder_loss(labels, S)
        key = (round(loss, 9), int(labels.max()) + 1 if labels.size else 0, index)
        if best_key is None or key < best_key:
            best_key, best_labels = key, labels
    if best_labels is None:
        raise PartitionError("Binder minimization needs at least one candidate partition")
    return HardClustering(labels=best_labels + 1, expected_loss=binder_loss(best_labels, S))


def minimize_binder(S: np.ndarray, candidates: np.ndarray) -> HardClustering:
    """
    Binder point estimate over sampled partitions and linkage cuts.

    Ties go to fewer clusters, then to the first candidate seen (sampled
    partitions come before cuts).

    Raises:
        PartitionError: On an empty candidate set
    """
    S = np.asarray(S.S if isinstance(S, SimilarityMatrix) else S)
    candidates = np.atleast_2d(np.asarray(candidates))
    if candidates.shape[0] == 0 or candidates.size == 0:
        raise PartitionError("Binder minimization needs at least one candidate partition")
    # first-occurrence order
    seen = dict.fromkeys(tuple(canonical_labels(c)) for c in candidates)
    unique = [np.asarray(key, dtype=np.intp) for key in seen]
    logger.debug(f"Binder search over {len(unique)} sampled partitions and {S.shape[0]} cuts")
    return _best(S, itertools.chain(unique, linkage_cuts(S)))


def set_partitions(n: int) -> Iterator[np.ndarray]:
    """All partitions of n units as restricted growth strings."""
    if n == 0:
        yield np.zeros(0, dtype=np.intp)
        return
    labels = [0] * n
    maxima = [0] * n

    def grow(i: int):
        if i == n:
            yield np.array(labels, dtype=np.intp)
            return
        for k in range(maxima[i - 1] + 2):
            labels[i] = k
            maxima[i] = max(maxima[i - 1], k)
            yield from grow(i + 1)

    yield from grow(1)


def exhaustive_binder(S: np.ndarray) -> HardClustering:
    """
    Binder minimizer over every set partition.

    Raises:
        PartitionError: For more than EXHAUSTIVE_LIMIT units
    """
    S = np.asarray(S.S if isinstance(S, SimilarityMatrix) else S)
    if S.shape[0] > EXHAUSTIVE_LIMIT:
        raise PartitionError(f"Exhaustive search is limited to {EXHAUSTIVE_LIMIT} units, got {S.shape[0]}")
    return _best(S, set_partitions(S.shape[0]))


def adjusted_rand_index(a: Sequence, b: Sequence) -> float:
    """Chance-corrected agreement of two partitions."""
    if len(a) != len(b):
        raise PartitionError(f"Partitions differ in size: {len(a)} vs {len(b)}")
    return float(adjusted_rand_score(np.asarray(a), np.asarray(b)))


# ============================================================================
# Scalars and convergence
# ============================================================================

def split_rhat(chains: Sequence[Sequence[float]]) -> float:
    """
    Split-chain potential scale reduction factor.

    Each chain is cut in half and the halves are treated as chains.
    Constant input gives 1.0; fewer than two draws per half gives nan.
    """
    halves = []
    for chain in chains:
        x = np.asarray(chain, dtype=float)
        m = x.size // 2
        if m < 2:
            return float("nan")
        halves.extend([x[:m], x[m:2 * m]])
    draws = np.vstack(halves)
    n = draws.shape[1]
    within = draws.var(axis=1, ddof=1).mean()
    between = n * draws.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


@dataclass
class ScalarSummary:
    name: str
    mean: float
    sd: float
    mode: float
    histogram: Dict[float, int]
    per_chain_mean: List[float] = field(default_factory=list)
    per_chain_sd: List[float] = field(default_factory=list)
    psrf: Optional[float] = None


def _mode(values: np.ndarray) -> float:
    uniq, counts = np.unique(values, return_counts=True)
    return float(uniq[np.argmax(counts)])


def scalar_summaries(chains: Sequence[ChainOutput]) -> Dict[str, ScalarSummary]:
    """
    Pooled and per-chain summaries of K, L, alpha, nu and eta.

    Histograms and modes are exact counts for K and L; alpha, nu and eta
    get their mode from a 50-bin histogram centre.
    """
    if not chains:
        raise PartitionError("Need at least one chain to summarize")
    out: Dict[str, ScalarSummary] = {}
    for name in SCALARS:
        per_chain = [c.scalar(name) for c in chains]
        pooled = np.concatenate(per_chain) if per_chain else np.zeros(0)
        if name in ("K", "L"):
            uniq, counts = np.unique(pooled.astype(int), return_counts=True)
            histogram = {int(u): int(c) for u, c in zip(uniq, counts)}
            mode = _mode(pooled)
        else:
            counts, edges = np.histogram(pooled, bins=50)
            centres = 0.5 * (edges[:-1] + edges[1:])
            histogram = {float(x): int(c) for x, c in zip(centres, counts)}
            mode = float(centres[np.argmax(counts)]) if pooled.size else float("nan")
        summary = ScalarSummary(
            name=name,
            mean=float(pooled.mean()) if pooled.size else float("nan"),
            sd=float(pooled.std(ddof=0)) if pooled.size else float("nan"),
            mode=mode,
            histogram=histogram,
            per_chain_mean=[float(x.mean()) for x in per_chain],
            per_chain_sd=[float(x.std(ddof=0)) for x in per_chain],
        )
        if name in PSRF_SCALARS:
            summary.psrf = split_rhat(per_chain)
        out[name] = summary
    return out


def summaries_frame(summaries: Dict[str, ScalarSummary]) -> pd.DataFrame:
    """One row per scalar: pooled mean, sd, mode, PSRF and per-chain means."""
    rows = []
    for s in summaries.values():
        row = {"scalar": s.name, "mean": s.mean, "sd": s.sd, "mode": s.mode, "psrf": s.psrf}
        for k, (m, sd) in enumerate(zip(s.per_chain_mean, s.per_chain_sd)):
            row[f"chain{k}_mean"] = m
            row[f"chain{k}_sd"] = sd
        rows.append(row)
    return pd.DataFrame(rows)


# ============================================================================
# Conditional refit
# ============================================================================

@dataclass
class RefitReport:
    """Posterior mean and sd of every beta* and theta* under fixed z, c."""
    community: pd.DataFrame
    popularity: pd.DataFrame
    z: np.ndarray
    c: np.ndarray


def check_partition(labels: Sequence, units: int, what: str) -> np.ndarray:
    """
    Raises:
        PartitionError: On size mismatch or missing labels
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != units:
        raise PartitionError(f"{what} partition needs {units} labels, got {labels.size}")
    if labels.dtype.kind == "f" and np.any(np.isnan(labels)):
        raise PartitionError(f"{what} partition has missing labels")
    return labels


def _cluster_table(values: np.ndarray, canonical: np.ndarray, original: np.ndarray, name: str) -> pd.DataFrame:
    rows = []
    for k in range(values.shape[1]):
        members = np.flatnonzero(canonical == k)
        rows.append({
            "cluster": original[members[0]],
            "size": int(members.size),
            "mean": float(values[:, k].mean()),
            "sd": float(values[:, k].std(ddof=0)),
            "units": " ".join(str(u + 1) for u in members),
        })
    return pd.DataFrame(rows).rename(columns={"mean": f"{name}_mean", "sd": f"{name}_sd"})


def conditional_refit(
    net: NetworkLike,
    model: ModelKind,
    hyper: Hyperparameters,
    fixed_z: Sequence,
    fixed_c: Sequence,
    config: ChainConfig,
) -> RefitReport:
    """
    Rerun the sampler with z and c held fixed and summarize the cluster values.

    Labels may be any hashable ids; rows of the report carry the caller's
    labels. For dynamic I, fixed_c runs over actor-times (t * n + i).

    Raises:
        PartitionError: If either partition does not fit the network
    """
    y = observed_ties(net, model)
    T, n = y.shape[0], y.shape[1]
    z_user = check_partition(fixed_z, n, "Community")
    c_user = check_partition(fixed_c, popularity_units(model, n, T), "Popularity")
    z = canonical_labels(z_user)
    c = canonical_labels(c_user)

    chains = run_chains(net, model, hyper, config, fixed=(z, c))
    beta = np.vstack([np.array([d.beta_star for d in ch.draws]) for ch in chains])
    theta = np.vstack([np.array([d.theta_star for d in ch.draws]) for ch in chains])
    logger.info(f"Refit on {len(beta)} draws: {beta.shape[1]} communities, {theta.shape[1]} popularity clusters")
    return RefitReport(
        community=_cluster_table(beta, z, z_user, "beta"),
        popularity=_cluster_table(theta, c, c_user, "theta"),
        z=z_user,
        c=c_user,
    )


# ============================================================================
# Popularity against degree
# ============================================================================

def popularity_by_degree(chains: Sequence[ChainOutput], net: NetworkLike, model: ModelKind) -> pd.DataFrame:
    """
    Posterior mean and sd of theta per actor (per actor-time for dynamic I)
    with the matching degree (summed over snapshots for dynamic II).
    """
    y = observed_ties(net, model)
    T, n = y.shape[0], y.shape[1]
    theta = np.vstack([ch.theta_by_unit() for ch in chains])
    per_time_degree = y.sum(axis=2)
    rows = []
    for u in range(theta.shape[1]):
        if model == ModelKind.DYNAMIC1:
            t, i = divmod(u, n)
            rows.append({"node": i + 1, "time": t + 1, "degree": int(per_time_degree[t, i])})
        else:
            rows.append({"node": u + 1, "degree": int(per_time_degree[:, u].sum())})
        rows[-1]["theta_mean"] = float(theta[:, u].mean())
        rows[-1]["theta_sd"] = float(theta[:, u].std(ddof=0))
    return pd.DataFrame(rows)
