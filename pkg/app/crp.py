"""
Dirichlet-process cluster bookkeeping.

CrpState keeps one assignment per unit, one value per live cluster and
the occupancy counts. Cluster ids are 0-based and contiguous; a removed
cluster is filled by moving the last cluster into its slot, and
`compact()` renumbers by first appearance at the end of a sweep.
Concentration updates follow the Escobar-West auxiliary-variable scheme.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.random_source import RandomSource

logger = logging.getLogger(__name__)

PENDING = -1


@dataclass
class Concentration:
    """DP concentration with its Gamma(prior_shape, prior_rate) prior."""
    value: float
    prior_shape: float
    prior_rate: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"Concentration must be positive, got {self.value}")


@dataclass
class CrpState:
    """Assignments, cluster values and occupancy counts of one DP."""
    assignments: np.ndarray
    values: List[float]
    counts: np.ndarray

    @classmethod
    def from_assignments(cls, assignments: Sequence[int], values: Sequence[float]) -> "CrpState":
        """Build from 0-based contiguous labels and one value per label."""
        labels = np.asarray(assignments, dtype=np.intp).copy()
        k = len(values)
        counts = np.bincount(labels, minlength=k).astype(np.intp)
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError("Assignments must be labels in [0, len(values))")
        if k and np.any(counts == 0):
            raise ValueError("Every cluster needs at least one unit")
        return cls(assignments=labels, values=[float(v) for v in values], counts=counts)

    @property
    def n_units(self) -> int:
        return int(self.assignments.size)

    @property
    def k(self) -> int:
        """Number of live clusters."""
        return len(self.values)

    def value_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def unit_values(self) -> np.ndarray:
        """Cluster value of each unit (0 for a pending unit)."""
        vals = self.value_array()
        out = np.zeros(self.n_units)
        live = self.assignments >= 0
        out[live] = vals[self.assignments[live]]
        return out

    def assign(self, unit: int, k: int) -> None:
        """Move unit into existing cluster k."""
        old = self.assignments[unit]
        if old == k:
            return
        if old != PENDING:
            self.counts[old] -= 1
        self.assignments[unit] = k
        self.counts[k] += 1

    def assign_new(self, unit: int, value: float) -> int:
        """Open a new cluster holding only unit; returns its id."""
        old = self.assignments[unit]
        if old != PENDING:
            self.counts[old] -= 1
        k = len(self.values)
        self.values.append(float(value))
        self.counts = np.append(self.counts, 1)
        self.assignments[unit] = k
        return k

    def compact(self) -> None:
        """Renumber clusters 0..K-1 by first appearance; drop empty ones."""
        order: List[int] = []
        seen = set()
        for label in self.assignments:
            if label != PENDING and label not in seen:
                seen.add(int(label))
                order.append(int(label))
        mapping = np.full(len(self.values), PENDING, dtype=np.intp)
        mapping[order] = np.arange(len(order))
        live = self.assignments >= 0
        self.assignments[live] = mapping[self.assignments[live]]
        self.values = [self.values[k] for k in order]
        self.counts = np.bincount(self.assignments[live], minlength=len(order)).astype(np.intp)

    def check(self) -> None:
        """Assert the bookkeeping invariants (used by tests and debug runs)."""
        live = self.assignments[self.assignments >= 0]
        derived = np.bincount(live, minlength=len(self.values))
        assert np.array_equal(derived, self.counts), "counts out of sync with assignments"
        assert len(self.counts) == len(self.values), "one value per live cluster"
        assert np.all(self.counts >= 1), "empty live cluster"

    def copy(self) -> "CrpState":
        return CrpState(
            assignments=self.assignments.copy(),
            values=list(self.values),
            counts=self.counts.copy(),
        )


def crp_prior_weights(state: CrpState, unit: int, conc: Concentration) -> Tuple[np.ndarray, float]:
    """
    CRP weights for re-seating one unit.

    Returns:
        (m_{-unit,k} for every live cluster, weight of a new cluster)
    """
    counts = state.counts.astype(float).copy()
    own = state.assignments[unit]
    if own != PENDING:
        counts[own] -= 1
    return counts, conc.value


def remove_if_singleton(state: CrpState, unit: int) -> CrpState:
    """
    Drop the unit's cluster if the unit is its only member.

    The unit is then marked pending; the last cluster moves into the
    freed slot so ids stay contiguous. Non-singletons are left alone.
    """
    own = state.assignments[unit]
    if own == PENDING or state.counts[own] != 1:
        return state

    last = len(state.values) - 1
    if own != last:
        state.values[own] = state.values[last]
        state.counts[own] = state.counts[last]
        state.assignments[state.assignments == last] = own
    state.values.pop()
    state.counts = state.counts[:last]
    state.assignments[unit] = PENDING
    return state


def escobar_west_odds(k_live: int, n_units: int, log_gamma: float, shape: float, rate: float) -> float:
    """Mixing odds pi / (1 - pi) of the two gamma components."""
    return (shape + k_live - 1) / (n_units * (rate - log_gamma))


def update_concentration(
    rng: RandomSource,
    conc: Concentration,
    k_live: int,
    n_units: int,
    gamma_draw: Optional[float] = None,
) -> Concentration:
    """
    Escobar-West update of a DP concentration.

    Draws gamma ~ Beta(conc + 1, n_units) (or uses gamma_draw), then the
    new value from pi Gamma(a + k, b - log gamma) + (1 - pi)
    Gamma(a + k - 1, b - log gamma), rate-parameterized.

    Args:
        rng: Chain random source
        conc: Current concentration and its prior
        k_live: Number of live clusters
        n_units: Number of units the DP is over (n, or n*T for the
            actor-time popularity DP)
        gamma_draw: Pin the auxiliary Beta variable (tests)
    """
    if k_live < 1 or n_units < 1:
        raise ValueError(f"Need k_live >= 1 and n_units >= 1, got ({k_live}, {n_units})")

    g = gamma_draw if gamma_draw is not None else rng.beta(conc.value + 1.0, n_units)
    log_g = float(np.log(max(g, np.finfo(float).tiny)))
    a, b = conc.prior_shape, conc.prior_rate
    rate = b - log_g
    odds = escobar_west_odds(k_live, n_units, log_g, a, b)
    pi = odds / (1.0 + odds)

    shape = a + k_live if rng.uniform() < pi else a + k_live - 1
    value = float(rng.gamma(shape, rate))
    # gamma draws underflow to 0 only for absurdly small shapes
    value = max(value, np.finfo(float).tiny)
    return replace(conc, value=value)


def sample_crp_partition(rng: RandomSource, n_units: int, conc: float) -> np.ndarray:
    """Sequential CRP seating of n_units; 0-based labels by first appearance."""
    labels = np.empty(n_units, dtype=np.intp)
    counts: List[int] = []
    for u in range(n_units):
        logw = np.log(np.array(counts + [conc], dtype=float))
        k = rng.categorical_log(logw)
        if k == len(counts):
            counts.append(1)
        else:
            counts[k] += 1
        labels[u] = k
    return labels
