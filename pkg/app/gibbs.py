"""
Gibbs kernels for the static, dynamic-I and dynamic-II degree-corrected
blockmodels with Dirichlet-process communities and popularities.

Tie (i, j) at time t is present iff the latent utility
zeta_tij ~ N(mu_tij, 1) is positive, with

    mu_tij = theta_it + theta_jt + beta*_{z_i} 1{z_i = z_j} + eta y_{t-1,ij} 1{t > 1}

theta varying over t only in dynamic I and the lag term only in dynamic II.
All kernels work on (T, n, n) arrays so the three models share one code
path: for time-invariant popularities the labels are repeated over t,
which yields the factor-T precisions of the dynamic-II conditionals.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import ndtr

from app.crp import (
    Concentration,
    CrpState,
    crp_prior_weights,
    remove_if_singleton,
    sample_crp_partition,
    update_concentration,
)
from app.network import DynamicNetwork, StaticNetwork, adjacency_stack
from app.random_source import RandomSource
from app.state import Hyperparameters, ModelKind, ModelMismatchError, SamplerState, TrueParameters

logger = logging.getLogger(__name__)

NetworkLike = Union[StaticNetwork, DynamicNetwork, np.ndarray]


# ============================================================================
# Data and state plumbing
# ============================================================================

def observed_ties(net: NetworkLike, model: ModelKind) -> np.ndarray:
    """
    (T, n, n) adjacency checked against the model.

    Raises:
        ModelMismatchError: Dynamic model on a single snapshot or static
            model on a temporal network
    """
    if isinstance(net, np.ndarray):
        y = net if net.ndim == 3 else net[None, :, :]
    else:
        y = adjacency_stack(net)
    if model == ModelKind.STATIC and y.shape[0] != 1:
        raise ModelMismatchError(f"static model needs one snapshot, got {y.shape[0]}")
    if model.is_dynamic and y.shape[0] < 2:
        raise ModelMismatchError(f"{model.value} needs at least 2 snapshots, got {y.shape[0]}")
    return y


def community_matrix(state: SamplerState) -> np.ndarray:
    """(n, n) beta*_{z_i} 1{z_i = z_j}, zero diagonal."""
    z = state.z_state.assignments
    beta = state.z_state.value_array()
    same = z[:, None] == z[None, :]
    out = np.where(same, beta[z][:, None], 0.0)
    np.fill_diagonal(out, 0.0)
    return out


def lag_term(state: SamplerState, y: np.ndarray) -> np.ndarray:
    """eta y_{t-1,ij} 1{t > 1} (zero outside dynamic II)."""
    lag = np.zeros((state.T, state.n, state.n))
    if state.model == ModelKind.DYNAMIC2 and state.T > 1:
        lag[1:] = state.eta * y[:-1]
    return lag


def zeta_tilde(state: SamplerState, y: np.ndarray) -> np.ndarray:
    """Latent utilities with the persistence term removed."""
    if state.model != ModelKind.DYNAMIC2:
        return state.zeta
    return state.zeta - lag_term(state, y)


def mean_matrix(state: SamplerState, y: np.ndarray) -> np.ndarray:
    """(T, n, n) probit means mu_tij."""
    theta = state.theta_by_time()
    mu = theta[:, :, None] + theta[:, None, :] + community_matrix(state)[None, :, :]
    return mu + lag_term(state, y)


def mu_static(state: SamplerState, i: int, j: int) -> float:
    """theta*_{c_i} + theta*_{c_j} + beta*_{z_i} 1{z_i = z_j} for 0-based i < j at t = 1."""
    if not 0 <= i < j < state.n:
        raise IndexError(f"Need 0 <= i < j < {state.n}, got ({i}, {j})")
    theta = state.theta_by_time()[0]
    z = state.z_state.assignments
    mu = theta[i] + theta[j]
    if z[i] == z[j]:
        mu += state.z_state.values[z[i]]
    return float(mu)


def _residual_without_popularity(state: SamplerState, y: np.ndarray) -> np.ndarray:
    """zeta~ - theta_i - theta_j per time, zero diagonal."""
    theta = state.theta_by_time()
    resid = zeta_tilde(state, y) - theta[:, :, None] - theta[:, None, :]
    idx = np.arange(state.n)
    resid[:, idx, idx] = 0.0
    return resid


def _residual_without_community(state: SamplerState, y: np.ndarray) -> np.ndarray:
    """zeta~ - beta*_{z_i} 1{z_i = z_j} per time, zero diagonal."""
    resid = zeta_tilde(state, y) - community_matrix(state)[None, :, :]
    idx = np.arange(state.n)
    resid[:, idx, idx] = 0.0
    return resid


# ============================================================================
# Gibbs steps
# ============================================================================

def step_zeta(rng: RandomSource, state: SamplerState, net: NetworkLike) -> SamplerState:
    """Redraw every latent utility from its one-sided truncated normal."""
    y = observed_ties(net, state.model)
    n = state.n
    if n < 2:
        return state
    mu = mean_matrix(state, y)
    iu = np.triu_indices(n, 1)
    for t in range(state.T):
        present = y[t][iu].astype(bool)
        lower = np.where(present, 0.0, -np.inf)
        upper = np.where(present, np.inf, 0.0)
        draws = rng.trunc_normal(mu[t][iu], lower, upper)
        zt = np.zeros((n, n))
        zt[iu] = draws
        state.zeta[t] = zt + zt.T
    return state


def community_seat_log_weights(
    counts: np.ndarray,
    new_weight: float,
    beta: np.ndarray,
    pair_sums: np.ndarray,
    T: int,
) -> np.ndarray:
    """
    Log re-seating weights of one actor: existing communities, then a new one.

    m_k exp(beta*_k S_k - T m_k beta*_k^2 / 2) for community k, where S_k
    sums the actor's residuals towards members of k over all times; the
    new community gets the concentration alone since a singleton has no
    within-community pairs.
    """
    with np.errstate(divide="ignore"):
        logw = np.log(counts) + beta * pair_sums - 0.5 * T * counts * beta ** 2
    return np.append(logw, np.log(new_weight))


def popularity_seat_log_weights(
    counts: np.ndarray,
    alpha: float,
    theta: np.ndarray,
    q: float,
    weight: float,
    var_theta: float,
):
    """
    Log re-seating weights of one popularity unit.

    Existing cluster l: n_l exp(theta*_l q - weight theta*_l^2 / 2). New
    cluster: alpha (sigma_c / sigma_theta) exp(mu_c^2 / (2 sigma_c^2)), the
    prior integrated against the unit's likelihood.

    Returns:
        (log-weights with the new cluster last, mu_c, sigma_c^2)
    """
    var_c = 1.0 / (weight + 1.0 / var_theta)
    mu_c = var_c * q
    with np.errstate(divide="ignore"):
        logw = np.log(counts) + theta * q - 0.5 * weight * theta ** 2
    new = np.log(alpha) + 0.5 * np.log(var_c / var_theta) + mu_c ** 2 / (2.0 * var_c)
    return np.append(logw, new), mu_c, var_c


def step_z(rng: RandomSource, state: SamplerState, net: NetworkLike, hyper: Hyperparameters) -> SamplerState:
    """Re-seat every actor's community indicator, actors in order."""
    y = observed_ties(net, state.model)
    resid = _residual_without_popularity(state, y).sum(axis=0)
    zs = state.z_state
    n, T = state.n, state.T
    not_self = ~np.eye(n, dtype=bool)

    for i in range(n):
        remove_if_singleton(zs, i)
        m, new_weight = crp_prior_weights(zs, i, state.nu)
        z = zs.assignments
        others = not_self[i] & (z >= 0)
        pair_sums = np.bincount(z[others], weights=resid[i, others], minlength=zs.k)
        logw = community_seat_log_weights(m, new_weight, zs.value_array(), pair_sums, T)

        k = rng.categorical_log(logw)
        if k == zs.k:
            zs.assign_new(i, rng.normal(0.0, hyper.var_beta))
        else:
            zs.assign(i, k)
    return state


def beta_precision(state: SamplerState, hyper: Hyperparameters) -> np.ndarray:
    """Diagonal of P = I / var_beta + T Z'Z: within-community pair counts scaled by T."""
    m = state.z_state.counts.astype(float)
    return 1.0 / hyper.var_beta + state.T * m * (m - 1.0) / 2.0


def step_beta(rng: RandomSource, state: SamplerState, net: NetworkLike, hyper: Hyperparameters) -> SamplerState:
    """Joint draw of beta*; Z'Z is diagonal so this is K independent normals."""
    y = observed_ties(net, state.model)
    zs = state.z_state
    if zs.k == 0:
        return state
    resid = _residual_without_popularity(state, y).sum(axis=0)
    onehot = np.zeros((state.n, zs.k))
    onehot[np.arange(state.n), zs.assignments] = 1.0
    within = 0.5 * np.einsum("ik,ij,jk->k", onehot, resid, onehot)

    precision = beta_precision(state, hyper)
    draws = rng.normal(within / precision, 1.0 / precision)
    zs.values = [float(v) for v in np.atleast_1d(draws)]
    return state


def popularity_precision_new(state: SamplerState, hyper: Hyperparameters) -> float:
    """Precision of theta for a new popularity cluster: A + 1 / var_theta."""
    return _popularity_pair_weight(state) + 1.0 / hyper.var_theta


def _popularity_pair_weight(state: SamplerState) -> float:
    """Number of tie utilities one popularity unit enters."""
    if state.model == ModelKind.DYNAMIC1:
        return float(state.n - 1)
    return float(state.T * (state.n - 1))


def step_c(rng: RandomSource, state: SamplerState, net: NetworkLike, hyper: Hyperparameters) -> SamplerState:
    """Re-seat every popularity indicator (actors, or actor-times for dynamic I)."""
    y = observed_ties(net, state.model)
    resid = _residual_without_community(state, y)
    row_sums = resid.sum(axis=2)
    cs = state.c_state
    n, T = state.n, state.T
    per_time = state.model == ModelKind.DYNAMIC1

    weight = _popularity_pair_weight(state)
    theta_u = cs.unit_values()

    for u in range(cs.n_units):
        remove_if_singleton(cs, u)
        if per_time:
            t, i = divmod(u, n)
            block = theta_u[t * n:(t + 1) * n]
            q = row_sums[t, i] - (block.sum() - theta_u[u])
        else:
            q = row_sums[:, u].sum() - T * (theta_u.sum() - theta_u[u])

        counts, alpha = crp_prior_weights(cs, u, state.alpha)
        vals = cs.value_array()
        logw, mu_c, var_c = popularity_seat_log_weights(counts, alpha, vals, q, weight, hyper.var_theta)

        k = rng.categorical_log(logw)
        if k == cs.k:
            value = rng.normal(mu_c, var_c)
            cs.assign_new(u, value)
            theta_u[u] = value
        else:
            cs.assign(u, k)
            theta_u[u] = vals[k]
    return state


def theta_conditionals(state: SamplerState, net: NetworkLike, hyper: Hyperparameters):
    """
    Pieces of the theta*_m conditionals that do not depend on theta*.

    Returns:
        (precision per cluster, 2 * same-cluster sums + mixed-pair sums of
        the community residual, (T, L) cluster sizes per time)
    """
    y = observed_ties(net, state.model)
    resid = _residual_without_community(state, y)
    labels = state.c_labels_by_time()
    n, L = state.n, state.c_state.k

    precision = np.full(L, 1.0 / hyper.var_theta)
    data_term = np.zeros(L)
    sizes = np.zeros((state.T, L))
    for t in range(state.T):
        onehot = np.zeros((n, L))
        onehot[np.arange(n), labels[t]] = 1.0
        size = onehot.sum(axis=0)
        block = np.einsum("ik,ij,jk->k", onehot, resid[t], onehot)
        rows = onehot.T @ resid[t].sum(axis=1)
        # same-cluster pairs enter with 2 theta*_m, mixed pairs with one
        precision += 4.0 * size * (size - 1.0) / 2.0 + size * (n - size)
        data_term += block + (rows - block)
        sizes[t] = size
    return precision, data_term, sizes


def step_theta(rng: RandomSource, state: SamplerState, net: NetworkLike, hyper: Hyperparameters) -> SamplerState:
    """Redraw each live theta*_m in turn from its conjugate normal."""
    cs = state.c_state
    if cs.k == 0:
        return state
    precision, data_term, sizes = theta_conditionals(state, net, hyper)
    theta_star = cs.value_array()

    for m in range(cs.k):
        totals = sizes @ theta_star
        # mixed pairs subtract theta of the partner, which sits outside m
        partner = np.sum(sizes[:, m] * (totals - sizes[:, m] * theta_star[m]))
        mean = (data_term[m] - partner) / precision[m]
        theta_star[m] = rng.normal(mean, 1.0 / precision[m])

    cs.values = [float(v) for v in theta_star]
    return state


def eta_conditional(state: SamplerState, net: NetworkLike, hyper: Hyperparameters):
    """(mean, variance) of the persistence coefficient's conditional."""
    if state.model != ModelKind.DYNAMIC2:
        raise ModelMismatchError(f"eta only exists in dynamic2, not {state.model.value}")
    y = observed_ties(net, state.model)
    n = state.n
    iu = np.triu_indices(n, 1)
    theta = state.theta_by_time()
    resid = state.zeta[1:] - theta[1:, :, None] - theta[1:, None, :] - community_matrix(state)[None]
    prior_ties = y[:-1].astype(float)

    precision = 1.0 / hyper.var_eta + float(np.sum(prior_ties[:, iu[0], iu[1]] ** 2))
    total = float(np.sum(prior_ties[:, iu[0], iu[1]] * resid[:, iu[0], iu[1]]))
    return total / precision, 1.0 / precision


def step_eta(rng: RandomSource, state: SamplerState, net: NetworkLike, hyper: Hyperparameters) -> SamplerState:
    """Conjugate normal draw of the persistence coefficient (dynamic II only)."""
    mean, var = eta_conditional(state, net, hyper)
    state.eta = float(rng.normal(mean, var))
    return state


def step_alpha(rng: RandomSource, state: SamplerState) -> SamplerState:
    state.alpha = update_concentration(rng, state.alpha, state.L, state.c_state.n_units)
    return state


def step_nu(rng: RandomSource, state: SamplerState) -> SamplerState:
    state.nu = update_concentration(rng, state.nu, state.K, state.n)
    return state


# ============================================================================
# Sweeps
# ============================================================================

@dataclass(frozen=True)
class SweepPlan:
    """Which updates a sweep performs; order is fixed by `sweep`."""
    zeta: bool = True
    z: bool = True
    beta: bool = True
    alpha: bool = True
    c: bool = True
    theta: bool = True
    nu: bool = True
    eta: bool = True

    @classmethod
    def full(cls) -> "SweepPlan":
        return cls()

    @classmethod
    def fixed_partition(cls) -> "SweepPlan":
        """Hold z and c (and their concentrations) fixed; sample values only."""
        return cls(z=False, c=False, alpha=False, nu=False)


def sweep(
    rng: RandomSource,
    state: SamplerState,
    net: NetworkLike,
    hyper: Hyperparameters,
    plan: SweepPlan = SweepPlan(),
) -> SamplerState:
    """
    One Gibbs scan: zeta, z, beta*, alpha, c, theta*, nu, then eta for
    dynamic II; cluster ids are compacted at the end.

    Raises:
        ModelMismatchError: If the network does not fit the state's model
    """
    y = observed_ties(net, state.model)
    if y.shape[1] != state.n or y.shape[0] != state.T:
        raise ModelMismatchError(
            f"state is (T={state.T}, n={state.n}) but data is (T={y.shape[0]}, n={y.shape[1]})"
        )

    if plan.zeta:
        step_zeta(rng, state, y)
    if plan.z:
        step_z(rng, state, y, hyper)
    if plan.beta:
        step_beta(rng, state, y, hyper)
    if plan.alpha:
        step_alpha(rng, state)
    if plan.c:
        step_c(rng, state, y, hyper)
    if plan.theta:
        step_theta(rng, state, y, hyper)
    if plan.nu:
        step_nu(rng, state)
    if plan.eta and state.model == ModelKind.DYNAMIC2:
        step_eta(rng, state, y, hyper)

    state.z_state.compact()
    state.c_state.compact()
    return state


# ============================================================================
# Initialization and forward simulation
# ============================================================================

def popularity_units(model: ModelKind, n: int, T: int) -> int:
    return n * T if model == ModelKind.DYNAMIC1 else n


def draw_prior_parameters(
    rng: RandomSource,
    n: int,
    T: int,
    model: ModelKind,
    hyper: Hyperparameters,
    alpha: Optional[float] = None,
    nu: Optional[float] = None,
) -> TrueParameters:
    """Forward draw of concentrations, partitions, cluster values and eta."""
    alpha = float(alpha if alpha is not None else rng.gamma(hyper.a_alpha, hyper.b_alpha))
    nu = float(nu if nu is not None else rng.gamma(hyper.a_nu, hyper.b_nu))

    z = sample_crp_partition(rng, n, nu)
    c = sample_crp_partition(rng, popularity_units(model, n, T), alpha)
    beta_star = np.atleast_1d(rng.normal(np.zeros(int(z.max()) + 1 if n else 0), hyper.var_beta))
    theta_star = np.atleast_1d(rng.normal(np.zeros(int(c.max()) + 1 if c.size else 0), hyper.var_theta))
    eta = float(rng.normal(0.0, hyper.var_eta)) if model == ModelKind.DYNAMIC2 else 0.0
    return TrueParameters(z=z, c=c, beta_star=beta_star, theta_star=theta_star, eta=eta, alpha=alpha, nu=nu)


def state_from_parameters(
    params: TrueParameters,
    n: int,
    T: int,
    model: ModelKind,
    hyper: Hyperparameters,
) -> SamplerState:
    """SamplerState holding params, with zeta zeroed."""
    check_parameters(params, n, T, model)
    alpha = params.alpha if params.alpha is not None else hyper.a_alpha / hyper.b_alpha
    nu = params.nu if params.nu is not None else hyper.a_nu / hyper.b_nu
    return SamplerState(
        model=model,
        n=n,
        T=T,
        zeta=np.zeros((T, n, n)),
        z_state=CrpState.from_assignments(params.z, params.beta_star),
        c_state=CrpState.from_assignments(params.c, params.theta_star),
        alpha=Concentration(alpha, hyper.a_alpha, hyper.b_alpha),
        nu=Concentration(nu, hyper.a_nu, hyper.b_nu),
        eta=params.eta if model == ModelKind.DYNAMIC2 else 0.0,
    )


def initialize_state(
    rng: RandomSource,
    net: NetworkLike,
    model: ModelKind,
    hyper: Hyperparameters,
    alpha: Optional[float] = None,
    nu: Optional[float] = None,
) -> SamplerState:
    """
    Random starting point: concentrations from their gamma priors,
    partitions from the CRP, cluster values and eta from their priors,
    then one zeta pass.
    """
    y = observed_ties(net, model)
    T, n = y.shape[0], y.shape[1]
    params = draw_prior_parameters(rng, n, T, model, hyper, alpha=alpha, nu=nu)
    state = state_from_parameters(params, n, T, model, hyper)
    step_zeta(rng, state, y)
    logger.debug(f"Initialized {model.value} state: n={n}, T={T}, K={state.K}, L={state.L}")
    return state


def check_parameters(params: TrueParameters, n: int, T: int, model: ModelKind) -> None:
    """
    Raises:
        ModelMismatchError: If the parameters do not describe an n-actor,
            T-snapshot network of this model
    """
    if model == ModelKind.STATIC and T != 1:
        raise ModelMismatchError(f"static model has T = 1, got {T}")
    if model.is_dynamic and T < 2:
        raise ModelMismatchError(f"{model.value} needs T >= 2, got {T}")
    z = np.asarray(params.z)
    c = np.asarray(params.c)
    units = popularity_units(model, n, T)
    if z.shape != (n,):
        raise ModelMismatchError(f"z must have {n} entries, got {z.size}")
    if c.shape != (units,):
        raise ModelMismatchError(f"c must have {units} entries, got {c.size}")
    if n and (z.min() < 0 or z.max() >= len(params.beta_star)):
        raise ModelMismatchError("z refers to a community without a beta* value")
    if units and (c.min() < 0 or c.max() >= len(params.theta_star)):
        raise ModelMismatchError("c refers to a popularity cluster without a theta* value")
    if np.any(np.bincount(z.astype(np.intp), minlength=len(params.beta_star)) == 0):
        raise ModelMismatchError("every beta* value needs at least one member in z")
    if np.any(np.bincount(c.astype(np.intp), minlength=len(params.theta_star)) == 0):
        raise ModelMismatchError("every theta* value needs at least one member in c")
    if model != ModelKind.DYNAMIC2 and params.eta != 0.0:
        raise ModelMismatchError(f"eta is only defined for dynamic2, got {params.eta} for {model.value}")


def simulate_ties(rng: RandomSource, state: SamplerState) -> np.ndarray:
    """
    (T, n, n) ties drawn as Bernoulli(Phi(mu)) given the state, sequentially
    over t so dynamic II sees the previous snapshot.
    """
    n, T = state.n, state.T
    theta = state.theta_by_time()
    community = community_matrix(state)
    iu = np.triu_indices(n, 1)
    y = np.zeros((T, n, n), dtype=np.int8)
    for t in range(T):
        mu = theta[t][:, None] + theta[t][None, :] + community
        if state.model == ModelKind.DYNAMIC2 and t > 0:
            mu = mu + state.eta * y[t - 1]
        ties = rng.bernoulli(ndtr(mu[iu]))
        yt = np.zeros((n, n), dtype=np.int8)
        yt[iu] = ties
        y[t] = yt + yt.T
    return y


def network_from_ties(y: np.ndarray, model: ModelKind) -> Union[StaticNetwork, DynamicNetwork]:
    snapshots = []
    for t in range(y.shape[0]):
        i, j = np.nonzero(np.triu(y[t], 1))
        snapshots.append(StaticNetwork.from_pairs(y.shape[1], zip(i + 1, j + 1)))
    if model == ModelKind.STATIC:
        return snapshots[0]
    return DynamicNetwork(snapshots=tuple(snapshots))


def generate_network(
    rng: RandomSource,
    n: int,
    T: int,
    model: ModelKind,
    true_params: TrueParameters,
) -> Union[StaticNetwork, DynamicNetwork]:
    """
    Sample a network from the model with the given latent quantities.

    Raises:
        ModelMismatchError: On parameters inconsistent with (n, T, model)
    """
    state = state_from_parameters(true_params, n, T, model, Hyperparameters())
    return network_from_ties(simulate_ties(rng, state), model)
