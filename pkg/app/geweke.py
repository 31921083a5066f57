"""
Joint-distribution correctness test for the Gibbs kernels.

Marginal-conditional simulation draws (parameters, network) straight
from the prior. Successive-conditional simulation alternates one full
sweep with regenerating the network from the current parameters. If
every conditional is right both produce the same joint, so the scalar
marginals (K, L, alpha, nu, eta, mean beta*, mean theta*) must agree.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy import stats

from app.gibbs import (
    SweepPlan,
    draw_prior_parameters,
    simulate_ties,
    state_from_parameters,
    step_zeta,
    sweep,
)
from app.random_source import RandomSource
from app.state import Hyperparameters, ModelKind, SamplerState, TrueParameters

logger = logging.getLogger(__name__)

DISCRETE = ("K", "L")
CONTINUOUS = ("alpha", "nu", "eta", "mean_beta", "mean_theta")


def _record(K: int, L: int, alpha: float, nu: float, eta: float, beta, theta) -> Dict[str, float]:
    return {
        "K": K,
        "L": L,
        "alpha": alpha,
        "nu": nu,
        "eta": eta,
        "mean_beta": float(np.mean(beta)),
        "mean_theta": float(np.mean(theta)),
    }


def _from_params(p: TrueParameters) -> Dict[str, float]:
    return _record(len(p.beta_star), len(p.theta_star), p.alpha, p.nu, p.eta, p.beta_star, p.theta_star)


def _from_state(s: SamplerState) -> Dict[str, float]:
    return _record(s.K, s.L, s.alpha.value, s.nu.value, s.eta, s.z_state.values, s.c_state.values)


@dataclass
class GewekeReport:
    model: ModelKind
    forward: Dict[str, np.ndarray]
    successive: Dict[str, np.ndarray]
    p_values: Dict[str, float] = field(default_factory=dict)

    def passed(self, level: float = 0.01) -> bool:
        return all(p > level for p in self.p_values.values())

    def failures(self, level: float = 0.01) -> List[str]:
        return [name for name, p in self.p_values.items() if not p > level]


def _chi_square_p(a: np.ndarray, b: np.ndarray) -> float:
    """Homogeneity test of two integer samples; sparse tail bins are pooled."""
    top = int(max(a.max(), b.max()))
    counts = np.vstack([np.bincount(a.astype(int), minlength=top + 1),
                        np.bincount(b.astype(int), minlength=top + 1)])
    counts = counts[:, counts.sum(axis=0) > 0]
    # merge bins from the right until every pooled column has >= 5 per row expected
    merged = []
    acc = np.zeros(2)
    for col in counts.T[::-1]:
        acc = acc + col
        if acc.min() >= 5:
            merged.append(acc)
            acc = np.zeros(2)
    if acc.sum() > 0:
        if merged:
            merged[-1] = merged[-1] + acc
        else:
            merged.append(acc)
    table = np.array(merged).T
    if table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table)[1])


def geweke_test(
    model: ModelKind,
    hyper: Hyperparameters,
    n: int = 6,
    T: int = 2,
    iterations: int = 10_000,
    seed: int = 1,
    thin: int = 40,
) -> GewekeReport:
    """
    Compare forward and successive-conditional draws.

    Args:
        model: Model kind (T is forced to 1 for static)
        hyper: Prior constants
        n: Actors
        T: Snapshots for dynamic models
        iterations: Draws from each simulator (successive draws are
            taken every `thin` sweeps)
        seed: Seed; stream 0 is forward, stream 1 successive
        thin: Sweeps between successive-conditional records

    Returns:
        GewekeReport with chi-square p-values for K, L and two-sample
        KS p-values for the continuous scalars
    """
    if model == ModelKind.STATIC:
        T = 1
    forward_rng = RandomSource(seed=seed, stream=0)
    chain_rng = RandomSource(seed=seed, stream=1)

    forward = [_from_params(draw_prior_parameters(forward_rng, n, T, model, hyper)) for _ in range(iterations)]

    state = state_from_parameters(draw_prior_parameters(chain_rng, n, T, model, hyper), n, T, model, hyper)
    ties = simulate_ties(chain_rng, state)
    step_zeta(chain_rng, state, ties)
    plan = SweepPlan.full()
    successive = []
    for it in range(iterations * thin):
        sweep(chain_rng, state, ties, hyper, plan)
        ties = simulate_ties(chain_rng, state)
        if (it + 1) % thin == 0:
            successive.append(_from_state(state))
        if (it + 1) % 5000 == 0:
            logger.debug(f"Geweke {model.value}: {it + 1} successive sweeps")

    names = DISCRETE + CONTINUOUS
    fwd = {k: np.array([r[k] for r in forward], dtype=float) for k in names}
    suc = {k: np.array([r[k] for r in successive], dtype=float) for k in names}

    report = GewekeReport(model=model, forward=fwd, successive=suc)
    for name in DISCRETE:
        report.p_values[name] = _chi_square_p(fwd[name], suc[name])
    for name in CONTINUOUS:
        if name == "eta" and model != ModelKind.DYNAMIC2:
            continue
        report.p_values[name] = float(stats.ks_2samp(fwd[name], suc[name]).pvalue)

    logger.info(
        f"Geweke {model.value}: "
        + ", ".join(f"{k}={p:.3f}" for k, p in report.p_values.items())
    )
    return report
