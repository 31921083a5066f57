"""
Chain driver: independent Gibbs chains on separate random streams.

Each chain owns its SamplerState and RandomSource (stream = chain index
under the run seed) and shares the network read-only. With jobs > 1 the
chains run in a process pool, one worker per chain up to the cap.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.gibbs import (
    NetworkLike,
    SweepPlan,
    draw_prior_parameters,
    initialize_state,
    observed_ties,
    state_from_parameters,
    step_zeta,
    sweep,
)
from app.random_source import RandomSource
from app.state import ChainConfig, ChainDraw, ChainMeta, ChainOutput, Hyperparameters, ModelKind, SamplerState

logger = logging.getLogger(__name__)

FixedPartition = Tuple[np.ndarray, np.ndarray]


def fixed_partition_state(
    rng: RandomSource,
    net: NetworkLike,
    model: ModelKind,
    hyper: Hyperparameters,
    fixed: FixedPartition,
) -> SamplerState:
    """
    Starting state with z and c pinned to 0-based contiguous labels;
    cluster values, concentrations and eta come from the prior.
    """
    y = observed_ties(net, model)
    T, n = y.shape[0], y.shape[1]
    z, c = (np.asarray(a, dtype=np.intp) for a in fixed)
    params = draw_prior_parameters(rng, n, T, model, hyper)
    params.z = z
    params.c = c
    params.beta_star = np.atleast_1d(rng.normal(np.zeros(int(z.max()) + 1), hyper.var_beta))
    params.theta_star = np.atleast_1d(rng.normal(np.zeros(int(c.max()) + 1), hyper.var_theta))
    state = state_from_parameters(params, n, T, model, hyper)
    step_zeta(rng, state, y)
    return state


def run_chain(
    net: NetworkLike,
    model: ModelKind,
    hyper: Hyperparameters,
    config: ChainConfig,
    stream: int,
    fixed: Optional[FixedPartition] = None,
) -> ChainOutput:
    """
    Run one chain and keep every `thin`-th sweep after burn-in.

    Args:
        net: Observed network
        model: Model kind
        hyper: Prior constants
        config: Chain lengths and seed
        stream: Random stream index of this chain
        fixed: (z, c) to hold fixed, for conditional refits

    Returns:
        ChainOutput with (iterations - burn_in) // thin draws
    """
    rng = RandomSource(seed=config.seed, stream=stream)
    if fixed is None:
        state = initialize_state(rng, net, model, hyper)
        plan = SweepPlan.full()
    else:
        state = fixed_partition_state(rng, net, model, hyper, fixed)
        plan = SweepPlan.fixed_partition()

    meta = ChainMeta(
        seed=config.seed,
        stream=stream,
        model=model,
        iterations=config.iterations,
        burn_in=config.burn_in,
        thin=config.thin,
        algorithm=rng.algorithm,
    )
    output = ChainOutput(meta=meta)
    logger.info(f"Chain {stream}: starting {config.iterations} sweeps ({model.value})")
    started = time.perf_counter()

    for it in range(1, config.iterations + 1):
        sweep(rng, state, net, hyper, plan)
        kept = it - config.burn_in
        if kept > 0 and kept % config.thin == 0:
            output.draws.append(ChainDraw.from_state(state))
        if it % config.progress_every == 0:
            logger.debug(
                f"Chain {stream}: sweep {it}/{config.iterations}, K={state.K}, L={state.L}, "
                f"alpha={state.alpha.value:.3f}, nu={state.nu.value:.3f}"
            )

    meta.wall_time = time.perf_counter() - started
    logger.info(f"Chain {stream}: finished in {meta.wall_time:.1f}s, {len(output.draws)} draws kept")
    return output


def run_chains(
    net: NetworkLike,
    model: ModelKind,
    hyper: Hyperparameters,
    config: ChainConfig,
    fixed: Optional[FixedPartition] = None,
) -> List[ChainOutput]:
    """
    Run config.chains independent chains, streams 0..chains-1.

    Raises:
        ModelMismatchError: If the network does not fit the model
    """
    observed_ties(net, model)
    jobs = min(config.jobs, config.chains)
    streams: Sequence[int] = range(config.chains)

    if jobs == 1:
        return [run_chain(net, model, hyper, config, k, fixed) for k in streams]

    logger.info(f"Running {config.chains} chains on {jobs} workers")
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_chain, net, model, hyper, config, k, fixed) for k in streams]
        return [f.result() for f in futures]
