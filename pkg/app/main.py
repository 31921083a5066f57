"""
Command-line front-end for the blockmodel samplers.

Subcommands:
    fit            run the chains of a run config and summarize them
    summarize      rebuild tables and figures of an existing run
    refit          re-estimate beta*/theta* with the partitions held fixed
    simulate       draw a network (and its truth) from the model
    validate-data  report on edge-list files without sampling
    runs           list recent entries of the run registry

Exit status: 0 ok, 2 usage or validation error, 3 runtime error.
"""

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError
from sqlalchemy.exc import SQLAlchemyError

from app.analysis import PartitionError, canonical_labels, conditional_refit
from app.config import (
    ConfigError,
    RunConfig,
    get_settings,
    load_run_config,
    parse_key_value_file,
    parse_overrides,
)
from app.database import get_db_session, init_db
from app.gibbs import draw_prior_parameters, generate_network, popularity_units
from app.models import RunRecord
from app.network import (
    DynamicNetwork,
    NetworkFormatError,
    StaticNetwork,
    load_attributes,
    load_edge_list,
    load_labels,
    load_snapshots,
    write_edge_list,
)
from app.random_source import RandomSource
from app.reporting import summarize_run, write_table
from app.runner import run_chains
from app.state import ChainConfig, Hyperparameters, ModelKind, ModelMismatchError
from app.storage import (
    ArtifactError,
    config_from_meta,
    load_chains,
    read_partition,
    read_run_meta,
    write_chain,
    write_partition,
    write_run_meta,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

USAGE_ERRORS = (ConfigError, NetworkFormatError, PartitionError, ModelMismatchError, FileNotFoundError)

# dedicated flags that map onto run config keys
FLAG_KEYS = ("model", "seed", "chains", "iterations", "burn_in", "thin", "jobs", "output_dir")


def setup_logging(level: Optional[str] = None) -> None:
    """Configure root logging once, stdout handler, level from settings unless given."""
    level_name = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout)
        ],
        force=True,
    )


# ============================================================================
# Helpers
# ============================================================================

def collect_overrides(args: argparse.Namespace) -> Dict[str, str]:
    """--set pairs first, then the dedicated flags (which win)."""
    overrides = parse_overrides(getattr(args, "set", None) or [])
    for key in FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    return overrides


def load_network(config: RunConfig):
    """
    Load the data files of a run config, with labels and attributes attached.

    Raises:
        NetworkFormatError: On unreadable data or metadata files
    """
    if config.model == ModelKind.STATIC:
        net = load_edge_list(config.data[0], index_base=config.index_base)
    else:
        net = load_snapshots(config.data, index_base=config.index_base)

    labels = load_labels(config.labels, net.n) if config.labels else None
    attributes = load_attributes(config.attributes) if config.attributes else None
    if labels is None and attributes is None:
        return net
    if isinstance(net, StaticNetwork):
        return net.with_metadata(labels=labels, attributes=attributes)
    return DynamicNetwork(snapshots=tuple(s.with_metadata(labels, attributes) for s in net.snapshots))


def node_names(net) -> List[str]:
    return [net.node_name(i) for i in range(1, net.n + 1)]


@contextmanager
def registered_run(run_dir: Path, command: str, model: ModelKind, seed: int) -> Iterator[None]:
    """Record a run in the registry; registry trouble is logged, never fatal."""
    record_id = None
    try:
        init_db()
        with get_db_session() as db:
            record_id = RunRecord.create(db, str(run_dir), command, model.value, seed).id
    except SQLAlchemyError as e:
        logger.warning(f"Run registry unavailable: {e}")

    started = time.perf_counter()
    try:
        yield
    except Exception as e:
        _close_record(record_id, error=str(e))
        raise
    _close_record(record_id, wall_time=time.perf_counter() - started)


def _close_record(record_id: Optional[int], wall_time: float = 0.0, error: Optional[str] = None) -> None:
    if record_id is None:
        return
    try:
        with get_db_session() as db:
            record = RunRecord.get_by_id(db, record_id)
            if record is None:
                return
            if error is None:
                record.finish(wall_time)
            else:
                record.fail(error)
    except SQLAlchemyError as e:
        logger.warning(f"Could not update run record {record_id}: {e}")


def chain_config_with(base: ChainConfig, overrides: Dict[str, str]) -> ChainConfig:
    """Chain settings with overrides applied and revalidated."""
    unknown = set(overrides) - set(ChainConfig.model_fields)
    if unknown:
        raise ConfigError(f"Not a chain setting: {', '.join(sorted(unknown))}")
    try:
        return ChainConfig(**{**base.model_dump(), **overrides})
    except ValidationError as e:
        raise ConfigError(f"Invalid chain settings: {e.errors()[0].get('msg')}") from e


# ============================================================================
# Commands
# ============================================================================

def cmd_fit(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, collect_overrides(args))
    net = load_network(config)
    run_dir = config.resolved_output_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    logger.info(
        f"Fitting {config.model.value}: {config.chain.chains} chains x {config.chain.iterations} sweeps "
        f"(burn-in {config.chain.burn_in}, thin {config.chain.thin}) into {run_dir}"
    )

    with registered_run(run_dir, "fit", config.model, config.chain.seed):
        chains = run_chains(net, config.model, config.hyper, config.chain)
        for k, chain in enumerate(chains):
            write_chain(run_dir, k, chain)
        T = net.T if isinstance(net, DynamicNetwork) else 1
        write_run_meta(run_dir, config, chains, net.n, T)
        if not args.no_summary:
            summarize_run(run_dir, chains, net, config.model, node_names(net))

    logger.info(f"Fit finished: {sum(c.meta.wall_time for c in chains):.1f}s sampling time")
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    meta, chains = load_chains(run_dir)
    config = config_from_meta(meta)
    net = load_network(config)
    out_dir = Path(args.out) if args.out else run_dir
    partitions = summarize_run(out_dir, chains, net, config.model, node_names(net))
    for which, hard in partitions.items():
        print(f"{which}: {hard.k} clusters, expected Binder loss {hard.expected_loss:.3f}")
    return EXIT_OK


def cmd_refit(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    config = config_from_meta(read_run_meta(run_dir))
    net = load_network(config)
    overrides = parse_overrides(args.set or [])
    for key in ("seed", "chains", "iterations", "burn_in", "thin", "jobs"):
        if getattr(args, key, None) is not None:
            overrides[key] = str(getattr(args, key))
    chain = chain_config_with(config.chain, overrides)

    z = read_partition(args.community or run_dir / "binder_community.csv")
    c = read_partition(args.popularity or run_dir / "binder_popularity.csv")
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    with registered_run(out_dir, "refit", config.model, chain.seed):
        report = conditional_refit(net, config.model, config.hyper, z, c, chain)
        write_table(out_dir / "refit_community.csv", report.community)
        write_table(out_dir / "refit_popularity.csv", report.popularity)
        if config.model == ModelKind.DYNAMIC1:
            n = net.n
            membership = pd.DataFrame({
                "node": [node_names(net)[u % n] for u in range(len(report.c))],
                "time": [u // n + 1 for u in range(len(report.c))],
                "cluster": list(report.c),
            })
            write_table(out_dir / "refit_popularity_membership.csv", membership)

    for _, row in report.popularity.iterrows():
        print(f"theta*[{row['cluster']}] = {row['theta_mean']:.3f} +/- {row['theta_sd']:.3f} (size {row['size']})")
    return EXIT_OK


def _parse_label_list(text: str) -> np.ndarray:
    """'1, 1, 2' or run-length '1*20, 2*20' into an integer array."""
    out: List[int] = []
    for token in (t.strip() for t in text.split(",")):
        if not token:
            continue
        try:
            if "*" in token:
                value, count = token.split("*", 1)
                out.extend([int(value)] * int(count))
            else:
                out.append(int(token))
        except ValueError:
            raise ConfigError(f"Not an integer label list: '{text}'")
    return np.array(out, dtype=np.intp)


def _parse_float_list(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise ConfigError(f"Not a list of numbers: '{text}'")


SIMULATION_KEYS = {"model", "n", "t", "seed", "z", "c", "beta", "theta", "eta", "alpha", "nu"}


def cmd_simulate(args: argparse.Namespace) -> int:
    flat = parse_key_value_file(Path(args.params))
    flat.update({k.lower(): v for k, v in parse_overrides(args.set or []).items()})
    hyper_keys = {k: v for k, v in flat.items() if k in Hyperparameters.model_fields}
    unknown = set(flat) - SIMULATION_KEYS - set(hyper_keys)
    if unknown:
        raise ConfigError(f"Unknown simulation keys: {', '.join(sorted(unknown))}")
    try:
        hyper = Hyperparameters(**hyper_keys)
        model = ModelKind(flat.get("model", "static"))
        n = int(flat["n"])
        T = int(flat.get("t", "1" if model == ModelKind.STATIC else "2"))
        seed = int(args.seed if args.seed is not None else flat.get("seed", "1"))
    except (KeyError, ValueError, ValidationError) as e:
        raise ConfigError(f"Invalid simulation parameters in {args.params}: {e}") from e

    rng = RandomSource(seed=seed)
    alpha = float(flat["alpha"]) if "alpha" in flat else None
    nu = float(flat["nu"]) if "nu" in flat else None
    params = draw_prior_parameters(rng, n, T, model, hyper, alpha=alpha, nu=nu)
    if "z" in flat:
        params.z = _parse_label_list(flat["z"]) - 1
        k = int(params.z.max()) + 1 if params.z.size else 0
        params.beta_star = _parse_float_list(flat["beta"]) if "beta" in flat else rng.normal(np.zeros(k), hyper.var_beta)
    if "c" in flat:
        params.c = _parse_label_list(flat["c"]) - 1
        k = int(params.c.max()) + 1 if params.c.size else 0
        params.theta_star = _parse_float_list(flat["theta"]) if "theta" in flat else rng.normal(np.zeros(k), hyper.var_theta)
    if "eta" in flat:
        params.eta = float(flat["eta"])

    net = generate_network(rng, n, T, model, params)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(net, StaticNetwork):
        write_edge_list(net, out_dir / "network.txt")
    else:
        for t, snapshot in enumerate(net.snapshots, start=1):
            write_edge_list(snapshot, out_dir / f"snapshot_{t}.txt")

    write_partition(out_dir / "truth_community.csv", canonical_labels(params.z) + 1)
    units = popularity_units(model, n, T)
    unit_ids = [f"{u % n + 1}@{u // n + 1}" for u in range(units)] if model == ModelKind.DYNAMIC1 else None
    write_partition(out_dir / "truth_popularity.csv", canonical_labels(params.c) + 1, unit_ids)
    with (out_dir / "truth.meta").open("w", encoding="utf-8") as handle:
        handle.write(f"model = {model.value}\nn = {n}\nT = {T}\nseed = {seed}\n")
        handle.write(f"beta = {', '.join(f'{v:.6g}' for v in params.beta_star)}\n")
        handle.write(f"theta = {', '.join(f'{v:.6g}' for v in params.theta_star)}\n")
        handle.write(f"eta = {params.eta:.6g}\nalpha = {params.alpha:.6g}\nnu = {params.nu:.6g}\n")
    logger.info(f"Simulated {model.value} network (n={n}, T={T}) into {out_dir}")
    return EXIT_OK


def cmd_validate_data(args: argparse.Namespace) -> int:
    if args.config:
        config = load_run_config(args.config)
        net = load_network(config)
    elif len(args.paths) == 1:
        net = load_edge_list(args.paths[0], index_base=args.index_base)
    elif len(args.paths) > 1:
        net = load_snapshots(args.paths, index_base=args.index_base)
    else:
        raise ConfigError("validate-data needs edge-list paths or --config")

    snapshots = net.snapshots if isinstance(net, DynamicNetwork) else (net,)
    print(f"n = {net.n}, T = {len(snapshots)}")
    for t, snap in enumerate(snapshots, start=1):
        deg = snap.degrees()
        isolated = [snap.node_name(i + 1) for i in np.flatnonzero(deg == 0)]
        pairs = snap.n * (snap.n - 1) // 2
        print(
            f"snapshot {t}: edges = {snap.edge_count}, density = {snap.edge_count / max(pairs, 1):.4f}, "
            f"degree range = [{deg.min() if deg.size else 0}, {deg.max() if deg.size else 0}]"
        )
        if isolated:
            print(f"snapshot {t}: isolated nodes: {' '.join(isolated)}")
        if snap.edge_count in (0, pairs):
            logger.warning(f"snapshot {t} is {'empty' if snap.edge_count == 0 else 'complete'}")
    return EXIT_OK


def cmd_runs(args: argparse.Namespace) -> int:
    init_db()
    with get_db_session() as db:
        for record in RunRecord.get_recent(db, limit=args.limit):
            wall = f"{record.wall_time:.1f}s" if record.wall_time is not None else "-"
            print(
                f"{record.id:5d}  {record.started_at:%Y-%m-%d %H:%M}  {record.command:7s} {record.model:9s} "
                f"{record.status:9s} {wall:>8s}  {record.run_dir}"
                + (f"  ({record.error_message})" if record.error_message else "")
            )
    return EXIT_OK


# ============================================================================
# Argument parsing
# ============================================================================

def _add_chain_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int)
    parser.add_argument("--chains", type=int)
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--burn-in", dest="burn_in", type=int)
    parser.add_argument("--thin", type=int)
    parser.add_argument("--jobs", type=int, help="Chains sampled concurrently")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override any config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockmodel", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ... (default from settings)")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="Run the sampler for a run config")
    fit.add_argument("config", type=Path)
    _add_chain_flags(fit)
    fit.add_argument("--model", choices=[m.value for m in ModelKind])
    fit.add_argument("--output-dir", dest="output_dir")
    fit.add_argument("--no-summary", action="store_true", help="Only write chains and run.meta")
    fit.set_defaults(handler=cmd_fit)

    summarize = sub.add_parser("summarize", help="Tables and figures of a fitted run")
    summarize.add_argument("run_dir", type=Path)
    summarize.add_argument("--out", type=Path)
    summarize.set_defaults(handler=cmd_summarize)

    refit = sub.add_parser("refit", help="Cluster values under fixed partitions")
    refit.add_argument("run_dir", type=Path)
    refit.add_argument("--community", type=Path, help="node,label CSV (default: binder_community.csv)")
    refit.add_argument("--popularity", type=Path, help="node,label CSV (default: binder_popularity.csv)")
    refit.add_argument("--out", type=Path)
    _add_chain_flags(refit)
    refit.set_defaults(handler=cmd_refit)

    simulate = sub.add_parser("simulate", help="Generate a network from model parameters")
    simulate.add_argument("params", type=Path)
    simulate.add_argument("--out", type=Path, required=True)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--set", action="append", metavar="KEY=VALUE")
    simulate.set_defaults(handler=cmd_simulate)

    validate = sub.add_parser("validate-data", help="Check edge-list files")
    validate.add_argument("paths", nargs="*", type=Path)
    validate.add_argument("--config", type=Path)
    validate.add_argument("--index-base", dest="index_base", type=int, choices=[0, 1])
    validate.set_defaults(handler=cmd_validate_data)

    runs = sub.add_parser("runs", help="Recent entries of the run registry")
    runs.add_argument("--limit", type=int, default=20)
    runs.set_defaults(handler=cmd_runs)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    try:
        return args.handler(args)
    except USAGE_ERRORS as e:
        logger.error(str(e))
        return EXIT_USAGE
    except ArtifactError as e:
        logger.error(str(e))
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"{args.command} failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
