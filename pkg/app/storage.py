"""
Run artifacts on disk.

A run directory holds `run.meta` (flat key-value text) and one
`chain_<k>.csv` per chain with columns

    draw, K, L, alpha, nu, eta, z_1..z_n, c_1..c_U, beta_1..beta_n, theta_1..theta_U

Labels are written 1-based; beta_i and theta_u are the cluster values
seen by actor i and popularity unit u.
"""

import logging
import re
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.analysis import PartitionError
from app.config import ConfigError, RunConfig, build_run_config, get_settings, parse_key_value_file
from app.state import ChainDraw, ChainMeta, ChainOutput, ModelKind

logger = logging.getLogger(__name__)

META_FILE = "run.meta"
CHAIN_PATTERN = re.compile(r"^chain_(\d+)\.csv$")
SCALAR_COLUMNS = ["draw", "K", "L", "alpha", "nu", "eta"]
# keys in run.meta that are not part of the run config
META_ONLY_KEYS = {"n", "T", "streams", "wall_times", "algorithm", "created", "draws_per_chain"}


class ArtifactError(Exception):
    """Exception raised when run artifacts are missing or corrupt."""
    pass


def chain_path(run_dir: Path, k: int) -> Path:
    return Path(run_dir) / f"chain_{k}.csv"


# ============================================================================
# run.meta
# ============================================================================

def write_run_meta(
    run_dir: Path,
    config: RunConfig,
    chains: Sequence[ChainOutput],
    n: int,
    T: int,
) -> Path:
    """Write the key-value metadata file for a finished fit."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    flat = config.to_flat()
    flat["data"] = ", ".join(str(Path(p).resolve()) for p in config.data)
    for key in ("labels", "attributes"):
        if getattr(config, key) is not None:
            flat[key] = str(Path(getattr(config, key)).resolve())
    flat.update({
        "n": str(n),
        "T": str(T),
        "streams": ", ".join(str(c.meta.stream) for c in chains),
        "wall_times": ", ".join(f"{c.meta.wall_time:.3f}" for c in chains),
        "draws_per_chain": str(config.chain.retained),
        "algorithm": chains[0].meta.algorithm if chains else "PCG64",
        "created": datetime.now(get_settings().tz).isoformat(timespec="seconds"),
    })

    path = run_dir / META_FILE
    with path.open("w", encoding="utf-8") as handle:
        handle.write("# network blockmodel fit\n")
        for key, value in flat.items():
            handle.write(f"{key} = {value}\n")
    logger.info(f"Wrote {path}")
    return path


def read_run_meta(run_dir: Path) -> Dict[str, str]:
    """
    Raises:
        ArtifactError: If run.meta is missing or unreadable
    """
    path = Path(run_dir) / META_FILE
    if not path.exists():
        raise ArtifactError(f"No {META_FILE} in {run_dir}")
    try:
        return parse_key_value_file(path)
    except ConfigError as e:
        raise ArtifactError(f"Corrupt {path}: {e}") from e


def config_from_meta(meta: Dict[str, str]) -> RunConfig:
    """Rebuild the RunConfig a run was fitted with."""
    flat = {k: v for k, v in meta.items() if k not in {m.lower() for m in META_ONLY_KEYS}}
    try:
        return build_run_config(flat)
    except ConfigError as e:
        raise ArtifactError(f"run.meta does not hold a valid config: {e}") from e


# ============================================================================
# Chain tables
# ============================================================================

def chain_frame(chain: ChainOutput) -> pd.DataFrame:
    """Columnar view of one chain's draws."""
    z = chain.z_matrix() + 1
    c = chain.c_matrix() + 1
    columns = {name: chain.scalar(name) for name in ("K", "L", "alpha", "nu", "eta")}
    frame = pd.DataFrame({"draw": np.arange(1, len(chain.draws) + 1), **columns})
    frame["K"] = frame["K"].astype(int)
    frame["L"] = frame["L"].astype(int)
    n, units = z.shape[1] if z.size else 0, c.shape[1] if c.size else 0
    blocks = [
        frame,
        pd.DataFrame(z, columns=[f"z_{i}" for i in range(1, n + 1)]),
        pd.DataFrame(c, columns=[f"c_{u}" for u in range(1, units + 1)]),
        pd.DataFrame(chain.beta_by_actor(), columns=[f"beta_{i}" for i in range(1, n + 1)]),
        pd.DataFrame(chain.theta_by_unit(), columns=[f"theta_{u}" for u in range(1, units + 1)]),
    ]
    return pd.concat(blocks, axis=1)


def write_chain(run_dir: Path, k: int, chain: ChainOutput) -> Path:
    path = chain_path(run_dir, k)
    chain_frame(chain).to_csv(path, index=False, float_format="%.10g")
    logger.info(f"Wrote {len(chain.draws)} draws to {path}")
    return path


def _prefixed(frame: pd.DataFrame, prefix: str) -> np.ndarray:
    cols = [c for c in frame.columns if c.startswith(prefix)]
    cols.sort(key=lambda c: int(c[len(prefix):]))
    return frame[cols].to_numpy()


def _cluster_values(labels: np.ndarray, per_unit: np.ndarray) -> np.ndarray:
    k = int(labels.max()) + 1 if labels.size else 0
    values = np.zeros(k)
    values[labels[::-1]] = per_unit[::-1]
    return values


def read_chain(path: Path, meta: ChainMeta) -> ChainOutput:
    """
    Raises:
        ArtifactError: If the file is missing or its columns are inconsistent
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Chain file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ArtifactError(f"Corrupt chain file {path}: {e}") from e

    missing = [c for c in SCALAR_COLUMNS if c not in frame.columns]
    if missing:
        raise ArtifactError(f"{path} lacks columns {missing}")
    z = _prefixed(frame, "z_").astype(np.intp) - 1
    c = _prefixed(frame, "c_").astype(np.intp) - 1
    beta = _prefixed(frame, "beta_")
    theta = _prefixed(frame, "theta_")
    if z.shape != beta.shape or c.shape != theta.shape:
        raise ArtifactError(f"{path}: label and value columns do not line up")

    output = ChainOutput(meta=meta)
    for row in range(len(frame)):
        output.draws.append(ChainDraw(
            z=z[row],
            c=c[row],
            K=int(frame["K"].iat[row]),
            L=int(frame["L"].iat[row]),
            alpha=float(frame["alpha"].iat[row]),
            nu=float(frame["nu"].iat[row]),
            eta=float(frame["eta"].iat[row]),
            beta_star=_cluster_values(z[row], beta[row]),
            theta_star=_cluster_values(c[row], theta[row]),
        ))
    return output


def load_chains(run_dir: Path) -> Tuple[Dict[str, str], List[ChainOutput]]:
    """
    Read run.meta and every chain file of a run directory.

    Raises:
        ArtifactError: On missing or corrupt artifacts
    """
    run_dir = Path(run_dir)
    meta = read_run_meta(run_dir)
    files = sorted(
        (int(m.group(1)), p) for p in run_dir.iterdir() if (m := CHAIN_PATTERN.match(p.name))
    ) if run_dir.is_dir() else []
    if not files:
        raise ArtifactError(f"No chain files in {run_dir}")

    wall = [float(x) for x in meta.get("wall_times", "").split(",") if x.strip()]
    try:
        model = ModelKind(meta["model"])
        chain_meta = [
            ChainMeta(
                seed=int(meta["seed"]),
                stream=k,
                model=model,
                iterations=int(meta["iterations"]),
                burn_in=int(meta["burn_in"]),
                thin=int(meta["thin"]),
                wall_time=wall[k] if k < len(wall) else 0.0,
                algorithm=meta.get("algorithm", "PCG64"),
            )
            for k, _ in files
        ]
    except (KeyError, ValueError) as e:
        raise ArtifactError(f"Incomplete {META_FILE} in {run_dir}: {e}") from e

    chains = [read_chain(path, cm) for (_, path), cm in zip(files, chain_meta)]
    logger.info(f"Loaded {len(chains)} chains from {run_dir}")
    return meta, chains


# ============================================================================
# Partition files
# ============================================================================

def write_partition(path: Path, labels: Sequence, names: Optional[Sequence[str]] = None) -> Path:
    """Two-column node,label CSV (1-based nodes unless names are given)."""
    nodes = list(names) if names is not None else list(range(1, len(labels) + 1))
    pd.DataFrame({"node": nodes, "label": list(labels)}).to_csv(path, index=False)
    return Path(path)


def read_partition(path: Union[Path, str]) -> np.ndarray:
    """
    Labels from a node,label CSV in file order.

    Raises:
        PartitionError: If the file is missing or has no label column
    """
    path = Path(path)
    if not path.exists():
        raise PartitionError(f"Partition file not found: {path}")
    frame = pd.read_csv(path)
    if "label" not in frame.columns:
        raise PartitionError(f"{path} needs a 'label' column")
    return frame["label"].to_numpy()
