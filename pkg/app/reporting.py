"""
Tables and figures for a finished run.

Every figure has a CSV twin holding the same numbers. SVGs are rendered
from Jinja2 templates in app/templates and parsed with lxml before they
are written.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape
from lxml import etree

from app.analysis import (
    HardClustering,
    ScalarSummary,
    minimize_binder,
    popularity_by_degree,
    scalar_summaries,
    similarity_matrix,
    summaries_frame,
)
from app.gibbs import NetworkLike
from app.state import ChainOutput, ModelKind
from app.storage import ArtifactError, write_partition

logger = logging.getLogger(__name__)

APP_DIR = Path(__file__).resolve().parent
templates = Environment(
    loader=FileSystemLoader(APP_DIR / "templates"),
    autoescape=select_autoescape(enabled_extensions=("svg.j2",), default_for_string=True),
)

HEATMAP_MARGIN = 60
HEATMAP_SIZE = 600


def check_svg(text: str) -> None:
    """
    Raises:
        ArtifactError: If the SVG is not well-formed XML
    """
    try:
        etree.fromstring(text.encode("utf-8"))
    except etree.XMLSyntaxError as e:
        raise ArtifactError(f"Rendered SVG is not well-formed: {e}") from e


def write_svg(path: Path, text: str) -> Path:
    check_svg(text)
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_table(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.6g")
    logger.info(f"Wrote {path}")
    return path


# ============================================================================
# Rendering
# ============================================================================

def block_order(labels: Sequence[int]) -> np.ndarray:
    """Unit order grouping clusters together, clusters by label."""
    return np.argsort(np.asarray(labels), kind="stable")


def render_heatmap(S: np.ndarray, labels: Sequence[int], names: Sequence[str], title: str) -> str:
    """Grey-scale similarity heatmap with units ordered by the point partition."""
    n = S.shape[0]
    order = block_order(labels)
    cell = max(HEATMAP_SIZE / max(n, 1), 1.0)
    font = min(10.0, max(cell * 0.8, 4.0))
    cells = []
    for r, i in enumerate(order):
        for c, j in enumerate(order):
            grey = int(round(255 * (1.0 - S[i, j])))
            cells.append({
                "x": HEATMAP_MARGIN + c * cell,
                "y": HEATMAP_MARGIN + r * cell,
                "fill": f"rgb({grey},{grey},{grey})",
                "row": names[i],
                "col": names[j],
                "value": S[i, j],
            })
    ticks = [{"pos": HEATMAP_MARGIN + r * cell, "name": names[i]} for r, i in enumerate(order)]

    sorted_labels = np.asarray(labels)[order]
    blocks = []
    start = 0
    for r in range(1, n + 1):
        if r == n or sorted_labels[r] != sorted_labels[start]:
            blocks.append({"start": HEATMAP_MARGIN + start * cell, "size": (r - start) * cell})
            start = r

    side = 2 * HEATMAP_MARGIN + n * cell
    return templates.get_template("heatmap.svg.j2").render(
        title=title, width=side, height=side, margin=HEATMAP_MARGIN,
        cell_size=cell, font_size=font, cells=cells, ticks=ticks, blocks=blocks,
    )


def render_histogram(histogram: Dict[int, int], title: str, xlabel: str) -> str:
    """Bar plot of posterior proportions for an integer-valued scalar."""
    width, height, margin = 480, 300, 40
    baseline = height - 40
    values = sorted(histogram)
    total = sum(histogram.values()) or 1
    top = max(histogram.values(), default=1) / total
    slot = (width - 2 * margin) / max(len(values), 1)
    bars = []
    for k, value in enumerate(values):
        proportion = histogram[value] / total
        bar_height = (baseline - 40) * proportion / top if top > 0 else 0.0
        bars.append({
            "x": margin + k * slot + 0.1 * slot,
            "y": baseline - bar_height,
            "width": 0.8 * slot,
            "height": bar_height,
            "value": value,
            "proportion": proportion,
        })
    return templates.get_template("histogram.svg.j2").render(
        title=title, xlabel=xlabel, width=width, height=height,
        margin=margin, baseline=baseline, bars=bars,
    )


# ============================================================================
# Tables
# ============================================================================

def histogram_frame(summary: ScalarSummary) -> pd.DataFrame:
    total = sum(summary.histogram.values()) or 1
    return pd.DataFrame({
        summary.name: list(summary.histogram),
        "count": list(summary.histogram.values()),
        "proportion": [c / total for c in summary.histogram.values()],
    })


def trace_frame(chains: Sequence[ChainOutput]) -> pd.DataFrame:
    """K, L, alpha, nu and eta per retained draw and chain."""
    frames = []
    for k, chain in enumerate(chains):
        frame = pd.DataFrame({name: chain.scalar(name) for name in ("K", "L", "alpha", "nu", "eta")})
        frame.insert(0, "draw", np.arange(1, len(chain.draws) + 1))
        frame.insert(0, "chain", k)
        frames.append(frame)
    out = pd.concat(frames, ignore_index=True)
    out["K"] = out["K"].astype(int)
    out["L"] = out["L"].astype(int)
    return out


def similarity_frame(S: np.ndarray, names: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(S, index=list(names), columns=list(names)).reset_index(names="node")


def unit_names(names: Sequence[str], model: ModelKind, T: int) -> List[str]:
    """Names of popularity units: actors, or actor@time for dynamic I."""
    if model != ModelKind.DYNAMIC1:
        return list(names)
    return [f"{name}@{t + 1}" for t in range(T) for name in names]


# ============================================================================
# Summarize
# ============================================================================

def summarize_run(
    out_dir: Path,
    chains: Sequence[ChainOutput],
    net: NetworkLike,
    model: ModelKind,
    names: Optional[Sequence[str]] = None,
) -> Dict[str, HardClustering]:
    """
    Write every summary table and figure of a run into out_dir.

    Returns:
        Binder point partitions keyed 'community' and 'popularity'
    """
    if not chains or not any(ch.draws for ch in chains):
        raise ArtifactError("Run has no retained draws to summarize")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    z_draws = np.vstack([ch.z_matrix() for ch in chains])
    c_draws = np.vstack([ch.c_matrix() for ch in chains])
    n = z_draws.shape[1]
    T = c_draws.shape[1] // n if model == ModelKind.DYNAMIC1 else 1
    names = list(names) if names is not None else [str(i) for i in range(1, n + 1)]

    summaries = scalar_summaries(chains)
    for name in ("K", "L"):
        write_table(out_dir / f"{name}_hist.csv", histogram_frame(summaries[name]))
        write_svg(
            out_dir / f"{name}_hist.svg",
            render_histogram(summaries[name].histogram, f"Posterior of {name}", name),
        )
    write_table(out_dir / "scalars.csv", summaries_frame(summaries))
    write_table(
        out_dir / "psrf.csv",
        pd.DataFrame([{"scalar": s.name, "psrf": s.psrf} for s in summaries.values() if s.psrf is not None]),
    )
    write_table(out_dir / "trace.csv", trace_frame(chains))

    partitions: Dict[str, HardClustering] = {}
    for which, draws, unit_labels in (
        ("community", z_draws, names),
        ("popularity", c_draws, unit_names(names, model, T)),
    ):
        psm = similarity_matrix(draws)
        hard = minimize_binder(psm.S, draws)
        partitions[which] = hard
        write_table(out_dir / f"psm_{which}.csv", similarity_frame(psm.S, unit_labels))
        write_svg(
            out_dir / f"psm_{which}.svg",
            render_heatmap(psm.S, hard.labels, unit_labels, f"Posterior similarity ({which})"),
        )
        write_partition(out_dir / f"binder_{which}.csv", hard.labels, unit_labels)
        logger.info(f"Binder {which} partition: {hard.k} clusters, expected loss {hard.expected_loss:.3f}")

    write_table(out_dir / "popularity_by_degree.csv", popularity_by_degree(chains, net, model))
    return partitions
