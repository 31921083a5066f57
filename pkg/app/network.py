"""
Static and temporal undirected binary networks.

Edge lists are plain text, one node pair per line, whitespace or comma
separated, optional '#' header/comment lines. Node identifiers may be
0-based or 1-based (auto-detected: any 0 means 0-based). Inside this
module and its public API nodes are 1-based; `adjacency()` hands the
samplers a 0-based dense matrix.
"""

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]

_SPLIT = re.compile(r"[\s,;]+")
_HEADER_N = re.compile(r"^#\s*n\s*=\s*(\d+)\s*$")


class NetworkFormatError(Exception):
    """Exception raised when an edge list or snapshot cannot be loaded."""

    def __init__(self, message: str, line: Optional[int] = None, snapshot: Optional[int] = None):
        self.line = line
        self.snapshot = snapshot
        super().__init__(message)


@dataclass(frozen=True)
class StaticNetwork:
    """Undirected binary network stored as upper-triangle pairs (i < j), 1-based."""
    n: int
    edges: FrozenSet[Edge]
    labels: Optional[Tuple[str, ...]] = None
    attributes: Optional[Dict[int, str]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise NetworkFormatError(f"Node count must be non-negative, got {self.n}")
        for i, j in self.edges:
            if i == j:
                raise NetworkFormatError(f"Self-pair ({i}, {j}) is not allowed")
            if not (1 <= i < j <= self.n):
                raise NetworkFormatError(f"Edge ({i}, {j}) is not a canonical pair in [1, {self.n}]")
        if self.labels is not None and len(self.labels) != self.n:
            raise NetworkFormatError(f"Expected {self.n} labels, got {len(self.labels)}")

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Edge], **kwargs) -> "StaticNetwork":
        """Build from arbitrary 1-based pairs, normalizing (j, i) to (i, j)."""
        edges = set()
        for i, j in pairs:
            i, j = int(i), int(j)
            if i == j:
                raise NetworkFormatError(f"Self-loop at node {i}")
            edges.add((min(i, j), max(i, j)))
        return cls(n=n, edges=frozenset(edges), **kwargs)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 matrix (0-based), zero diagonal."""
        y = np.zeros((self.n, self.n), dtype=np.int8)
        if self.edges:
            idx = np.array(sorted(self.edges), dtype=np.intp) - 1
            y[idx[:, 0], idx[:, 1]] = 1
            y[idx[:, 1], idx[:, 0]] = 1
        return y

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        """Degree of every node, 0-based array."""
        return self.adjacency.sum(axis=1).astype(int)

    def node_name(self, i: int) -> str:
        """Display name of 1-based node i."""
        if self.labels is not None:
            return self.labels[i - 1]
        return str(i)

    def padded(self, n: int) -> "StaticNetwork":
        """Same edges on a larger node set (labels cannot be padded)."""
        if n < self.n:
            raise NetworkFormatError(f"Cannot shrink network from {self.n} to {n} nodes")
        if n == self.n:
            return self
        return StaticNetwork(n=n, edges=self.edges, labels=None, attributes=self.attributes)

    def with_metadata(
        self,
        labels: Optional[Sequence[str]] = None,
        attributes: Optional[Dict[int, str]] = None,
    ) -> "StaticNetwork":
        return StaticNetwork(
            n=self.n,
            edges=self.edges,
            labels=tuple(labels) if labels is not None else self.labels,
            attributes=attributes if attributes is not None else self.attributes,
        )


@dataclass(frozen=True)
class DynamicNetwork:
    """T ≥ 2 snapshots over one common, identically ordered node set."""
    snapshots: Tuple[StaticNetwork, ...]

    def __post_init__(self):
        if len(self.snapshots) < 2:
            raise NetworkFormatError(f"A dynamic network needs at least 2 snapshots, got {len(self.snapshots)}")
        sizes = {s.n for s in self.snapshots}
        if len(sizes) != 1:
            raise NetworkFormatError(f"Snapshots disagree on node count: {sorted(sizes)}")

    @property
    def n(self) -> int:
        return self.snapshots[0].n

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def labels(self) -> Optional[Tuple[str, ...]]:
        return self.snapshots[0].labels

    @property
    def attributes(self) -> Optional[Dict[int, str]]:
        return self.snapshots[0].attributes

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Stacked (T, n, n) adjacency."""
        return np.stack([s.adjacency for s in self.snapshots])

    def node_name(self, i: int) -> str:
        return self.snapshots[0].node_name(i)


Network = Union[StaticNetwork, DynamicNetwork]


def adjacency_stack(net: Network) -> np.ndarray:
    """(T, n, n) adjacency for either network kind (T = 1 for static)."""
    if isinstance(net, DynamicNetwork):
        return net.adjacency
    return net.adjacency[None, :, :]


def _read_pairs(path: Path) -> Tuple[List[Tuple[int, int, int]], Optional[int]]:
    """Return (lineno, a, b) triples exactly as written, and the '# n=' header value if any."""
    pairs = []
    declared = None
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            header = _HEADER_N.match(line)
            if header and declared is None:
                declared = int(header.group(1))
            if not line or line.startswith("#") or line.startswith("%"):
                continue
            tokens = [t for t in _SPLIT.split(line) if t]
            if len(tokens) < 2:
                raise NetworkFormatError(f"{path}:{lineno}: expected a node pair, got '{line}'", line=lineno)
            try:
                a, b = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise NetworkFormatError(
                    f"{path}:{lineno}: non-integer node identifier in '{line}'", line=lineno
                )
            if a < 0 or b < 0:
                raise NetworkFormatError(f"{path}:{lineno}: negative node identifier", line=lineno)
            if a == b:
                raise NetworkFormatError(f"{path}:{lineno}: self-loop on node {a}", line=lineno)
            pairs.append((lineno, a, b))
    return pairs, declared


def load_edge_list(
    path: Union[Path, str],
    n_hint: Optional[int] = None,
    index_base: Optional[int] = None,
) -> StaticNetwork:
    """
    Load an undirected edge list.

    Args:
        path: Edge list file
        n_hint: Node count to use when it exceeds the largest index seen;
            a "# n=<count>" header line in the file counts as one
        index_base: Force 0- or 1-based identifiers (None = auto-detect)

    Returns:
        Validated StaticNetwork

    Raises:
        NetworkFormatError: On self-loops, non-integer tokens or bad lines
    """
    path = Path(path)
    if not path.exists():
        raise NetworkFormatError(f"Edge list not found: {path}")

    pairs, declared = _read_pairs(path)
    if index_base is None:
        index_base = 0 if any(a == 0 or b == 0 for _, a, b in pairs) else 1
    elif index_base not in (0, 1):
        raise NetworkFormatError(f"index_base must be 0 or 1, got {index_base}")
    shift = 1 - index_base

    edges = set()
    max_index = 0
    for lineno, a, b in pairs:
        i, j = a + shift, b + shift
        if i < 1 or j < 1:
            raise NetworkFormatError(f"{path}:{lineno}: node 0 in a 1-based file", line=lineno)
        key = (min(i, j), max(i, j))
        if key in edges:
            logger.debug(f"{path}:{lineno}: duplicate edge {key} ignored")
        edges.add(key)
        max_index = max(max_index, i, j)

    n = max(max_index, n_hint or 0, declared or 0)
    net = StaticNetwork(n=n, edges=frozenset(edges))
    logger.info(f"Loaded {path}: n={net.n}, edges={net.edge_count}, base={index_base}")
    if net.edge_count == 0:
        logger.warning(f"{path} contains no edges")
    return net


def load_snapshots(
    paths: Sequence[Union[Path, str]],
    index_base: Optional[int] = None,
) -> DynamicNetwork:
    """
    Load T ≥ 2 edge lists as one dynamic network padded to a common n.

    Raises:
        NetworkFormatError: On fewer than 2 paths, or any snapshot error
            (with its 0-based snapshot index attached)
    """
    if len(paths) < 2:
        raise NetworkFormatError(f"Need at least 2 snapshot files, got {len(paths)}")

    loaded = []
    for t, path in enumerate(paths):
        try:
            loaded.append(load_edge_list(path, index_base=index_base))
        except NetworkFormatError as e:
            raise NetworkFormatError(f"snapshot {t + 1}: {e}", line=e.line, snapshot=t) from e

    n = max(s.n for s in loaded)
    return DynamicNetwork(snapshots=tuple(s.padded(n) for s in loaded))


def degree(net: StaticNetwork, i: int) -> int:
    """
    Number of edges incident to 1-based node i.

    Raises:
        IndexError: If i is outside [1, n]
    """
    if not 1 <= i <= net.n:
        raise IndexError(f"Node {i} out of range [1, {net.n}]")
    return int(net.adjacency[i - 1].sum())


def write_edge_list(net: StaticNetwork, path: Union[Path, str]) -> Path:
    """Write 1-based pairs, one per line, with an '# n=' header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(f"# n={net.n}\n")
        for i, j in sorted(net.edges):
            handle.write(f"{i} {j}\n")
    logger.info(f"Wrote {net.edge_count} edges to {path}")
    return path


def load_labels(path: Union[Path, str], n: int) -> Tuple[str, ...]:
    """One node name per line, in node order."""
    names = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    names = [name for name in names if name and not name.startswith("#")]
    if len(names) != n:
        raise NetworkFormatError(f"{path}: expected {n} labels, got {len(names)}")
    return tuple(names)


def load_attributes(path: Union[Path, str]) -> Dict[int, str]:
    """
    Read `node,tag` lines (1-based node ids) into an opaque tag map.

    A first line whose node column is not an integer is treated as a header.
    """
    attributes: Dict[int, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",", 1)]
        if len(parts) != 2:
            raise NetworkFormatError(f"{path}:{lineno}: expected 'node,tag'", line=lineno)
        try:
            node = int(parts[0])
        except ValueError:
            if not attributes:
                continue
            raise NetworkFormatError(f"{path}:{lineno}: non-integer node '{parts[0]}'", line=lineno)
        attributes[node] = parts[1]
    return attributes
