"""
Tensor network geometries: MPS, antenna (caterpillar), balanced (ternary),
star, PEPS and dense, with bond dimensions capped by the Schmidt bound of
each cut.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional

import networkx as nx

from modules.errors import Disconnected, InvalidSpec, NoSuchNode, NotATreeBond
from modules.tensor_core import Tensor, physical_index, random_gaussian, virtual_index
from modules.utils import make_rng

logger = logging.getLogger(__name__)


class Family(str, Enum):
    MPS = "mps"
    ANTENNA = "antenna"
    BALANCED = "balanced"
    STAR = "star"
    PEPS = "peps"
    DENSE = "dense"


TREE_FAMILIES = frozenset({Family.MPS, Family.ANTENNA, Family.BALANCED, Family.STAR, Family.DENSE})

_LABEL_RE = re.compile(r"^(?P<family>[a-z]+?)(?P<k>\d+)?(?:(?P<rows>\d+)x(?P<cols>\d+))?$")


def schmidt_bound(n, p=2):
    """Largest Schmidt rank of an n-site state over all bipartitions (chi_S)."""
    return p ** (n // 2)


def default_grid(n):
    """Rows = largest divisor of n not above sqrt(n); returns (rows, cols)."""
    rows = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
    return rows, n // rows


@dataclass(frozen=True)
class GeometrySpec:
    """
    Symbolic description of a network.

    Attributes:
        family (Family): ansatz family
        n (int): number of physical sites
        chi (int): requested bond dimension
        p (int): physical dimension
        k (int): beam length, star family only
        rows, cols (int | None): grid shape, PEPS only (defaults to the most
            square factorisation of n)
    """
    family: Family
    n: int
    chi: int
    p: int = 2
    k: int = 1
    rows: Optional[int] = None
    cols: Optional[int] = None

    def __post_init__(self):
        try:
            family = Family(self.family)
        except ValueError:
            raise InvalidSpec(f"unknown geometry family {self.family!r}") from None
        object.__setattr__(self, "family", family)
        if self.n < 1:
            raise InvalidSpec(f"n must be >= 1, got {self.n}")
        if self.chi < 1:
            raise InvalidSpec(f"chi must be >= 1, got {self.chi}")
        if self.p < 1:
            raise InvalidSpec(f"p must be >= 1, got {self.p}")
        if family is Family.STAR:
            if self.k < 1:
                raise InvalidSpec(f"star beam length must be >= 1, got {self.k}")
        else:
            object.__setattr__(self, "k", 1)

        if family is Family.PEPS:
            rows, cols = self.rows, self.cols
            if rows is None and cols is None:
                rows, cols = default_grid(self.n)
            elif rows is None:
                rows = self.n // cols if cols and self.n % cols == 0 else 0
            elif cols is None:
                cols = self.n // rows if rows and self.n % rows == 0 else 0
            if rows < 1 or cols < 1 or rows * cols != self.n:
                raise InvalidSpec(f"PEPS grid {self.rows}x{self.cols} does not hold n={self.n} sites")
            object.__setattr__(self, "rows", rows)
            object.__setattr__(self, "cols", cols)
        else:
            object.__setattr__(self, "rows", None)
            object.__setattr__(self, "cols", None)

    @property
    def is_tree(self):
        return self.family in TREE_FAMILIES

    @property
    def label(self):
        if self.family is Family.STAR:
            return f"star{self.k}"
        if self.family is Family.PEPS:
            return f"peps{self.rows}x{self.cols}"
        return self.family.value

    def to_dict(self):
        out = {"family": self.family.value, "n": self.n, "chi": self.chi, "p": self.p}
        if self.family is Family.STAR:
            out["k"] = self.k
        if self.family is Family.PEPS:
            out["rows"] = self.rows
            out["cols"] = self.cols
        return out

    @classmethod
    def from_dict(cls, data, **defaults):
        merged = dict(defaults)
        merged.update(data)
        try:
            return cls(
                family=merged["family"],
                n=int(merged["n"]),
                chi=int(merged["chi"]),
                p=int(merged.get("p", 2)),
                k=int(merged.get("k", 1)),
                rows=merged.get("rows"),
                cols=merged.get("cols"),
            )
        except KeyError as e:
            raise InvalidSpec(f"geometry is missing field {e.args[0]!r}") from None
        except (TypeError, ValueError) as e:
            raise InvalidSpec(f"malformed geometry {data!r}: {e}") from None

    @classmethod
    def from_label(cls, label, n, chi, p=2):
        """Parse labels such as ``mps``, ``star2`` or ``peps3x4``."""
        match = _LABEL_RE.match(label.strip().lower())
        if not match:
            raise InvalidSpec(f"cannot parse geometry label {label!r}")
        k = int(match["k"]) if match["k"] else 1
        rows = int(match["rows"]) if match["rows"] else None
        cols = int(match["cols"]) if match["cols"] else None
        return cls(match["family"], n, chi, p=p, k=k, rows=rows, cols=cols)


def topology(spec: GeometrySpec) -> nx.Graph:
    """
    Node / bond graph of a geometry. Every node carries a ``sites`` tuple;
    edges carry their creation ``order``.
    """
    n = spec.n
    g = nx.Graph()

    def add_edge(u, v):
        g.add_edge(u, v, order=g.number_of_edges())

    if spec.family is Family.DENSE:
        g.add_node(0, sites=tuple(range(n)))
        return g

    g.add_nodes_from((i, {"sites": (i,)}) for i in range(n))

    if spec.family is Family.MPS:
        for i in range(n - 1):
            add_edge(i, i + 1)
    elif spec.family is Family.ANTENNA:
        # backbone on even ids, pendant leaf 2b+1 hanging from backbone node 2b
        for b in range(0, n, 2):
            if b + 2 < n:
                add_edge(b, b + 2)
            if b + 1 < n:
                add_edge(b, b + 1)
    elif spec.family is Family.BALANCED:
        for i in range(1, n):
            add_edge((i - 1) // 3, i)
    elif spec.family is Family.STAR:
        for start in range(1, n, spec.k):
            add_edge(0, start)
            for i in range(start, min(start + spec.k, n) - 1):
                add_edge(i, i + 1)
    elif spec.family is Family.PEPS:
        rows, cols = spec.rows, spec.cols
        for r in range(rows):
            for c in range(cols):
                node = r * cols + c
                if c + 1 < cols:
                    add_edge(node, node + 1)
                if r + 1 < rows:
                    add_edge(node, node + cols)
    return g


def tree_cap(topo: nx.Graph, bond, chi, p):
    """
    Bond dimension cap of a tree bond: min(p^|A|, p^|B|, chi) where A and B
    are the site sets separated by cutting ``bond``.
    """
    u, v = bond
    if not topo.has_edge(u, v):
        raise NotATreeBond(f"({u}, {v}) is not a bond of this topology")
    cut = topo.copy()
    cut.remove_edge(u, v)
    if nx.has_path(cut, u, v):
        raise NotATreeBond(f"bond ({u}, {v}) lies on a cycle")
    side = nx.node_connected_component(cut, u)
    total = sum(len(topo.nodes[x]["sites"]) for x in topo.nodes)
    a = sum(len(topo.nodes[x]["sites"]) for x in side)
    return min(p ** a, p ** (total - a), chi)


@dataclass(frozen=True, eq=False)
class Network:
    """
    A tensor network state.

    Attributes:
        nodes (dict): node id -> Tensor
        bonds (tuple): (node id, node id, Index) per virtual bond
        site_map (dict): site -> (node id, physical Index)
        p (int): physical dimension
        spec (GeometrySpec | None): geometry the network was built from
    """
    nodes: dict
    bonds: tuple
    site_map: dict
    p: int = 2
    spec: Optional[GeometrySpec] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bonds", tuple(self.bonds))
        for u, v, ix in self.bonds:
            for node in (u, v):
                if node not in self.nodes or ix.id not in self.nodes[node].ids:
                    raise InvalidSpec(f"bond index {ix.id} missing from node {node}")
        seen = set()
        for node, tensor in self.nodes.items():
            for ix in tensor.indices:
                if ix.is_physical:
                    if ix.site in seen:
                        raise InvalidSpec(f"site {ix.site} appears on more than one node")
                    seen.add(ix.site)
        if seen != set(self.site_map):
            raise InvalidSpec("site map does not match the physical indices of the nodes")

    @property
    def n(self):
        return len(self.site_map)

    @property
    def node_ids(self):
        return sorted(self.nodes)

    @property
    def physical_indices(self):
        return [self.site_map[s][1] for s in sorted(self.site_map)]

    @cached_property
    def graph(self):
        g = nx.Graph()
        for node in self.nodes:
            g.add_node(node, sites=tuple(sorted(
                ix.site for ix in self.nodes[node].indices if ix.is_physical)))
        for order, (u, v, ix) in enumerate(self.bonds):
            g.add_edge(u, v, index=ix, order=order)
        return g

    @property
    def is_tree(self):
        return nx.is_tree(self.graph)

    def tensor(self, node):
        try:
            return self.nodes[node]
        except KeyError:
            raise NoSuchNode(f"network has no node {node}") from None

    def with_tensors(self, updates):
        """
        Copy of the network with some node tensors replaced.

        Args:
            updates (dict): node id -> Tensor with the same index ids

        Returns:
            Network: the updated network
        """
        nodes = dict(self.nodes)
        for node, tensor in updates.items():
            old = self.tensor(node)
            if tensor.ids != old.ids:
                raise InvalidSpec(f"replacement for node {node} changes its indices")
            nodes[node] = tensor
        return Network(nodes, self.bonds, self.site_map, self.p, self.spec)

    def scaled(self, factor):
        """Every tensor multiplied by ``factor``."""
        return self.with_tensors({node: t.scaled(factor) for node, t in self.nodes.items()})


def build(spec: GeometrySpec, seed) -> Network:
    """
    Build a random network of the given geometry.

    Bond dimensions are ``tree_cap`` for tree families and ``chi`` for PEPS.
    Node tensors are Gaussian, drawn from a generator derived from
    (seed, node id), then rescaled so the represented state has unit norm.

    Args:
        spec (GeometrySpec): geometry description
        seed (int): network seed

    Returns:
        Network: the normalized network
    """
    # Import at the function level to avoid circular imports
    from modules.engine import to_dense

    topo = topology(spec)
    edges = sorted(topo.edges(data="order"), key=lambda e: e[2])

    bonds = []
    incident = {node: [] for node in topo.nodes}
    for bond_no, (u, v, _) in enumerate(edges):
        u, v = min(u, v), max(u, v)
        dim = spec.chi if spec.family is Family.PEPS else tree_cap(topo, (u, v), spec.chi, spec.p)
        ix = virtual_index(bond_no, dim)
        bonds.append((u, v, ix))
        incident[u].append(ix)
        incident[v].append(ix)

    nodes, site_map = {}, {}
    for node in sorted(topo.nodes):
        phys = [physical_index(s, spec.p) for s in sorted(topo.nodes[node]["sites"])]
        for ix in phys:
            site_map[ix.site] = (node, ix)
        nodes[node] = random_gaussian(phys + incident[node], make_rng(seed, node))

    net = Network(nodes, tuple(bonds), site_map, spec.p, spec)
    norm = to_dense(net).norm()
    net = net.scaled(norm ** (-1.0 / len(nodes)))
    logger.debug("built %s n=%d chi=%d seed=%s with %d nodes", spec.label, spec.n, spec.chi, seed, len(nodes))
    return net


def bond_dims(net: Network):
    """Bond dimensions in bond order."""
    return [ix.dim for _, _, ix in net.bonds]


def diameter(net: Network) -> int:
    """Longest shortest path between nodes, counted in bond hops."""
    g = net.graph
    if not nx.is_connected(g):
        raise Disconnected("network graph is not connected")
    if g.number_of_nodes() == 1:
        return 0
    return nx.diameter(g)


def sizes(net: Network):
    """Returns (largest tensor element count, total element count)."""
    counts = [t.size for t in net.nodes.values()]
    return max(counts), sum(counts)
