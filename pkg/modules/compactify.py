"""
Compact version of a loop-free network: leaves whose bond is smaller than chi
are contracted into their neighbour until every leaf bond reaches chi.
"""
import logging

import networkx as nx

from modules.errors import NotATree
from modules.geometry import Network, sizes
from modules.tensor_core import contract, permute

logger = logging.getLogger(__name__)


def _canonical_order(tensor):
    """Physical indices sorted by site first, then the virtual ones in place."""
    phys = sorted((ix for ix in tensor.indices if ix.is_physical), key=lambda ix: ix.site)
    virt = [ix for ix in tensor.indices if not ix.is_physical]
    return permute(tensor, [ix.id for ix in phys + virt])


def _contractible_leaf(net, chi):
    degree = {node: 0 for node in net.nodes}
    bond_of = {}
    for u, v, ix in net.bonds:
        degree[u] += 1
        degree[v] += 1
        bond_of[u] = (v, ix)
        bond_of[v] = (u, ix)
    for node in sorted(net.nodes):
        if degree[node] == 1:
            neighbour, ix = bond_of[node]
            if ix.dim < chi:
                return node, neighbour, ix
    return None


def compactify(net: Network, chi) -> Network:
    """
    Contract leaf tensors with a bond smaller than ``chi`` into their
    neighbours, lowest leaf id first, until none is left.

    Args:
        net (Network): a loop-free network
        chi (int): bond dimension threshold

    Returns:
        Network: network representing the same state with fewer nodes
    """
    if not nx.is_tree(net.graph):
        raise NotATree("compactification needs a loop-free network")

    while True:
        found = _contractible_leaf(net, chi)
        if found is None:
            return net
        leaf, neighbour, ix = found
        merged = _canonical_order(contract(net.nodes[neighbour], net.nodes[leaf]))

        nodes = {node: t for node, t in net.nodes.items() if node != leaf}
        nodes[neighbour] = merged
        bonds = tuple(b for b in net.bonds if b[2].id != ix.id)
        site_map = {
            site: ((neighbour, phys) if node == leaf else (node, phys))
            for site, (node, phys) in net.site_map.items()
        }
        logger.debug("absorbed leaf %d into %d over a bond of dim %d", leaf, neighbour, ix.dim)
        net = Network(nodes, bonds, site_map, net.p, net.spec)


def compaction_summary(before: Network, after: Network):
    """
    Bookkeeping for reports.

    Returns:
        tuple: (nodes_removed, total_elems_before, total_elems_after)
    """
    return (
        len(before.nodes) - len(after.nodes),
        sizes(before)[1],
        sizes(after)[1],
    )
