"""
Contraction of networks, fidelity / loss evaluation against a target state and
exact gradients through environment tensors.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np

from config.app_config import ENGINE_CONFIG, LOSS_KINDS, SURROGATE_CONFIG
from modules.errors import (
    DegenerateState,
    DimensionMismatch,
    Disconnected,
    InvalidSpec,
    NoSuchNode,
    TargetTooLarge,
)
from modules.geometry import Network
from modules.tensor_core import VIRTUAL_ID_OFFSET, Index, Tensor, contract, inner, permute

logger = logging.getLogger(__name__)

# extra leg used to push the target and the model state through one environment pass
_BATCH_INDEX = Index(id=VIRTUAL_ID_OFFSET - 1, dim=2)


@dataclass(frozen=True)
class ContractionPlan:
    """
    Pairwise contraction order. Each step ``(keep, absorb)`` contracts the
    tensor currently held by ``absorb`` into ``keep``.

    Attributes:
        steps (tuple): ordered (keep, absorb) node id pairs
        peak_elems (int): largest tensor alive during execution
        flops (int): sum over steps of the product of all involved dimensions
    """
    steps: tuple
    peak_elems: int
    flops: int


@dataclass
class LossReport:
    fidelity: float
    infidelity: float
    loss: float
    grads: Optional[dict] = None


def _elems(dims):
    return int(math.prod(dims.values()))


def _merge(a, b):
    """Index dims of the contraction of two tensors given as {id: dim}."""
    return {i: d for i, d in list(a.items()) + list(b.items()) if (i in a) != (i in b)}


def _step_flops(a, b):
    union = dict(a)
    union.update(b)
    return _elems(union)


def _tree_steps(graph):
    root = max(graph.nodes)
    g = graph.copy()
    steps = []
    while g.number_of_nodes() > 1:
        leaf = min(node for node in g.nodes if g.degree(node) == 1 and node != root)
        keep = next(iter(g.neighbors(leaf)))
        steps.append((keep, leaf))
        g.remove_node(leaf)
    return steps


def _greedy_steps(index_sets):
    current = {node: dict(dims) for node, dims in index_sets.items()}
    steps = []
    while len(current) > 1:
        ids = sorted(current)
        best = None
        for pos, u in enumerate(ids):
            for v in ids[pos + 1:]:
                if not current[u].keys() & current[v].keys():
                    continue
                key = (_elems(_merge(current[u], current[v])), u, v)
                if best is None or key < best:
                    best = key
        if best is None:
            # nothing shares an index: outer product of the two smallest
            small = sorted(ids, key=lambda node: (_elems(current[node]), node))[:2]
            best = (0, min(small), max(small))
        _, u, v = best
        steps.append((u, v))
        current[u] = _merge(current[u], current.pop(v))
    return steps


def _cost(index_sets, steps):
    current = {node: dict(dims) for node, dims in index_sets.items()}
    peak = max(_elems(d) for d in current.values())
    flops = 0
    for keep, absorb in steps:
        flops += _step_flops(current[keep], current[absorb])
        current[keep] = _merge(current[keep], current.pop(absorb))
        peak = max(peak, _elems(current[keep]))
    return peak, flops


def plan(net: Network) -> ContractionPlan:
    """
    Deterministic contraction order for a network.

    Trees are eliminated leaf first (lowest id first) towards the highest node
    id; loopy networks use a greedy pairwise choice minimising the size of the
    intermediate tensor, ties broken by the smallest node id pair.
    """
    graph = net.graph
    if not nx.is_connected(graph):
        raise Disconnected("cannot plan the contraction of a disconnected network")
    index_sets = {node: {ix.id: ix.dim for ix in t.indices} for node, t in net.nodes.items()}
    if nx.is_tree(graph):
        steps = _tree_steps(graph)
    else:
        steps = _greedy_steps(index_sets)
    peak, flops = _cost(index_sets, steps)
    return ContractionPlan(tuple(steps), peak, flops)


def check_memory(n, p, memory_ceiling=None):
    if memory_ceiling is None:
        memory_ceiling = SURROGATE_CONFIG["memory_ceiling"]
    if p ** n > memory_ceiling:
        raise TargetTooLarge(f"dense state of {p}^{n} entries exceeds the ceiling of {memory_ceiling}")


def to_dense(net: Network, contraction_plan: ContractionPlan = None, memory_ceiling=None) -> Tensor:
    """
    Contract the whole network.

    Returns:
        Tensor: the state, indices ordered by site
    """
    check_memory(net.n, net.p, memory_ceiling)
    if contraction_plan is None:
        contraction_plan = plan(net)
    tensors = dict(net.nodes)
    for keep, absorb in contraction_plan.steps:
        tensors[keep] = contract(tensors[keep], tensors.pop(absorb))
    if len(tensors) != 1:
        raise InvalidSpec(f"contraction plan left {len(tensors)} tensors")
    (result,) = tensors.values()
    return permute(result, [ix.id for ix in net.physical_indices])


def loss_value(fidelity, loss=None, eps=None):
    """
    Loss and its derivative with respect to F.

    Returns:
        tuple: (loss, dloss/dF)
    """
    loss = loss or ENGINE_CONFIG["loss"]
    if loss == "log":
        eps = ENGINE_CONFIG["eps_fidelity"] if eps is None else eps
        clamped = max(fidelity, eps)
        value = (math.log(clamped) - 1.0) ** 2
        slope = 2.0 * (math.log(clamped) - 1.0) / clamped if fidelity > eps else 0.0
        return value, slope
    if loss == "squared_infidelity":
        return (1.0 - fidelity) ** 2, -2.0 * (1.0 - fidelity)
    raise InvalidSpec(f"unknown loss {loss!r}, expected one of {LOSS_KINDS}")


def _check_pair(target, net):
    state = target.state
    if set(state.ids) != {ix.id for ix in net.physical_indices}:
        raise DimensionMismatch(
            f"target has {len(state.ids)} sites, network has {net.n}")
    for ix in net.physical_indices:
        if state.index(ix.id).dim != ix.dim:
            raise DimensionMismatch(f"site {ix.site}: target dim differs from network dim {ix.dim}")


def _overlap(target, net):
    _check_pair(target, net)
    psi = to_dense(net)
    nu = psi.norm()
    if nu == 0.0:
        raise DegenerateState("network state has zero norm")
    return psi, nu, inner(target.state, psi) / nu


def evaluate(target, net: Network, loss=None) -> LossReport:
    """
    Fidelity, infidelity and loss of ``net`` against ``target`` (no gradients).

    F is the signed overlap with the normalized network state.
    """
    _, _, fidelity = _overlap(target, net)
    value, _ = loss_value(fidelity, loss)
    return LossReport(fidelity, 1.0 - fidelity, value)


def _environment(vec: Tensor, net: Network, node) -> Tensor:
    if node not in net.nodes:
        raise NoSuchNode(f"network has no node {node}")
    distance = nx.single_source_shortest_path_length(net.graph, node)
    others = sorted((m for m in net.nodes if m != node), key=lambda m: (-distance.get(m, 0), m))
    acc = vec
    for other in others:
        acc = contract(acc, net.nodes[other])
    return acc


def environment(vec: Tensor, net: Network, node) -> Tensor:
    """
    Contraction of ``vec`` with every node tensor except ``node``.

    The result has exactly the indices of ``node`` so that
    inner(environment, T_node) == inner(vec, to_dense(net)).
    """
    if set(vec.ids) != {ix.id for ix in net.physical_indices}:
        raise DimensionMismatch("vector indices must be the physical indices of the network")
    env = _environment(vec, net, node)
    return permute(env, net.nodes[node].ids)


def loss_and_grad(target, net: Network, loss=None) -> LossReport:
    """
    Loss and its exact gradient with respect to every node tensor.

    With s the target, psi the network state, nu = |psi| and F = <s|psi>/nu:
        dF/dT_i = E_i(s)/nu - F/nu^2 * E_i(psi)
        dL/dT_i = dL/dF * dF/dT_i
    where E_i is the environment of node i.
    """
    psi, nu, fidelity = _overlap(target, net)
    value, slope = loss_value(fidelity, loss)

    grads = {}
    if slope == 0.0:
        for node, t in net.nodes.items():
            grads[node] = Tensor(t.indices, np.zeros(t.shape))
        return LossReport(fidelity, 1.0 - fidelity, value, grads)

    phys_ids = [ix.id for ix in net.physical_indices]
    s = permute(target.state, phys_ids)
    both = Tensor((_BATCH_INDEX,) + psi.indices, np.stack([s.data, psi.data]))
    for node, t in net.nodes.items():
        env = permute(_environment(both, net, node), (_BATCH_INDEX.id,) + t.ids)
        dfid = env.data[0] / nu - (fidelity / nu ** 2) * env.data[1]
        grads[node] = Tensor(t.indices, slope * dfid)
    return LossReport(fidelity, 1.0 - fidelity, value, grads)
