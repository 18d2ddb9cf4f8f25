"""
Dense tensors with labeled indices and the contraction / linear algebra
primitives used by every other module.
"""
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from config.app_config import TENSOR_CONFIG
from modules.errors import DimensionMismatch, InvalidBipartition, InvalidPermutation

# Physical indices use their site number as id; virtual ids start here so the
# two ranges never collide.
VIRTUAL_ID_OFFSET = 1 << 32


@dataclass(frozen=True)
class Index:
    """
    One tensor leg.

    Attributes:
        id (int): globally unique label
        dim (int): dimension, at least 1
        site (int | None): physical site number, None for a virtual bond
    """
    id: int
    dim: int
    site: Optional[int] = None

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"index {self.id} has dimension {self.dim} < 1")

    @property
    def is_physical(self):
        return self.site is not None


def physical_index(site, p):
    return Index(id=site, dim=p, site=site)


def virtual_index(bond_id, dim):
    return Index(id=VIRTUAL_ID_OFFSET + bond_id, dim=dim)


@dataclass(frozen=True, eq=False)
class Tensor:
    """
    Immutable dense tensor. ``data`` is a float64 C-ordered array whose axes
    follow ``indices``.
    """
    indices: tuple
    data: np.ndarray

    def __post_init__(self):
        indices = tuple(self.indices)
        ids = [ix.id for ix in indices]
        if len(set(ids)) != len(ids):
            raise DimensionMismatch(f"repeated index ids on one tensor: {ids}")
        data = np.array(self.data, dtype=np.float64, order="C")
        shape = tuple(ix.dim for ix in indices)
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise DimensionMismatch(
                f"data has {data.size} entries, indices require shape {shape}"
            )
        data = data.reshape(shape)
        data.setflags(write=False)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)

    @property
    def ids(self):
        return tuple(ix.id for ix in self.indices)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return int(self.data.size)

    def index(self, index_id):
        for ix in self.indices:
            if ix.id == index_id:
                return ix
        raise KeyError(index_id)

    def scaled(self, factor):
        return Tensor(self.indices, self.data * factor)

    def norm(self):
        return float(np.linalg.norm(self.data.ravel()))


def contract(a: Tensor, b: Tensor) -> Tensor:
    """
    Sum over every index id shared by ``a`` and ``b``.

    The result carries the free indices of ``a`` (in order) followed by the
    free indices of ``b``. Sharing no ids gives the outer product.
    """
    b_pos = {ix.id: pos for pos, ix in enumerate(b.indices)}
    axes_a, axes_b = [], []
    for pos, ix in enumerate(a.indices):
        if ix.id in b_pos:
            other = b.indices[b_pos[ix.id]]
            if other.dim != ix.dim:
                raise DimensionMismatch(
                    f"index {ix.id} has dim {ix.dim} on one tensor and {other.dim} on the other"
                )
            axes_a.append(pos)
            axes_b.append(b_pos[ix.id])

    shared = set(axes_a)
    free_a = [ix for pos, ix in enumerate(a.indices) if pos not in shared]
    shared_b = set(axes_b)
    free_b = [ix for pos, ix in enumerate(b.indices) if pos not in shared_b]

    data = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    return Tensor(tuple(free_a + free_b), data)


def permute(t: Tensor, new_order: Sequence[int]) -> Tensor:
    """
    Re-lay the data of ``t`` so its axes follow the index ids in ``new_order``.
    """
    new_order = list(new_order)
    position = {ix.id: pos for pos, ix in enumerate(t.indices)}
    if len(new_order) != len(position) or set(new_order) != set(position):
        raise InvalidPermutation(f"{new_order} is not a permutation of {list(position)}")
    axes = [position[i] for i in new_order]
    if axes == list(range(len(axes))):
        return t
    data = np.ascontiguousarray(np.transpose(t.data, axes))
    return Tensor(tuple(t.indices[a] for a in axes), data)


def inner(a: Tensor, b: Tensor) -> float:
    """Full contraction of two tensors carrying the same index ids."""
    if set(a.ids) != set(b.ids):
        raise DimensionMismatch(f"index sets differ: {sorted(a.ids)} vs {sorted(b.ids)}")
    for ix in a.indices:
        if b.index(ix.id).dim != ix.dim:
            raise DimensionMismatch(f"index {ix.id} dims differ")
    b_aligned = permute(b, a.ids)
    return float(np.dot(a.data.ravel(), b_aligned.data.ravel()))


def random_gaussian(shape: Iterable[Index], rng: np.random.Generator) -> Tensor:
    """I.i.d. standard normal entries drawn from ``rng``."""
    indices = tuple(shape)
    dims = tuple(ix.dim for ix in indices)
    return Tensor(indices, rng.standard_normal(dims))


def matricize(t: Tensor, left_ids):
    """Return the (left x right) matrix of ``t`` for the bipartition ``left_ids``."""
    left_ids = set(left_ids)
    ids = set(t.ids)
    if not left_ids or not left_ids < ids:
        raise InvalidBipartition(
            f"left ids {sorted(left_ids)} must be a nonempty proper subset of {sorted(ids)}"
        )
    left = [i for i in t.ids if i in left_ids]
    right = [i for i in t.ids if i not in left_ids]
    aligned = permute(t, left + right)
    rows = int(np.prod([aligned.index(i).dim for i in left], dtype=np.int64))
    return aligned.data.reshape(rows, -1)


def singular_values(t: Tensor, left_ids):
    """Singular values (descending) across the ``left_ids`` bipartition."""
    return np.linalg.svd(matricize(t, left_ids), compute_uv=False)


def numerical_rank(t: Tensor, left_ids, tol: float = None) -> int:
    """
    Schmidt rank across a bipartition: the number of singular values above
    ``tol`` times the largest one.
    """
    if tol is None:
        tol = TENSOR_CONFIG["rank_tol"]
    sigma = singular_values(t, left_ids)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > tol * sigma[0]))
