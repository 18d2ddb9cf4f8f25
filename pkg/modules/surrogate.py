"""
Target states for training: fully random dense states, or states hidden inside
a random surrogate tensor network of controlled bond dimension.
"""
import json
import logging
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.app_config import SURROGATE_CONFIG
from modules.engine import check_memory, to_dense
from modules.errors import TargetFormatError
from modules.geometry import GeometrySpec, build, schmidt_bound
from modules.tensor_core import Tensor, physical_index, random_gaussian
from modules.utils import make_rng

logger = logging.getLogger(__name__)

FULL_RANDOM = "FullRandom"
HIDDEN_TN = "HiddenTN"

# magic, version, n, p, 6 bytes of padding
_HEADER = struct.Struct("<4sHHH6x")


@dataclass(frozen=True, eq=False)
class TargetState:
    """
    Normalized dense target plus where it came from.

    Attributes:
        state (Tensor): n physical indices, unit norm
        scenario (str): FullRandom or HiddenTN
        seed (int): generation seed
        chi_target (int): bond dimension of the hidden generator (chi_S for
            full random targets)
        spec (GeometrySpec | None): hidden generator geometry
    """
    state: Tensor
    scenario: str
    seed: int
    chi_target: int
    spec: Optional[GeometrySpec] = None

    @property
    def n(self):
        return len(self.state.indices)

    @property
    def p(self):
        return self.state.indices[0].dim

    def provenance(self):
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "chi_target": self.chi_target,
            "n": self.n,
            "p": self.p,
            "geometry": self.spec.to_dict() if self.spec is not None else None,
        }


def _normalized(tensor):
    return tensor.scaled(1.0 / tensor.norm())


def generate_full_random(n, p=2, seed=0, memory_ceiling=None) -> TargetState:
    """
    Gaussian dense state of p^n entries, normalized.

    Args:
        n (int): number of sites
        p (int): physical dimension
        seed (int): generation seed

    Returns:
        TargetState: scenario FullRandom
    """
    check_memory(n, p, memory_ceiling)
    phys = [physical_index(s, p) for s in range(n)]
    state = _normalized(random_gaussian(phys, make_rng(seed, "target")))
    logger.info("generated full random target n=%d p=%d seed=%s", n, p, seed)
    return TargetState(state, FULL_RANDOM, seed, schmidt_bound(n, p))


def generate_hidden_tn(spec: GeometrySpec, seed=0, memory_ceiling=None) -> TargetState:
    """
    Build a random network of ``spec`` and contract it into a single dense,
    normalized tensor that hides its origin.

    Args:
        spec (GeometrySpec): surrogate geometry; ``spec.chi`` is chi_target
        seed (int): generation seed

    Returns:
        TargetState: scenario HiddenTN
    """
    check_memory(spec.n, spec.p, memory_ceiling)
    net = build(spec, seed)
    state = _normalized(to_dense(net, memory_ceiling=memory_ceiling))
    logger.info("generated hidden %s target n=%d chi=%d seed=%s", spec.label, spec.n, spec.chi, seed)
    return TargetState(state, HIDDEN_TN, seed, spec.chi, spec)


def save_target(target: TargetState, path):
    """
    Write the flat binary target file and its JSON provenance sidecar
    (``<path>.json``).
    """
    header = _HEADER.pack(SURROGATE_CONFIG["magic"], SURROGATE_CONFIG["format_version"], target.n, target.p)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(target.state.data, dtype="<f8").tobytes())
    with open(f"{path}.json", "w", encoding="utf-8") as f:
        json.dump(target.provenance(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("wrote target to %s", path)


def load_target(path) -> TargetState:
    """Read a target written by ``save_target``."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise TargetFormatError(f"{path}: file shorter than the header")
    magic, version, n, p = _HEADER.unpack_from(raw)
    if magic != SURROGATE_CONFIG["magic"]:
        raise TargetFormatError(f"{path}: bad magic {magic!r}")
    if version != SURROGATE_CONFIG["format_version"]:
        raise TargetFormatError(f"{path}: unsupported version {version}")
    payload = len(raw) - _HEADER.size
    if payload != 8 * p ** n:
        raise TargetFormatError(f"{path}: expected {p ** n} amplitudes, found {payload / 8:g}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)

    try:
        with open(f"{path}.json", encoding="utf-8") as f:
            provenance = json.load(f)
    except FileNotFoundError:
        provenance = {}
    except json.JSONDecodeError as e:
        raise TargetFormatError(f"{path}.json: {e}") from None

    spec = provenance.get("geometry")
    spec = GeometrySpec.from_dict(spec) if spec else None
    state = Tensor(tuple(physical_index(s, p) for s in range(n)), data.astype(np.float64))
    return TargetState(
        state,
        provenance.get("scenario", FULL_RANDOM),
        provenance.get("seed", 0),
        provenance.get("chi_target", schmidt_bound(n, p)),
        spec,
    )
