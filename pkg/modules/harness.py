"""
Experiment configuration and parallel sweeps over (geometry x chi x trial).
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.app_config import HARNESS_CONFIG, LOSS_KINDS, SURROGATE_CONFIG, SWEEP_COLUMNS
from modules.errors import ConfigError, TNGeoError
from modules.geometry import Family, GeometrySpec
from modules.optimizer import OptimConfig, run_trial
from modules.surrogate import generate_full_random, generate_hidden_tn
from modules.utils import derive_seed, table_to_csv

logger = logging.getLogger(__name__)

COLUMNS = list(SWEEP_COLUMNS)


@dataclass(frozen=True)
class GeometryEntry:
    """One geometry of a sweep; chi is supplied per cell."""
    family: str
    compact: bool = False
    k: int = 1
    rows: Optional[int] = None
    cols: Optional[int] = None

    def spec(self, n, chi, p=2):
        return GeometrySpec(self.family, n, chi, p=p, k=self.k, rows=self.rows, cols=self.cols)

    @classmethod
    def from_dict(cls, data):
        if "family" not in data:
            raise ConfigError(f"geometry entry {data!r} has no family")
        unknown = set(data) - {"family", "compact", "k", "rows", "cols"}
        if unknown:
            raise ConfigError(f"geometry entry has unknown keys {sorted(unknown)}")
        return cls(
            family=str(data["family"]).lower(),
            compact=bool(data.get("compact", False)),
            k=int(data.get("k", 1)),
            rows=data.get("rows"),
            cols=data.get("cols"),
        )


@dataclass(frozen=True)
class TargetConfig:
    scenario: str = "random"
    seed: int = 0
    geometry: Optional[dict] = None

    @classmethod
    def from_dict(cls, data):
        scenario = str(data.get("scenario", "random")).lower()
        if scenario not in ("random", "hidden"):
            raise ConfigError(f"target scenario must be 'random' or 'hidden', got {scenario!r}")
        if scenario == "hidden" and not data.get("geometry"):
            raise ConfigError("a hidden target needs a 'geometry' block")
        return cls(scenario, int(data.get("seed", 0)), data.get("geometry"))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    chi_values: tuple
    geometries: tuple
    p: int = 2
    target: TargetConfig = field(default_factory=TargetConfig)
    trials_per_cell: int = HARNESS_CONFIG["trials_per_cell"]
    success_threshold: float = HARNESS_CONFIG["success_threshold"]
    base_seed: int = 0
    optim: OptimConfig = field(default_factory=OptimConfig)
    workers: int = HARNESS_CONFIG["workers"]
    loss: str = "log"
    record_timing: bool = HARNESS_CONFIG["record_timing"]
    memory_ceiling: int = SURROGATE_CONFIG["memory_ceiling"]

    def target_spec(self):
        if self.target.scenario != "hidden":
            return None
        return GeometrySpec.from_dict(self.target.geometry, n=self.n, p=self.p)


def config_from_dict(data):
    """
    Build an ExperimentConfig from the parsed JSON document.

    Raises:
        ConfigError: missing or malformed fields
    """
    try:
        return ExperimentConfig(
            n=int(data["n"]),
            p=int(data.get("p", 2)),
            target=TargetConfig.from_dict(data.get("target", {})),
            geometries=tuple(GeometryEntry.from_dict(g) for g in data["geometries"]),
            chi_values=tuple(int(c) for c in data["chi_values"]),
            trials_per_cell=int(data.get("trials_per_cell", HARNESS_CONFIG["trials_per_cell"])),
            success_threshold=float(data.get("success_threshold", HARNESS_CONFIG["success_threshold"])),
            base_seed=int(data.get("base_seed", 0)),
            optim=OptimConfig.from_dict(data.get("optim", {})),
            workers=int(data.get("workers", HARNESS_CONFIG["workers"])),
            loss=str(data.get("loss", "log")),
            record_timing=bool(data.get("record_timing", HARNESS_CONFIG["record_timing"])),
            memory_ceiling=int(data.get("memory_ceiling", SURROGATE_CONFIG["memory_ceiling"])),
        )
    except KeyError as e:
        raise ConfigError(f"config is missing field {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"malformed config: {e}") from None


def validate_config(cfg: ExperimentConfig):
    """
    Validate an experiment before running it.

    Args:
        cfg (ExperimentConfig): the experiment

    Returns:
        tuple: (bool, str) - (is_valid, message)
    """
    if cfg.n < 1 or cfg.p < 1:
        return False, "n and p must be positive."
    if cfg.p ** cfg.n > cfg.memory_ceiling:
        return False, f"a dense state of {cfg.p}^{cfg.n} entries exceeds the memory ceiling."
    if cfg.trials_per_cell < 1:
        return False, "trials_per_cell must be at least 1."
    if cfg.workers < 1:
        return False, "workers must be at least 1."
    if not cfg.chi_values:
        return False, "chi_values is empty."
    if any(c < 1 for c in cfg.chi_values):
        return False, "chi values must be positive."
    if list(cfg.chi_values) != sorted(cfg.chi_values):
        return False, "chi_values must be sorted ascending."
    if not cfg.geometries:
        return False, "no geometries to train."
    if cfg.loss not in LOSS_KINDS:
        return False, f"loss must be one of {', '.join(LOSS_KINDS)}."

    labels = []
    for entry in cfg.geometries:
        try:
            spec = entry.spec(cfg.n, cfg.chi_values[0], cfg.p)
        except TNGeoError as e:
            return False, f"invalid geometry {entry.family!r}: {e}"
        if entry.compact and spec.family is Family.PEPS:
            return False, "PEPS networks have loops and cannot be compactified."
        labels.append((spec.label, entry.compact))
    if len(set(labels)) != len(labels):
        return False, "a geometry appears twice with the same compact flag."

    try:
        cfg.target_spec()
    except TNGeoError as e:
        return False, f"invalid target geometry: {e}"

    return True, "Config validation successful."


def load_config(path):
    """Read and validate a JSON experiment file."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    cfg = config_from_dict(data)
    is_valid, message = validate_config(cfg)
    if not is_valid:
        raise ConfigError(message)
    return cfg


def make_target(cfg: ExperimentConfig):
    """The single target shared by every trial of the sweep."""
    if cfg.target.scenario == "hidden":
        return generate_hidden_tn(cfg.target_spec(), cfg.target.seed, cfg.memory_ceiling)
    return generate_full_random(cfg.n, cfg.p, cfg.target.seed, cfg.memory_ceiling)


def resolve_workers(cfg: ExperimentConfig):
    env_var = HARNESS_CONFIG["workers_env_var"]
    raw = os.environ.get(env_var)
    if raw is None or raw == "":
        return cfg.workers
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{env_var}={raw!r} is not an integer") from None
    if workers < 1:
        raise ConfigError(f"{env_var} must be at least 1")
    logger.warning("%s overrides workers: %d", env_var, workers)
    return workers


@dataclass
class SweepTable:
    """Sweep rows (fixed columns) plus the per-row training histories."""
    rows: pd.DataFrame
    histories: list

    def to_csv(self, path=None):
        return table_to_csv(self.rows, path)

    def to_jsonl(self, path=None):
        lines = []
        for record, history in zip(self.rows.to_dict(orient="records"), self.histories):
            record = {key: _native(value) for key, value in record.items()}
            record["history"] = [[float(a), float(b)] for a, b in history]
            lines.append(json.dumps(record))
        text = "".join(line + "\n" for line in lines)
        if path is None:
            return text
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        return None

    def write(self, prefix):
        self.to_csv(f"{prefix}.csv")
        self.to_jsonl(f"{prefix}.jsonl")
        logger.info("wrote %d rows to %s.csv and %s.jsonl", len(self.rows), prefix, prefix)


def _native(value):
    if isinstance(value, np.generic):
        return value.item()
    return value


# Target shared by the trials of a worker process
_WORKER_TARGET = None


def _init_worker(target):
    global _WORKER_TARGET
    _WORKER_TARGET = target


def _run_cell(task):
    spec, compact, trial, seed, optim, loss, record_timing = task
    row = {
        "geometry": spec.label,
        "compact": compact,
        "n": spec.n,
        "chi": spec.chi,
        "trial": trial,
        "seed": seed,
    }
    try:
        result = run_trial(_WORKER_TARGET, spec, compact, seed, optim, loss)
    except Exception as e:
        logger.warning("cell %s chi=%d trial %d failed: %s", spec.label, spec.chi, trial, e)
        row.update({
            "final_infidelity": math.nan,
            "iterations": math.nan,
            "wall_ms": 0.0,
            "largest_tensor": math.nan,
            "total_elems": math.nan,
            "diameter": math.nan,
            "converged_reason": f"Error:{type(e).__name__}",
            "peak_elems": math.nan,
            "contraction_flops": math.nan,
        })
        return row, []
    row.update({
        "final_infidelity": result.final_infidelity,
        "iterations": result.iterations,
        "wall_ms": result.wall_ms if record_timing else 0.0,
        "largest_tensor": result.largest_tensor,
        "total_elems": result.total_elems,
        "diameter": result.diameter,
        "converged_reason": result.converged.value,
        "peak_elems": result.peak_elems,
        "contraction_flops": result.contraction_flops,
    })
    return row, result.history


def cell_tasks(cfg: ExperimentConfig):
    """Tasks in canonical order: geometry, then chi, then trial."""
    tasks = []
    for entry in cfg.geometries:
        for chi in cfg.chi_values:
            spec = entry.spec(cfg.n, chi, cfg.p)
            for trial in range(cfg.trials_per_cell):
                seed = derive_seed(cfg.base_seed, spec.label, entry.compact, chi, trial)
                tasks.append((spec, entry.compact, trial, seed, cfg.optim, cfg.loss, cfg.record_timing))
    seeds = [task[3] for task in tasks]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("derived trial seeds collide; change base_seed")
    return tasks


def sweep(cfg: ExperimentConfig, progress=False) -> SweepTable:
    """
    Run every (geometry, compact, chi, trial) cell against one shared target.

    Rows come back in canonical cell order whatever the worker count, and a
    failing cell is recorded in its row instead of aborting the sweep.

    Args:
        cfg (ExperimentConfig): the experiment
        progress (bool): show a progress bar on stderr

    Returns:
        SweepTable: one row per trial
    """
    is_valid, message = validate_config(cfg)
    if not is_valid:
        raise ConfigError(message)
    target = make_target(cfg)
    tasks = cell_tasks(cfg)
    workers = min(resolve_workers(cfg), len(tasks))
    logger.info("sweep of %d trials on %d worker(s)", len(tasks), workers)

    outputs = []
    with tqdm(total=len(tasks), disable=not progress, desc="sweep") as bar:
        if workers == 1:
            _init_worker(target)
            for task in tasks:
                outputs.append(_run_cell(task))
                bar.update()
        else:
            with Pool(workers, initializer=_init_worker, initargs=(target,)) as pool:
                for output in pool.imap(_run_cell, tasks):
                    outputs.append(output)
                    bar.update()

    rows = pd.DataFrame([row for row, _ in outputs], columns=COLUMNS)
    return SweepTable(rows, [history for _, history in outputs])
