import logging
import sys
import zlib

import numpy as np

from config.app_config import HARNESS_CONFIG

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _seed_part(part):
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_seed(*parts):
    """
    Derive a seed from a tuple of ints / strings / bools.

    Args:
        *parts: values identifying the experiment, cell, trial or node

    Returns:
        int: deterministic non-negative 63-bit seed (fits an int64 column),
            independent of platform and Python hashing
    """
    entropy = [_seed_part(p) for p in parts]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return ((int(state[0]) << 32) | int(state[1])) >> 1


def make_rng(*parts):
    """Generator for the seed derived from ``parts``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [_seed_part(p) for p in parts])))


def configure_logging(verbosity=0):
    """
    Install a single stderr handler.

    Args:
        verbosity (int): 0 -> WARNING, 1 -> INFO, 2+ -> DEBUG
    """
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def table_to_csv(dataframe, path=None):
    """
    Write a DataFrame as CSV with the fixed float format and LF line endings.

    Args:
        dataframe (pd.DataFrame): table to write
        path (str | None): output file; when None the CSV text is returned

    Returns:
        str | None: CSV text when ``path`` is None
    """
    csv = dataframe.to_csv(
        index=False,
        float_format=HARNESS_CONFIG["float_format"],
        lineterminator="\n",
    )
    if path is None:
        return csv
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(csv)
    return None


def format_infidelity(value):
    """Scientific notation with three significant digits, 'n/a' for NaN."""
    if value is None or not np.isfinite(value):
        return "n/a"
    return f"{value:.3e}"


def format_percent(value):
    """
    Format a fraction in [0, 1] as a percentage.

    Args:
        value (float): the fraction

    Returns:
        str: formatted percentage string
    """
    return f"{100.0 * value:.1f}%"
