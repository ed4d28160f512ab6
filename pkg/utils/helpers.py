import os
import json
import logging

import numpy as np

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(verbose=False):
    """
    Configure the root logger for command-line use.

    Args:
        verbose (bool): Log at DEBUG instead of INFO
    """
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)


def make_rng(seed):
    """
    Create the seeded random stream for a run.

    Args:
        seed (int): Run seed

    Returns:
        numpy.random.Generator: PCG64 generator
    """
    return np.random.Generator(np.random.PCG64(seed))


def split_streams(rng):
    """
    Independent (data, training) child streams of a run stream.

    Warm-up data and network training draw from separate children, so the
    training draws do not depend on whether the data was generated in the
    same process or read back from disk.
    """
    data, training = rng.spawn(2)
    return data, training


def ensure_directory(path):
    """Create ``path`` if missing and return it."""
    os.makedirs(path, exist_ok=True)
    return path


def write_json(path, payload):
    """
    Write JSON with sorted keys so identical payloads give identical bytes.

    Args:
        path (str): Destination file
        payload (dict): JSON-serializable data
    """
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.debug(f"Wrote {path}")


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def format_seconds(seconds):
    """
    Format a duration for log lines.

    Args:
        seconds (float): Duration in seconds

    Returns:
        str: e.g. "850 ms", "12.3 s", "4 min 05 s"
    """
    if seconds < 1.0:
        return f"{seconds * 1000:.0f} ms"
    if seconds < 60.0:
        return f"{seconds:.1f} s"
    minutes, rest = divmod(int(round(seconds)), 60)
    return f"{minutes} min {rest:02d} s"
