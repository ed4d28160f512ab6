"""
CSV and JSON formats for trajectories, sample datasets, iteration logs and
rollout summaries.

Data files never carry timestamps, so identical inputs give identical bytes.
"""
import json
import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from dynamics.system import ControlSequence, Trajectory
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)

TRAJECTORY_FORMAT = '%.9g'


def write_trajectory_csv(trajectory: Trajectory, labels: Sequence[str], path: str):
    """Write ``t,<labels>`` rows with 9 significant digits."""
    trajectory.to_frame(labels).to_csv(path, index=False, float_format=TRAJECTORY_FORMAT)
    logger.debug(f"Wrote trajectory with {len(trajectory)} samples to {path}")


def read_trajectory_csv(path: str) -> Tuple[Trajectory, List[str]]:
    frame = pd.read_csv(path)
    if frame.columns[0] != "t":
        raise ArgumentError(f"{path}: first column must be 't'")
    labels = list(frame.columns[1:])
    return Trajectory(frame["t"].to_numpy(dtype=float), frame[labels].to_numpy(dtype=float)), labels


def samples_frame(states: np.ndarray, sequences: Sequence[ControlSequence], costs: Sequence[float],
                  labels: Sequence[str]) -> pd.DataFrame:
    """
    Tabulate samples as ``<labels>,cost,K,u1,tau1,...``.

    Rows with fewer segments than the widest leave their tail empty.
    """
    width = max((len(s) for s in sequences), default=0)
    frame = pd.DataFrame(np.atleast_2d(states).reshape(len(sequences), len(labels)), columns=list(labels))
    frame["cost"] = np.asarray(costs, dtype=float)
    frame["K"] = [len(s) for s in sequences]
    for j in range(width):
        frame[f"u{j + 1}"] = [s.primitives[j] if j < len(s) else np.nan for s in sequences]
        frame[f"tau{j + 1}"] = [s.durations[j] if j < len(s) else np.nan for s in sequences]
    return frame


def write_samples_csv(samples, labels: Sequence[str], path: str):
    """Write Sample-like objects (``state``, ``control``, ``cost``) at full precision."""
    states = np.array([s.state for s in samples]) if samples else np.zeros((0, len(labels)))
    frame = samples_frame(states, [s.control for s in samples], [s.cost for s in samples], labels)
    # pandas writes floats with repr precision when no float_format is given
    frame.to_csv(path, index=False, na_rep='')
    logger.info(f"Wrote {len(samples)} samples to {path}")


def read_samples_csv(path: str, labels: Sequence[str]) -> Tuple[np.ndarray, List[ControlSequence], np.ndarray]:
    """
    Read a sample dataset.

    Returns:
        (states, control sequences, stored costs)
    """
    frame = pd.read_csv(path)
    missing = [c for c in list(labels) + ["cost", "K"] if c not in frame.columns]
    if missing:
        raise ArgumentError(f"{path}: missing columns {missing}")
    sequences = []
    for _, row in frame.iterrows():
        k = int(row["K"])
        sequences.append(ControlSequence(tuple(float(row[f"u{j + 1}"]) for j in range(k)),
                                         tuple(float(row[f"tau{j + 1}"]) for j in range(k))))
    return frame[list(labels)].to_numpy(dtype=float), sequences, frame["cost"].to_numpy(dtype=float)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (np.floating, np.integer)):
        return _json_safe(value.item())
    return value


def write_iteration_log(path: str, records: List[Dict]):
    """Rewrite the JSON-lines iteration log from the full record list."""
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps({k: _json_safe(v) for k, v in record.items()}, sort_keys=True))
            f.write('\n')


def read_iteration_log(path: str) -> List[Dict]:
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def write_rollout_summary(path: str, outcome: str, elapsed: float, oracle_time: float):
    ratio = elapsed / oracle_time if oracle_time and oracle_time > 0.0 else None
    payload = {"outcome": outcome, "elapsed": _json_safe(float(elapsed)),
               "oracle_time": _json_safe(float(oracle_time)), "ratio": _json_safe(ratio)}
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')
    return payload
