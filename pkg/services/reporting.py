"""
Evaluation reports comparing corridor values with the exact Dubins oracle.
"""
import logging
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from services.corridor import Corridor, query_value
from services.oracle import dubins_distance
from utils.errors import ArgumentError

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["state", "v_hat", "v_oracle", "ratio", "conservative"]
CONSERVATIVE_SLACK = 1e-6

# Start states of the reference comparison, all driven to the origin
REFERENCE_STATES = (
    (-10.0, 0.0, 0.0),
    (-12.0, 5.0, 2.0),
    (1.0, 1.0, 6.0),
    (10.0, -4.0, -3.0),
)


def _format_state(state) -> str:
    return "(" + ", ".join(f"{v:g}" for v in state) + ")"


def evaluation_table(c: Corridor, states: Sequence, turn_radius: float = 1.0,
                     k: int = 4) -> pd.DataFrame:
    """
    Corridor estimate next to the oracle value for each state.

    Args:
        c: Corridor
        states: States to evaluate
        turn_radius: Minimum turn radius of the car
        k: Neighbours in the value query

    Returns:
        DataFrame with columns state, v_hat, v_oracle, ratio, conservative
    """
    if not len(states):
        raise ArgumentError("no states to evaluate")
    rows = []
    for state in states:
        v_hat = query_value(c, state, k)
        v_oracle, _ = dubins_distance(state, c.target, turn_radius)
        rows.append({
            "state": _format_state(state),
            "v_hat": v_hat,
            "v_oracle": v_oracle,
            "ratio": v_hat / v_oracle if v_oracle > 0.0 else np.nan,
            "conservative": bool(v_hat >= v_oracle - CONSERVATIVE_SLACK),
        })
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_report(table: pd.DataFrame, path: str):
    table.to_csv(path, index=False, float_format="%.6g")
    logger.info(f"Wrote evaluation report for {len(table)} states to {path}")


def conservatism_check(c: Corridor, turn_radius: float = 1.0) -> Dict:
    """
    Compare every corridor value with the oracle.

    Returns:
        Dict with the point count, the number of violations and the worst gap
        (oracle minus stored value; positive means a violation)
    """
    gaps = np.array([dubins_distance(state, c.target, turn_radius)[0] - value
                     for state, value in zip(c.states, c.values)])
    violations = int(np.sum(gaps > CONSERVATIVE_SLACK))
    worst = float(gaps.max()) if len(gaps) else 0.0
    if violations:
        logger.warning(f"{violations} of {len(gaps)} corridor values fall below the oracle "
                       f"(worst gap {worst:.3g} s)")
    return {"points": len(gaps), "violations": violations, "worst_gap": worst}


def rollout_rows(starts: Sequence, results: List, turn_radius: float = 1.0,
                 target=(0.0, 0.0, 0.0)) -> pd.DataFrame:
    """One row per rollout with outcome, elapsed time and oracle ratio."""
    rows = []
    for start, result in zip(starts, results):
        oracle_time, _ = dubins_distance(start, target, turn_radius)
        rows.append({"state": _format_state(start), "outcome": result.outcome,
                     "elapsed": result.elapsed, "oracle_time": oracle_time,
                     "ratio": result.elapsed / oracle_time if oracle_time > 0.0 else np.nan})
    return pd.DataFrame(rows)
