"""
Exact minimum-time values for the Dubins car.

dubins_distance evaluates the six closed-form words (LSL, RSR, LSR, RSL, RLR,
LRL) and keeps the shortest candidate whose replay lands on the goal.
brute_force_time is an independent check: it enumerates all 27 three-segment
words over {L, S, R} on a duration grid and polishes the best grid points with
Newton's method.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from dynamics.system import ControlSequence
from utils.errors import ArgumentError, NotFoundError
from utils.geometry import wrap_angle

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")
PRIMITIVE = {"L": 1.0, "S": 0.0, "R": -1.0}
REPLAY_TOL = 1e-6


def mod2pi(theta: float) -> float:
    """Map to [0, 2*pi); values within 1e-10 of a full turn become 0."""
    r = theta - TWO_PI * math.floor(theta / TWO_PI)
    return 0.0 if TWO_PI - r < 1e-10 else r


def _lsl(a, b, d):
    sa, sb, ca, cb, cab = math.sin(a), math.sin(b), math.cos(a), math.cos(b), math.cos(a - b)
    p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb)
    if p2 < 0.0:
        return None
    tmp = math.atan2(cb - ca, d + sa - sb)
    return mod2pi(-a + tmp), math.sqrt(p2), mod2pi(b - tmp)


def _rsr(a, b, d):
    sa, sb, ca, cb, cab = math.sin(a), math.sin(b), math.cos(a), math.cos(b), math.cos(a - b)
    p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa)
    if p2 < 0.0:
        return None
    tmp = math.atan2(ca - cb, d - sa + sb)
    return mod2pi(a - tmp), math.sqrt(p2), mod2pi(-b + tmp)


def _lsr(a, b, d):
    sa, sb, ca, cb, cab = math.sin(a), math.sin(b), math.cos(a), math.cos(b), math.cos(a - b)
    p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb)
    if p2 < 0.0:
        return None
    p = math.sqrt(p2)
    tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
    return mod2pi(-a + tmp), p, mod2pi(-b + tmp)


def _rsl(a, b, d):
    sa, sb, ca, cb, cab = math.sin(a), math.sin(b), math.cos(a), math.cos(b), math.cos(a - b)
    p2 = -2.0 + d * d + 2.0 * cab - 2.0 * d * (sa + sb)
    if p2 < 0.0:
        return None
    p = math.sqrt(p2)
    tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
    return mod2pi(a - tmp), p, mod2pi(b - tmp)


def _rlr(a, b, d):
    sa, sb, ca, cb, cab = math.sin(a), math.sin(b), math.cos(a), math.cos(b), math.cos(a - b)
    tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0
    if abs(tmp) > 1.0:
        return None
    p = mod2pi(TWO_PI - math.acos(tmp))
    t = mod2pi(a - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
    return t, p, mod2pi(a - b - t + p)


def _lrl(a, b, d):
    sa, sb, ca, cb, cab = math.sin(a), math.sin(b), math.cos(a), math.cos(b), math.cos(a - b)
    tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0
    if abs(tmp) > 1.0:
        return None
    p = mod2pi(TWO_PI - math.acos(tmp))
    t = mod2pi(-a - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
    return t, p, mod2pi(b - a - t + p)


_PLANNERS = {"LSL": _lsl, "RSR": _rsr, "LSR": _lsr, "RSL": _rsl, "RLR": _rlr, "LRL": _lrl}


@dataclass(frozen=True)
class DubinsPath:
    """
    Attributes:
        word: Three letters from {L, S, R}
        segment_lengths: Normalized lengths (radians for turns, turn radii for S)
        turn_radius: Minimum turn radius
        speed: Forward speed
    """
    word: str
    segment_lengths: Tuple[float, float, float]
    turn_radius: float = 1.0
    speed: float = 1.0

    @property
    def total(self) -> float:
        """Travel time in seconds."""
        return sum(self.segment_lengths) * self.turn_radius / self.speed

    def durations(self) -> Tuple[float, ...]:
        return tuple(length * self.turn_radius / self.speed for length in self.segment_lengths)

    def to_control_sequence(self) -> ControlSequence:
        """Controls L = +1, S = 0, R = -1 held for the segment durations."""
        return ControlSequence(tuple(PRIMITIVE[c] for c in self.word), self.durations())

    def endpoint(self, start) -> np.ndarray:
        """Closed-form replay of the path from ``start``."""
        x, y, th = (float(v) for v in start)
        rho = self.turn_radius
        for letter, length in zip(self.word, self.segment_lengths):
            if letter == "S":
                x += rho * length * math.cos(th)
                y += rho * length * math.sin(th)
            elif letter == "L":
                x += rho * (math.sin(th + length) - math.sin(th))
                y += rho * (math.cos(th) - math.cos(th + length))
                th += length
            else:
                x += rho * (math.sin(th) - math.sin(th - length))
                y += rho * (math.cos(th - length) - math.cos(th))
                th -= length
        return np.array([x, y, th])


def _state_gap(a, b) -> float:
    return float(math.hypot(a[0] - b[0], a[1] - b[1]) + abs(wrap_angle(a[2] - b[2])))


def dubins_distance(start, goal, turn_radius: float = 1.0,
                    speed: float = 1.0) -> Tuple[float, DubinsPath]:
    """
    Minimum travel time between two Dubins states.

    Args:
        start: (px, py, theta)
        goal: (px, py, theta)
        turn_radius: Minimum turn radius
        speed: Forward speed

    Returns:
        (time, realizing path)
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    dx, dy = goal[0] - start[0], goal[1] - start[1]
    gap = math.hypot(dx, dy)
    if gap < 1e-12 and abs(wrap_angle(goal[2] - start[2])) < 1e-12:
        return 0.0, DubinsPath("LSL", (0.0, 0.0, 0.0), turn_radius, speed)
    phi = math.atan2(dy, dx)
    alpha = mod2pi(start[2] - phi)
    beta = mod2pi(goal[2] - phi)
    d = gap / turn_radius

    best: Optional[DubinsPath] = None
    for word in WORDS:
        lengths = _PLANNERS[word](alpha, beta, d)
        if lengths is None:
            continue
        path = DubinsPath(word, tuple(float(v) for v in lengths), turn_radius, speed)
        if _state_gap(path.endpoint(start), goal) > REPLAY_TOL:
            logger.debug(f"Discarding {word} candidate that misses the goal")
            continue
        if best is None or path.total < best.total:
            best = path
    if best is None:
        raise NotFoundError(f"no Dubins word reaches {goal.tolist()} from {start.tolist()}")
    return best.total, best


# ---------------------------------------------------------------------------
# Brute-force search

def _advance(x, y, th, u, tau, speed, omega):
    """Closed-form motion under constant control; vectorized over arrays."""
    turning = u != 0.0
    rate = omega * u
    safe = np.where(turning, rate, 1.0)
    dth = rate * tau
    nx = np.where(turning, x + speed / safe * (np.sin(th + dth) - np.sin(th)), x + speed * tau * np.cos(th))
    ny = np.where(turning, y + speed / safe * (np.cos(th) - np.cos(th + dth)), y + speed * tau * np.sin(th))
    return nx, ny, th + dth


def _walk(start, controls: np.ndarray, taus: np.ndarray, speed: float, omega: float):
    """States after each segment: list of (x, y, th) arrays, one per boundary."""
    x = np.full(len(taus), start[0])
    y = np.full(len(taus), start[1])
    th = np.full(len(taus), start[2])
    states = [(x, y, th)]
    for k in range(controls.shape[1]):
        x, y, th = _advance(x, y, th, controls[:, k], taus[:, k], speed, omega)
        states.append((x, y, th))
    return states


def _residual(states, goal) -> np.ndarray:
    x, y, th = states[-1]
    return np.stack((x - goal[0], y - goal[1], wrap_angle(th - goal[2])), axis=1)


def _jacobian(states, controls, speed, omega) -> np.ndarray:
    """d(end state)/d(tau_k): extra motion at the end of segment k, carried rigidly."""
    x_end, y_end, _ = states[-1]
    columns = []
    for k in range(controls.shape[1]):
        xk, yk, thk = states[k + 1]
        rate = omega * controls[:, k]
        columns.append(np.stack((speed * np.cos(thk) - rate * (y_end - yk),
                                 speed * np.sin(thk) + rate * (x_end - xk),
                                 rate), axis=1))
    return np.stack(columns, axis=2)


def _grid_seeds(start, goal, controls: Tuple[float, float, float], grid: float, horizon: float,
                speed: float, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """Grid over the first two durations; the third closes heading or distance."""
    axes = []
    for u in controls[:2]:
        limit = TWO_PI / omega if u != 0.0 else horizon / speed
        axes.append(np.arange(0.0, limit, grid))
    t1, t2 = (a.ravel() for a in np.meshgrid(*axes, indexing="ij"))
    x, y, th = _advance(np.full(t1.shape, start[0]), np.full(t1.shape, start[1]),
                        np.full(t1.shape, start[2]), np.full(t1.shape, controls[0]), t1, speed, omega)
    x, y, th = _advance(x, y, th, np.full(t1.shape, controls[1]), t2, speed, omega)
    u3 = controls[2]
    if u3 != 0.0:
        t3 = np.mod(np.sign(u3) * (goal[2] - th), TWO_PI) / omega
    else:
        t3 = np.maximum((goal[0] - x) * np.cos(th) + (goal[1] - y) * np.sin(th), 0.0) / speed
    return np.stack((t1, t2, t3), axis=1), np.full((len(t1), 3), controls, dtype=float)


def _grid_sweep(start, goal, controls: Tuple[float, float, float], grid: float, horizon: float,
                tol: float, speed: float, omega: float) -> float:
    """Shortest grid path of one word ending within tol of the goal; all three durations on the grid."""
    axes = [np.arange(0.0, TWO_PI / omega if u != 0.0 else horizon / speed, grid) for u in controls]
    t2, t3 = (a.ravel() for a in np.meshgrid(axes[1], axes[2], indexing="ij"))
    best = math.inf
    for t1 in axes[0]:
        x, y, th = _advance(start[0], start[1], start[2], controls[0], t1, speed, omega)
        x, y, th = _advance(x, y, th, controls[1], t2, speed, omega)
        x, y, th = _advance(x, y, th, controls[2], t3, speed, omega)
        error = np.hypot(x - goal[0], y - goal[1]) + np.abs(wrap_angle(th - goal[2]))
        within = error <= tol
        if np.any(within):
            best = min(best, float(t1 + np.min(t2[within] + t3[within])))
    return best


def brute_force_time(start, goal, tol: float, grid: float, horizon: Optional[float] = None,
                     turn_radius: float = 1.0, speed: float = 1.0, seeds_per_word: int = 5,
                     newton_iterations: int = 40, polish: bool = True) -> float:
    """
    Shortest three-segment {L, S, R} time found by grid search plus Newton polishing.

    With ``polish=False`` the search is a plain grid over all three
    durations: the result is the shortest grid path whose endpoint lies
    within ``tol`` of the goal, with no Newton step and no gap correction.
    Expect it below the exact time by up to ``tol`` and above it by up to
    about three grid steps.

    Args:
        start: Start state
        goal: Goal state
        tol: Terminal-ball radius accepted when no exact solution is found
        grid: Duration grid resolution in seconds
        horizon: Longest straight segment considered (m); defaults to the
            start-goal distance plus 4*pi turn radii
        turn_radius: Minimum turn radius
        speed: Forward speed
        seeds_per_word: Grid points per word handed to Newton
        newton_iterations: Newton iterations per seed
        polish: False for the pure grid search

    Returns:
        Travel time in seconds; the shortest polished path when Newton
        converges for any seed, otherwise the best grid time plus the
        remaining position gap at full speed
    """
    if not tol > 0.0 or not grid > 0.0:
        raise ArgumentError(f"tol and grid must be positive, got {tol}, {grid}")
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if _state_gap(start, goal) < 1e-12:
        return 0.0
    omega = speed / turn_radius
    if horizon is None:
        horizon = float(np.hypot(*(goal[:2] - start[:2]))) + 4.0 * math.pi * turn_radius

    if not polish:
        result = min(_grid_sweep(start, goal, tuple(PRIMITIVE[c] for c in letters), grid, horizon,
                                 tol, speed, omega)
                     for letters in itertools.product("LSR", repeat=3))
        if not math.isfinite(result):
            raise NotFoundError(f"no grid path within {tol} of {goal.tolist()} inside horizon {horizon:.3g}")
        logger.debug(f"brute_force_time: pure grid {result:.6g}")
        return result

    seed_taus, seed_controls, fallback = [], [], math.inf
    for letters in itertools.product("LSR", repeat=3):
        controls = tuple(PRIMITIVE[c] for c in letters)
        taus, ctrl = _grid_seeds(start, goal, controls, grid, horizon, speed, omega)
        states = _walk(start, ctrl, taus, speed, omega)
        res = _residual(states, goal)
        pos_gap = np.hypot(res[:, 0], res[:, 1])
        error = pos_gap + np.abs(res[:, 2])
        within = error <= tol
        if np.any(within):
            fallback = min(fallback, float(np.min(taus[within].sum(axis=1) + pos_gap[within] / speed)))
        best = np.argsort(error, kind="stable")[:seeds_per_word]
        seed_taus.append(taus[best])
        seed_controls.append(ctrl[best])

    taus = np.concatenate(seed_taus)
    controls = np.concatenate(seed_controls)
    for _ in range(newton_iterations):
        states = _walk(start, controls, taus, speed, omega)
        res = _residual(states, goal)
        step = np.einsum("bij,bj->bi", np.linalg.pinv(_jacobian(states, controls, speed, omega)), res)
        taus = np.maximum(taus - step, 0.0)
    res = _residual(_walk(start, controls, taus, speed, omega), goal)
    solved = np.linalg.norm(res, axis=1) <= 1e-9
    exact = float(np.min(taus[solved].sum(axis=1))) if np.any(solved) else math.inf

    # polished paths first; grid endpoints only approximate the goal
    result = exact if math.isfinite(exact) else fallback
    if not math.isfinite(result):
        raise NotFoundError(f"no three-segment path within {tol} of {goal.tolist()} "
                            f"inside horizon {horizon:.3g}")
    logger.debug(f"brute_force_time: exact {exact:.6g}, grid fallback {fallback:.6g}")
    return result


def path_table(states: List, goal=(0.0, 0.0, 0.0), turn_radius: float = 1.0,
               speed: float = 1.0) -> List[Dict]:
    """Oracle times and words for a list of start states."""
    rows = []
    for state in states:
        value, path = dubins_distance(state, goal, turn_radius, speed)
        rows.append({"state": tuple(float(v) for v in state), "time": value, "word": path.word,
                     "segments": path.durations()})
    return rows
