"""
Rectified-linear recurrent network approximating the inverse backward dynamics.

Given a desired state x, the network proposes a control sequence that drives
the system from x to the fixed target. One unrolled step reads

    P  = relu(W_P X + b_P)
    D  = relu(W_D1 P + W_D2 X + b_D)
    U  = W_L D + b_L
    X' = relu(W_X U + b_X)

with X^0 the zero-padded state. U^n carries the n-th segment: channel 0 is the
primitive logit (snapped to the nearest codebook entry) and channel 1 the
duration logit (clamped to [0, T_bar]).

Training compares discretized control vectors. The hard discretization is the
reported loss. Gradients come from a relaxation that replaces every switch
step by a sigmoid of width equal to the sample step, with the primitive snap
passed straight through.
"""
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from dynamics.system import ControlSequence
from ml_layer.config import NetConfig
from ml_layer.models.base_model import Model
from ml_layer.optim import minimize
from utils.errors import ArgumentError, ConfigurationError

logger = logging.getLogger(__name__)

LAYER_NAMES = ("W_P", "b_P", "W_D1", "W_D2", "b_D", "W_L", "b_L", "W_X", "b_X")
PLANT_LAYERS = ("W_X", "b_X")


def layer_shapes(cfg: NetConfig) -> Dict[str, Tuple[int, ...]]:
    wp, wd, wu, wx = cfg.width_p, cfg.width_d, cfg.width_u, cfg.width_x
    return {
        "W_P": (wp, wx), "b_P": (wp,),
        "W_D1": (wd, wp), "W_D2": (wd, wx), "b_D": (wd,),
        "W_L": (wu, wd), "b_L": (wu,),
        "W_X": (wx, wu), "b_X": (wx,),
    }


@dataclass
class RnnWeights:
    """All weight matrices and bias vectors of the recurrent network."""
    W_P: np.ndarray
    b_P: np.ndarray
    W_D1: np.ndarray
    W_D2: np.ndarray
    b_D: np.ndarray
    W_L: np.ndarray
    b_L: np.ndarray
    W_X: np.ndarray
    b_X: np.ndarray

    def as_params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LAYER_NAMES}

    @classmethod
    def from_params(cls, params: Dict[str, np.ndarray]) -> "RnnWeights":
        return cls(**{name: np.array(params[name], dtype=float, copy=True) for name in LAYER_NAMES})

    def copy(self) -> "RnnWeights":
        return RnnWeights.from_params(self.as_params())

    def validate(self, cfg: NetConfig) -> "RnnWeights":
        """Check shapes against ``cfg`` and that every entry is finite."""
        for name, shape in layer_shapes(cfg).items():
            value = getattr(self, name)
            if value.shape != shape:
                raise ConfigurationError(f"shape {value.shape}, expected {shape}", field=name)
            if not np.all(np.isfinite(value)):
                raise ConfigurationError("non-finite entries", field=name)
        return self

    def to_dict(self) -> Dict[str, list]:
        return {name: getattr(self, name).tolist() for name in LAYER_NAMES}

    @classmethod
    def from_dict(cls, payload: Dict[str, list]) -> "RnnWeights":
        missing = [name for name in LAYER_NAMES if name not in payload]
        if missing:
            raise ConfigurationError(f"missing layers {missing}", field="layers")
        return cls(**{name: np.asarray(payload[name], dtype=float) for name in LAYER_NAMES})

    def equals(self, other: "RnnWeights") -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in LAYER_NAMES)


@dataclass(frozen=True)
class TrainExample:
    input_state: np.ndarray
    target_control: ControlSequence


def init_weights(cfg: NetConfig, rng: np.random.Generator) -> RnnWeights:
    """
    Uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    The duration bias starts at T_bar / (2N) so the duration clamps begin in
    their linear range.
    """
    cfg.validate()
    wp, wd, wu, wx = cfg.layer_widths
    fan_in = {"W_P": wx, "b_P": wx, "W_D1": wp + wx, "W_D2": wp + wx, "b_D": wp + wx,
              "W_L": wd, "b_L": wd, "W_X": wu, "b_X": wu}
    params = {}
    for name, shape in layer_shapes(cfg).items():
        bound = 1.0 / np.sqrt(fan_in[name])
        params[name] = rng.uniform(-bound, bound, size=shape)
    params["b_L"][1] = cfg.max_duration / (2.0 * cfg.recurrence_depth)
    return RnnWeights.from_params(params)


def zero_weights(cfg: NetConfig) -> RnnWeights:
    return RnnWeights.from_params({name: np.zeros(shape) for name, shape in layer_shapes(cfg).items()})


def embed_states(states, cfg: NetConfig) -> np.ndarray:
    """Zero-pad states of dimension ``cfg.state_dim`` to the X-layer width."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[1] != cfg.state_dim:
        raise ConfigurationError(f"state dimension {states.shape[1]}, network expects "
                                 f"{cfg.state_dim}", field="network.state_dim")
    padded = np.zeros((states.shape[0], cfg.width_x))
    padded[:, :cfg.state_dim] = states
    return padded


def _unroll(params: Dict[str, np.ndarray], X: np.ndarray, depth: int) -> List[Dict[str, np.ndarray]]:
    caches = []
    for _ in range(depth):
        zP = X @ params["W_P"].T + params["b_P"]
        P = np.maximum(zP, 0.0)
        zD = P @ params["W_D1"].T + X @ params["W_D2"].T + params["b_D"]
        D = np.maximum(zD, 0.0)
        U = D @ params["W_L"].T + params["b_L"]
        zX = U @ params["W_X"].T + params["b_X"]
        caches.append({"X": X, "zP": zP, "P": P, "zD": zD, "D": D, "U": U, "zX": zX})
        X = np.maximum(zX, 0.0)
    return caches


def snap_to_codebook(logits, codebook: Sequence[float]) -> np.ndarray:
    """Nearest codebook entry; ties go to the earlier entry."""
    codebook = np.asarray(codebook, dtype=float)
    logits = np.asarray(logits, dtype=float)
    return codebook[np.argmin(np.abs(logits[..., None] - codebook), axis=-1)]


def forward_batch(w: RnnWeights, cfg: NetConfig, states) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run the network on a batch of states.

    Returns:
        (primitives, durations), each of shape (B, N)
    """
    w.validate(cfg)
    caches = _unroll(w.as_params(), embed_states(states, cfg), cfg.recurrence_depth)
    logits = np.stack([c["U"][:, 0] for c in caches], axis=1)
    durations = np.clip(np.stack([c["U"][:, 1] for c in caches], axis=1), 0.0, cfg.max_duration)
    return snap_to_codebook(logits, cfg.primitive_codebook), durations


def forward(w: RnnWeights, cfg: NetConfig, x) -> ControlSequence:
    """
    Propose a control sequence for one state.

    Args:
        w: Network weights
        cfg: Network configuration
        x: State of dimension ``cfg.state_dim``

    Returns:
        ControlSequence with exactly N segments
    """
    primitives, durations = forward_batch(w, cfg, np.asarray(x, dtype=float)[None, :])
    return ControlSequence(tuple(primitives[0]), tuple(durations[0]))


def control_grid(max_duration: float, step: float) -> np.ndarray:
    """Sample instants -T_bar + k*step, capped at 0, k = 0..ceil(T_bar/step)."""
    if step <= 0.0:
        raise ArgumentError(f"sample step must be positive, got {step}")
    count = int(np.ceil(max_duration / step - 1e-9)) + 1
    return np.minimum(-max_duration + step * np.arange(count), 0.0)


def _left_pad(sequences: Sequence[ControlSequence]) -> Tuple[np.ndarray, np.ndarray]:
    # zero-duration, zero-valued segments in front leave the control unchanged
    width = max((len(s) for s in sequences), default=0)
    primitives = np.zeros((len(sequences), width))
    durations = np.zeros((len(sequences), width))
    for row, seq in enumerate(sequences):
        if len(seq):
            primitives[row, width - len(seq):] = seq.primitives
            durations[row, width - len(seq):] = seq.durations
    return primitives, durations


def _segment_starts(durations: np.ndarray) -> np.ndarray:
    """Start instants s_j = -(tau_j + ... + tau_K) for right-aligned segments."""
    return -np.cumsum(durations[:, ::-1], axis=1)[:, ::-1]


def _increments(primitives: np.ndarray) -> np.ndarray:
    previous = np.concatenate((np.zeros((primitives.shape[0], 1)), primitives[:, :-1]), axis=1)
    return primitives - previous


def discretize_arrays(primitives: np.ndarray, durations: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """
    Hard discretization of right-aligned sequences on ``grid``.

    Uses c(t) = sum_j (u_j - u_{j-1}) H(t - s_j) with H(0) = 1, which agrees
    with eval_control: later segments win at switch instants and samples
    before the first segment read 0.
    """
    if primitives.shape[1] == 0:
        return np.zeros((primitives.shape[0], len(grid)))
    starts = _segment_starts(durations)
    steps = (grid[None, None, :] >= starts[:, :, None]).astype(float)
    return np.einsum("bj,bjg->bg", _increments(primitives), steps)


def discretize_control(seq: ControlSequence, max_duration: float, step: float) -> np.ndarray:
    """
    Fixed-length embedding of a control function for the loss.

    Args:
        seq: Control sequence
        max_duration: Horizon T_bar
        step: Sample step

    Returns:
        Vector of control values at -T_bar + k*step, zero before the sequence starts
    """
    primitives, durations = _left_pad([seq])
    return discretize_arrays(primitives, durations, control_grid(max_duration, step))[0]


def discretize_sequences(sequences: Sequence[ControlSequence], max_duration: float,
                         step: float) -> np.ndarray:
    primitives, durations = _left_pad(sequences)
    return discretize_arrays(primitives, durations, control_grid(max_duration, step))


def mse_loss(predicted: ControlSequence, target: ControlSequence, max_duration: float,
             step: float) -> float:
    """Mean squared difference of the two discretized control vectors."""
    diff = (discretize_control(predicted, max_duration, step)
            - discretize_control(target, max_duration, step))
    return float(np.mean(diff * diff))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def relaxed_objective(params: Dict[str, np.ndarray], cfg: NetConfig, X0: np.ndarray,
                      targets: np.ndarray, snap: bool = True) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Smooth training loss and its gradient by backpropagation through time.

    Args:
        params: Weight dict keyed by layer name
        cfg: Network configuration
        X0: Embedded input states (B, w_X)
        targets: Hard-discretized target controls (B, G)
        snap: Snap primitive logits to the codebook (straight-through gradient)

    Returns:
        (loss, gradient dict)
    """
    depth = cfg.recurrence_depth
    kappa = cfg.control_sample_step
    grid = control_grid(cfg.max_duration, cfg.control_sample_step)
    batch, samples = targets.shape

    caches = _unroll(params, X0, depth)
    logits = np.stack([c["U"][:, 0] for c in caches], axis=1)
    raw = np.stack([c["U"][:, 1] for c in caches], axis=1)
    values = snap_to_codebook(logits, cfg.primitive_codebook) if snap else logits
    durations = np.clip(raw, 0.0, cfg.max_duration)
    linear = ((raw > 0.0) & (raw < cfg.max_duration)).astype(float)

    starts = _segment_starts(durations)
    edges = _sigmoid((grid[None, None, :] - starts[:, :, None]) / kappa)
    coef = _increments(values)
    control = np.einsum("bj,bjg->bg", coef, edges)
    residual = control - targets
    loss = float(np.sum(residual * residual) / (batch * samples))

    g = 2.0 * residual / (batch * samples)
    later = np.concatenate((edges[:, 1:], np.zeros((batch, 1, samples))), axis=1)
    d_values = np.einsum("bg,bjg->bj", g, edges - later)
    d_starts = np.einsum("bg,bjg->bj", g, -edges * (1.0 - edges) / kappa) * coef
    d_durations = -np.cumsum(d_starts, axis=1) * linear

    grads = {name: np.zeros_like(value) for name, value in params.items()}
    g_next_state = np.zeros_like(X0)
    for n in range(depth - 1, -1, -1):
        c = caches[n]
        g_zX = g_next_state * (c["zX"] > 0.0)
        grads["W_X"] += g_zX.T @ c["U"]
        grads["b_X"] += g_zX.sum(axis=0)
        g_U = g_zX @ params["W_X"]
        g_U[:, 0] += d_values[:, n]
        g_U[:, 1] += d_durations[:, n]
        grads["W_L"] += g_U.T @ c["D"]
        grads["b_L"] += g_U.sum(axis=0)
        g_zD = (g_U @ params["W_L"]) * (c["zD"] > 0.0)
        grads["W_D1"] += g_zD.T @ c["P"]
        grads["W_D2"] += g_zD.T @ c["X"]
        grads["b_D"] += g_zD.sum(axis=0)
        g_zP = (g_zD @ params["W_D1"]) * (c["zP"] > 0.0)
        grads["W_P"] += g_zP.T @ c["X"]
        grads["b_P"] += g_zP.sum(axis=0)
        g_next_state = g_zP @ params["W_P"] + g_zD @ params["W_D2"]
    return loss, grads


def activation_margin(w: RnnWeights, cfg: NetConfig, states) -> float:
    """Smallest distance of any pre-activation or duration logit from a kink."""
    caches = _unroll(w.as_params(), embed_states(states, cfg), cfg.recurrence_depth)
    margins = []
    for c in caches:
        margins += [np.abs(c["zP"]).min(), np.abs(c["zD"]).min(), np.abs(c["zX"]).min(),
                    np.abs(c["U"][:, 1]).min(), np.abs(c["U"][:, 1] - cfg.max_duration).min()]
    return float(min(margins))


def plant_objective(params: Dict[str, np.ndarray], controls: np.ndarray,
                    next_states: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """MSE of relu(W_X U + b_X) against padded next states, with gradients."""
    z = controls @ params["W_X"].T + params["b_X"]
    residual = np.maximum(z, 0.0) - next_states
    scale = 2.0 / residual.size
    g_z = scale * residual * (z > 0.0)
    loss = float(np.mean(residual * residual))
    return loss, {"W_X": g_z.T @ controls, "b_X": g_z.sum(axis=0)}


def train_plant(w: RnnWeights, cfg: NetConfig, controls, next_states,
                epochs: int) -> Tuple[RnnWeights, List[float]]:
    """
    Fit only the plant layer to one-step backward transitions.

    Args:
        w: Current weights (not modified)
        cfg: Network configuration
        controls: U-layer vectors (M, w_U)
        next_states: True backward states after one step (M, n)
        epochs: Rprop epochs

    Returns:
        (updated weights, per-epoch loss history)
    """
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    if controls.size == 0 or len(controls) == 0:
        raise ArgumentError("plant training needs at least one step pair")
    if controls.shape[1] != cfg.width_u:
        raise ConfigurationError(f"control vectors have width {controls.shape[1]}, "
                                 f"expected {cfg.width_u}", field="network.layer_widths")
    targets = embed_states(next_states, cfg)
    start = {name: getattr(w, name) for name in PLANT_LAYERS}
    fitted, history = minimize(lambda p: plant_objective(p, controls, targets), start, epochs,
                               cfg.rprop)
    params = w.as_params()
    params.update(fitted)
    logger.info(f"Plant layer fitted on {len(controls)} pairs: MSE {history[0]:.4g} -> {history[-1]:.4g}")
    return RnnWeights.from_params(params), history


def _training_arrays(cfg: NetConfig, dataset: Sequence[TrainExample]) -> Tuple[np.ndarray, np.ndarray]:
    usable = [ex for ex in dataset if ex.target_control.total_duration <= cfg.max_duration + 1e-9]
    if not usable:
        raise ArgumentError(f"no training example fits the horizon {cfg.max_duration}")
    if len(usable) < len(dataset):
        logger.debug(f"{len(dataset) - len(usable)} examples exceed the network horizon, skipped")
    states = embed_states(np.stack([ex.input_state for ex in usable]), cfg)
    targets = discretize_sequences([ex.target_control for ex in usable], cfg.max_duration,
                                   cfg.control_sample_step)
    return states, targets


def train_full(w: RnnWeights, cfg: NetConfig, dataset: Sequence[TrainExample],
               epochs: int, history: Optional[List[float]] = None) -> Tuple[RnnWeights, float]:
    """
    Train every layer with Rprop against the discretized control loss.

    Args:
        w: Current weights (not modified)
        cfg: Network configuration
        dataset: Training examples; those longer than T_bar are skipped
        epochs: Rprop epochs (0 leaves the weights unchanged)
        history: Optional list extended with the per-epoch objective

    Returns:
        (updated weights, final objective value)
    """
    if not dataset:
        raise ArgumentError("train_full needs a non-empty dataset")
    w.validate(cfg)
    states, targets = _training_arrays(cfg, dataset)
    params, losses = minimize(lambda p: relaxed_objective(p, cfg, states, targets), w.as_params(),
                              epochs, cfg.rprop)
    if history is not None:
        history.extend(losses)
    return RnnWeights.from_params(params), losses[-1]


def dataset_mse(w: RnnWeights, cfg: NetConfig, dataset: Sequence[TrainExample]) -> float:
    """Mean hard mse_loss of the network over ``dataset``."""
    states, targets = _training_arrays(cfg, dataset)
    primitives, durations = forward_batch(w, cfg, states[:, :cfg.state_dim])
    grid = control_grid(cfg.max_duration, cfg.control_sample_step)
    predicted = discretize_arrays(primitives, durations, grid)
    return float(np.mean((predicted - targets) ** 2))


class InverseDynamicsNetwork(Model):
    """The recurrent network together with its configuration and persistence."""

    def __init__(self, cfg: NetConfig, weights: Optional[RnnWeights] = None,
                 rng: Optional[np.random.Generator] = None, model_name: str = "inverse_dynamics",
                 model_path: Optional[str] = None):
        super().__init__(model_name, model_path)
        self.cfg = cfg.validate()
        if weights is None:
            weights = init_weights(cfg, rng if rng is not None else np.random.default_rng(0))
        self.weights = weights.validate(cfg)

    def train(self, X, y=None, epochs: int = 1, **kwargs) -> Dict[str, Any]:
        """
        Train on examples (``X``: list of TrainExample).

        Returns:
            dict with the final objective and the hard discretized MSE
        """
        history: List[float] = []
        self.weights, loss = train_full(self.weights, self.cfg, X, epochs, history=history)
        self.trained = True
        return {"loss": loss, "mse": dataset_mse(self.weights, self.cfg, X), "history": history}

    def predict(self, X, **kwargs) -> List[ControlSequence]:
        primitives, durations = forward_batch(self.weights, self.cfg, X)
        return [ControlSequence(tuple(p), tuple(d)) for p, d in zip(primitives, durations)]

    def evaluate(self, X, y=None, **kwargs) -> Dict[str, Any]:
        return {"mse": dataset_mse(self.weights, self.cfg, X), "examples": len(X)}

    def to_dict(self) -> Dict[str, Any]:
        return {"config": self.cfg.to_dict(), "layers": self.weights.to_dict()}

    def restore(self, payload: Dict[str, Any]):
        cfg = NetConfig.from_dict(payload["config"]).validate()
        self.cfg = cfg
        self.weights = RnnWeights.from_dict(payload["layers"]).validate(cfg)

    @classmethod
    def from_file(cls, path: str) -> "InverseDynamicsNetwork":
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
        cfg = NetConfig.from_dict(payload["config"])
        network = cls(cfg, RnnWeights.from_dict(payload["layers"]), model_path=path)
        network.trained = True
        return network
