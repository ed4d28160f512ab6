"""
Resilient backpropagation (iRprop-) with global backtracking.

Each weight keeps its own step size that grows by eta_plus while the gradient
sign is stable and shrinks by eta_minus when it flips. On top of that, an epoch
whose full-batch loss would rise is rolled back and every step size shrinks,
so the recorded epoch losses never increase.
"""
import logging
from typing import Callable, Dict, List, Tuple

import numpy as np

from ml_layer.config import RpropConfig

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]
LossAndGrad = Callable[[Params], Tuple[float, Params]]


class Rprop:
    """Per-parameter Rprop state for a dict of named arrays."""

    def __init__(self, params: Params, config: RpropConfig = None):
        self.config = config or RpropConfig()
        self.steps = {name: np.full_like(value, self.config.initial_step, dtype=float)
                      for name, value in params.items()}
        self.previous = {name: np.zeros_like(value, dtype=float) for name, value in params.items()}

    def propose(self, params: Params, grads: Params) -> Params:
        """
        Compute updated parameters without committing the sign history.

        Returns:
            New parameter dict; ``params`` is left untouched
        """
        cfg = self.config
        updated, pending = {}, {}
        for name, value in params.items():
            grad = np.array(grads[name], dtype=float, copy=True)
            agreement = grad * self.previous[name]
            step = self.steps[name]
            step = np.where(agreement > 0.0, np.minimum(step * cfg.eta_plus, cfg.max_step), step)
            step = np.where(agreement < 0.0, np.maximum(step * cfg.eta_minus, cfg.min_step), step)
            grad[agreement < 0.0] = 0.0
            updated[name] = value - np.sign(grad) * step
            pending[name] = (step, grad)
        self._pending = pending
        return updated

    def commit(self):
        for name, (step, grad) in self._pending.items():
            self.steps[name] = step
            self.previous[name] = grad
        self._pending = {}

    def reject(self):
        """Shrink every step after a rejected epoch and forget the sign history."""
        cfg = self.config
        for name in self.steps:
            self.steps[name] = np.maximum(self.steps[name] * cfg.eta_minus, cfg.min_step)
            self.previous[name] = np.zeros_like(self.previous[name])
        self._pending = {}

    def step_range(self) -> Tuple[float, float]:
        values = np.concatenate([s.ravel() for s in self.steps.values()]) if self.steps else np.zeros(1)
        return float(values.min()), float(values.max())


def minimize(loss_and_grad: LossAndGrad, params: Params, epochs: int,
             config: RpropConfig = None) -> Tuple[Params, List[float]]:
    """
    Full-batch Rprop.

    Args:
        loss_and_grad: Returns (loss, gradient dict) for a parameter dict
        params: Initial parameters (not modified)
        epochs: Number of epochs
        config: Rprop constants

    Returns:
        (final parameters, loss history). The history starts with the initial
        loss and has ``epochs + 1`` non-increasing entries.
    """
    params = {name: np.array(value, dtype=float, copy=True) for name, value in params.items()}
    optimizer = Rprop(params, config)
    loss, grads = loss_and_grad(params)
    history = [float(loss)]
    rejected = 0
    for epoch in range(epochs):
        candidate = optimizer.propose(params, grads)
        new_loss, new_grads = loss_and_grad(candidate)
        if np.isfinite(new_loss) and new_loss <= loss:
            optimizer.commit()
            params, loss, grads = candidate, new_loss, new_grads
        else:
            optimizer.reject()
            rejected += 1
        history.append(float(loss))
    if epochs:
        low, high = optimizer.step_range()
        logger.debug(f"Rprop: {epochs} epochs, {rejected} rolled back, "
                     f"loss {history[0]:.6g} -> {history[-1]:.6g}, steps in [{low:.3g}, {high:.3g}]")
    return params, history
