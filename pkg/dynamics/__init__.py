"""
System dynamics and trajectory integration.
"""
from dynamics.system import (
    DEFAULT_DT,
    COST_FUNCTIONS,
    ControlSequence,
    SystemModel,
    Trajectory,
    as_state,
    effort_cost,
    eval_control,
    integrate_backward,
    integrate_forward,
    propagate_batch,
    sequence_cost,
    stack_sequences,
    unit_cost,
)
from dynamics.dubins import build_model, dubins_model

__all__ = [
    'DEFAULT_DT', 'COST_FUNCTIONS', 'ControlSequence', 'SystemModel', 'Trajectory',
    'as_state', 'effort_cost', 'eval_control', 'integrate_backward', 'integrate_forward',
    'propagate_batch', 'sequence_cost', 'stack_sequences', 'unit_cost',
    'build_model', 'dubins_model',
]
