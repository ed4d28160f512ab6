"""
Model implementation package for machine learning models.
"""

from ml_layer.models.base_model import Model
from ml_layer.models.inverse_dynamics import InverseDynamicsNetwork, RnnWeights, TrainExample

__all__ = ['Model', 'InverseDynamicsNetwork', 'RnnWeights', 'TrainExample']
