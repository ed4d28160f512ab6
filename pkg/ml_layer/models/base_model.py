"""
Base model class for machine learning models.
"""
import os
import json
import logging
from abc import ABC, abstractmethod
from typing import Dict, Any, Optional

from ml_layer.config import MLConfig

logger = logging.getLogger(__name__)


class Model(ABC):
    """Base class for the trainable models of the planner."""

    def __init__(self, model_name: str, model_path: Optional[str] = None):
        """
        Initialize a model.

        Args:
            model_name: The name of the model, used for saving/loading
            model_path: Explicit file location; defaults to the models directory
        """
        self.model_name = model_name
        self.trained = False
        self.model_path = model_path or MLConfig.get_model_path(model_name)

    @abstractmethod
    def train(self, X, y=None, **kwargs) -> Dict[str, Any]:
        """
        Train the model on the provided data.

        Returns:
            Results of the training process as a dictionary
        """

    @abstractmethod
    def predict(self, X, **kwargs):
        """Make predictions using the trained model."""

    @abstractmethod
    def evaluate(self, X, y=None, **kwargs) -> Dict[str, Any]:
        """
        Evaluate the model's performance.

        Returns:
            Evaluation metrics as a dictionary
        """

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """JSON-serializable representation of the model."""

    @abstractmethod
    def restore(self, payload: Dict[str, Any]):
        """Replace the model state from a ``to_dict`` payload."""

    def save(self, path: Optional[str] = None) -> str:
        """Save the model to disk as JSON (floats keep full precision)."""
        path = path or self.model_path
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(self.to_dict(), f)
                f.write('\n')
        except Exception as e:
            logger.error(f"Error saving model {self.model_name}: {str(e)}")
            raise
        logger.info(f"Model {self.model_name} saved to {path}")
        return path

    def load(self, path: Optional[str] = None):
        """Load the model from disk."""
        path = path or self.model_path
        try:
            with open(path, 'r', encoding='utf-8') as f:
                self.restore(json.load(f))
        except Exception as e:
            logger.error(f"Error loading model {self.model_name}: {str(e)}")
            raise
        self.trained = True
        logger.info(f"Model {self.model_name} loaded from {path}")
        return self
