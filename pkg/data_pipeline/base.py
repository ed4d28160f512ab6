"""
Base class for the run stages (warm-up, training, corridor, synthesis, evaluation).
"""
import datetime
import logging
import time
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class Pipeline(ABC):
    """
    One run stage: ``extract`` gathers inputs, ``transform`` computes,
    ``load`` writes artifacts into the run directory.
    """

    def __init__(self, run_config, name: str, description: Optional[str] = None) -> None:
        self.run_config = run_config
        self.name = name
        self.description = description or name.replace("_", " ")
        self.last_run = None
        self.metrics: Dict[str, Any] = {}
        self.output = None

    @abstractmethod
    def extract(self, *args, **kwargs) -> Any:
        """Stage inputs: generated, read from disk or passed by the caller."""

    @abstractmethod
    def transform(self, data: Any, *args, **kwargs) -> Any:
        """The stage computation on the output of ``extract``."""

    @abstractmethod
    def load(self, data: Any, *args, **kwargs) -> Dict[str, Any]:
        """Write the results; return a dictionary describing what was written."""

    def records(self, data: Any) -> Optional[int]:
        """Input size reported in the metrics."""
        return len(data) if hasattr(data, "__len__") else None

    def run(self, *args, **kwargs) -> Dict[str, Any]:
        """
        Run extract, transform and load in turn.

        Returns:
            Result of ``load`` plus a ``metrics`` entry with per-step
            durations; the transformed data stays on ``self.output``
        """
        timings = {}
        started = time.perf_counter()
        logger.info(f"Starting {self.description} ({self.run_config['output_dir']})")

        try:
            clock = time.perf_counter()
            extracted = self.extract(*args, **kwargs)
            timings["extract_duration"] = time.perf_counter() - clock

            clock = time.perf_counter()
            self.output = self.transform(extracted, *args, **kwargs)
            timings["transform_duration"] = time.perf_counter() - clock

            clock = time.perf_counter()
            result = self.load(self.output, *args, **kwargs)
            timings["load_duration"] = time.perf_counter() - clock
        except Exception as e:
            self._finish(started, success=False, error=str(e))
            logger.error(f"Stage {self.name} failed: {str(e)}")
            raise

        self._finish(started, success=True, records_processed=self.records(extracted), **timings)
        logger.info(f"Stage {self.name} completed in {self.metrics['total_duration']:.2f} seconds")
        result["metrics"] = self.metrics
        return result

    def _finish(self, started: float, **fields) -> None:
        self.last_run = datetime.datetime.now(datetime.timezone.utc)
        self.metrics = {
            "stage": self.name,
            "last_run": self.last_run.isoformat(),
            "total_duration": time.perf_counter() - started,
            **fields,
        }

    def get_metrics(self) -> Dict[str, Any]:
        """Metrics of the last run."""
        return self.metrics

    def __repr__(self) -> str:
        return f"<{type(self).__name__} '{self.name}'>"
