"""Reference model server for the /v1 pipeline wire protocol."""

from .service import ModelService, TrainSpec
from .service_errors import ServiceError

__version__ = "0.1.0"

__all__ = ["ModelService", "ServiceError", "TrainSpec"]
