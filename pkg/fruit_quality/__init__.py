__version__ = "0.1.0"

# Local imports
from .config import RunConfig
from .exceptions import FruitQualityError

__all__ = ["FruitQualityError", "RunConfig", "__version__"]
