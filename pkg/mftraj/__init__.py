"""Multi-feature vehicle trajectory prediction."""

import logging

from awesomeversion import AwesomeVersion
import numpy as np

from .const import MIN_NUMPY_VERSION, VERSION

_LOGGER = logging.getLogger(__name__)

__version__ = VERSION


def numpy_supported(version: str = np.__version__) -> bool:
    """Check the installed numpy against the minimum supported release."""
    current = AwesomeVersion(version)
    req_min = AwesomeVersion(MIN_NUMPY_VERSION)
    if current < req_min:
        _LOGGER.error("mftraj requires numpy %s or later, found %s", req_min, current)
        return False
    _LOGGER.debug("Using mftraj %s with numpy %s", VERSION, current)
    return True
