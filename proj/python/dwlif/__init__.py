"""Domain-wall LIF neuron simulation: micromagnetic tracks, reduced neurons, crossbar networks."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import validate_config as _validate_config

__version__ = "0.1.0"


def resolved_config(path):
    """Validated config with every default filled in, as a dict."""
    return _json.loads(_validate_config(str(path)))
