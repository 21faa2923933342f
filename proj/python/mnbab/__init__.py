"""Python bindings for the mnbab verifier."""

import json

from ._core import MnbabError, Network, default_config, exact_minima
from ._core import verify as _verify


def verify(network, spec, config=None):
    """Verify `spec` (dict or JSON text) on `network`; returns the report dict."""
    if not isinstance(spec, str):
        spec = json.dumps(spec)
    if config is not None and not isinstance(config, str):
        config = json.dumps(config)
    return _verify(network, spec, config or "")


__all__ = ["MnbabError", "Network", "default_config", "exact_minima", "verify"]
