"""Built-in model hooks and the loader for user-supplied ones.

A hook maps an RGB image (H, W, 3) uint8 to a list of (score, boolean mask)
pairs with masks of the same height and width.
"""

from __future__ import annotations

import importlib

import numpy as np

GREEN_THRESHOLD = 200
GREEN_SCORE = 0.9


def dummy_model(image: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Predict nothing; used for protocol-level testing."""
    return []


def green_threshold_model(image: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """One instance covering every pixel with green channel > 200.

    Empty list when no pixel qualifies.
    """
    mask = image[:, :, 1] > GREEN_THRESHOLD
    if not mask.any():
        return []
    return [(GREEN_SCORE, mask)]


def load_model(spec: str):
    """Resolve ``dummy``, ``green-threshold``, or ``module.path:attribute``."""
    if spec == "dummy":
        return dummy_model
    if spec == "green-threshold":
        return green_threshold_model
    if ":" in spec:
        module_name, _, attr = spec.partition(":")
        module = importlib.import_module(module_name)
        hook = getattr(module, attr)
        if not callable(hook):
            raise TypeError(f"{spec} is not callable")
        return hook
    raise ValueError(
        f"unknown model {spec!r}; expected dummy, green-threshold, or module.path:attribute"
    )
