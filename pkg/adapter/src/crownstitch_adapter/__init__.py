"""Reference adapter: serves instance-segmentation models over the
newline-delimited JSON wire protocol expected by crownstitch's external
backend.

The adapter owns no model logic. A model is any callable

    hook(image: np.ndarray[H, W, 3] uint8) -> list[(score: float, mask: np.ndarray[H, W] bool)]

selected at launch with ``--model dummy``, ``--model green-threshold``, or
``--model some.module:attribute`` for user-supplied hooks.
"""

from .models import dummy_model, green_threshold_model, load_model
from .protocol import PROTOCOL_VERSION, rle_counts, serve

__all__ = [
    "PROTOCOL_VERSION",
    "dummy_model",
    "green_threshold_model",
    "load_model",
    "rle_counts",
    "serve",
]
__version__ = "0.1.0"
