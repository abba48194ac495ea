"""Event-camera data engineering toolkit.

Event stream decoding, fixed-window frame representations, geometry
normalization, the augmentation chain, recurrent-training clip sampling, a
forward-only residual ConvLSTM temporal module, and COCO-style detection
evaluation — in-memory APIs plus the `evkit` command line.
"""

from .errors import EvkitError

__version__ = "0.1.0"

__all__ = ["EvkitError", "__version__"]
