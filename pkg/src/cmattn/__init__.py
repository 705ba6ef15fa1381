"""Cascaded mutual attention for RGB-D saliency.

A small, self-contained numerical library: a float64 tensor type with a
reverse-mode operation tape, the cascaded mutual attention mechanism built
from those primitives, a hybrid training loss, a bit-exact salient-object
evaluation suite, a desk-scale toy model with an ablation harness, and a
command line front end.
"""

from .tensor_ops import ContractError, Gradients, ShapeError, Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "Gradients",
    "ShapeError",
    "Tape",
    "Tensor",
    "__version__",
]
