"""natforge: cost-non-increasing optimization of cell-graph architectures.

A graph-convolutional transition policy is trained with policy gradient to
replace per-edge operations along validity rules that never increase cost,
in either a 3-action (keep / null / skip) or a masked 13-action vocabulary.
"""

__version__ = "0.1.0"
