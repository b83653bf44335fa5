"""cpf — combine propagation and features.

Toolkit for graph node classification that trains simple graph teachers,
extracts their per-node soft label distributions, and distills them into an
interpretable student built from parameterized label propagation plus a
feature-transformation MLP.
"""

__version__ = "0.1.0"

from cpf.graph import Graph, Split, load_bundle, write_bundle, make_split
from cpf.teacher import SoftLabelMatrix, read_soft_labels, write_soft_labels

__all__ = [
    "Graph",
    "Split",
    "SoftLabelMatrix",
    "load_bundle",
    "write_bundle",
    "make_split",
    "read_soft_labels",
    "write_soft_labels",
    "__version__",
]
