"""Causal structure learning via MEC-identifiable targets.

Exact graph machinery (d-separation, CPDAGs, Meek rules, MEC enumeration),
SCM simulators, conditional-independence tests, constraint-based discovery,
a toy attention-based skeleton/v-structure predictor on a minimal autodiff
engine, CPDAG post-processing, evaluation metrics, and an analysis of the
systematic bias of independent-edge prediction.
"""

from . import bias, citest, constraint, graphs, metrics, postproc, scm, seeding
from .graphs import Dag, Pdag, Skeleton, VStructure, cpdag_of, d_separated, meek_closure

__version__ = "0.1.0"

__all__ = [
    "bias",
    "citest",
    "constraint",
    "graphs",
    "metrics",
    "postproc",
    "scm",
    "seeding",
    "Dag",
    "Pdag",
    "Skeleton",
    "VStructure",
    "cpdag_of",
    "d_separated",
    "meek_closure",
]
