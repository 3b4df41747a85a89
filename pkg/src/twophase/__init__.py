"""AND-OR interaction analysis of model outputs over masked inputs.

Core entry points:

* :mod:`twophase.lattice` - Möbius / zeta transforms on the subset lattice
* :mod:`twophase.interactions` - AND/OR decomposition, L1 sparsification, saliency
* :mod:`twophase.metrics` - per-order strengths, Jaccard similarity, Gaussian noise model
* :mod:`twophase.dynamics` - epoch aggregation and two-phase detection
* :mod:`twophase.toy` and :mod:`twophase.pipeline` - a small trainable network and experiments
* :mod:`twophase.io` and :mod:`twophase.cli` - file formats and the ``twophase`` command
"""

from ._accel import get_backend, set_backend
from .dynamics import EpochRecord, PhaseReport, aggregate_epoch, detect_transition, initial_fusiform_check
from .interactions import (
    GammaSplit,
    InteractionSpectrum,
    MaskedOutputTable,
    SparsifierConfig,
    TauRule,
    check_stability_conditions,
    decompose,
    estimate_kappa,
    salient_sets,
    sparsify,
    sparsify_many,
    verify_universal_matching,
)
from .lattice import mobius_transform, superset_complement_transform, zeta_transform
from .metrics import (
    OrderProfile,
    expected_order_strength,
    fusiform_monte_carlo,
    generalization_curve,
    jaccard_similarity,
    order_profile,
    vectorize_order,
)

__version__ = "0.1.0"

__all__ = [
    "EpochRecord",
    "GammaSplit",
    "InteractionSpectrum",
    "MaskedOutputTable",
    "OrderProfile",
    "PhaseReport",
    "SparsifierConfig",
    "TauRule",
    "aggregate_epoch",
    "check_stability_conditions",
    "decompose",
    "detect_transition",
    "estimate_kappa",
    "expected_order_strength",
    "fusiform_monte_carlo",
    "generalization_curve",
    "get_backend",
    "initial_fusiform_check",
    "jaccard_similarity",
    "mobius_transform",
    "order_profile",
    "salient_sets",
    "set_backend",
    "sparsify",
    "sparsify_many",
    "superset_complement_transform",
    "vectorize_order",
    "verify_universal_matching",
    "zeta_transform",
]
