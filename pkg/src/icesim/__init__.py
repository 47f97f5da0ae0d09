"""Simulation and analysis of imaging by coincidence from entanglement.

Submodules: ``photon_model``, ``phantom``, ``scanner``, ``estimators``,
``polarimetry``, ``metrology``, ``experiments`` and ``cli``.  Sampling
kernels run in a compiled extension when available; ``icesim.backend()``
reports which one is active.
"""

from . import estimators, experiments, metrology, phantom, photon_model, polarimetry, scanner
from ._backend import current as backend

__version__ = "0.1.0"

__all__ = [
    "backend",
    "estimators",
    "experiments",
    "metrology",
    "phantom",
    "photon_model",
    "polarimetry",
    "scanner",
]
