"""Complete-electrode-model forward solver for temporal interference stimulation.

The modules follow the computation: ``mesh`` and ``materials`` describe the
head model, ``electrode`` the contact impedances, ``assembly`` builds the
CEM blocks, ``solver`` the resistance matrix, ``linearization`` its
impedance derivatives, ``leadfield`` and ``interference`` the fields, and
``metrics`` the comparisons.  ``pipeline`` and ``cli`` run the whole chain.
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
