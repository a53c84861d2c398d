"""Gradient catastrophe of dispersionless KP solutions and its dispersive regularization.

Spectral solvers for the generalized KP and dispersionless KP equations, a
critical-point finder on the characteristic formulation, the PI2 special
solution, and the local PI2 approximation near break-up.
"""

from .asymptotics import AsymptoticParams, compare, eval_kp12, kdv_asymptotic_params, map_to_XT
from .breakup import CriticalPoint, find_critical, find_next_critical
from .dkp import DkpProblem, evolve_F, reconstruct_u
from .errors import BlowUpError, ConvergenceError, NoBreakupError, NumericalError, SnapshotFormatError
from .gkp import GkpProblem, evolve_gkp
from .pi2 import Pi2Config, continue_in_T, eval_U
from .spectral import GridSpec, SpectralField

__all__ = [
    "AsymptoticParams", "BlowUpError", "ConvergenceError", "CriticalPoint", "DkpProblem", "GkpProblem",
    "GridSpec", "NoBreakupError", "NumericalError", "Pi2Config", "SnapshotFormatError", "SpectralField",
    "compare", "continue_in_T", "eval_U", "eval_kp12", "evolve_F", "evolve_gkp", "find_critical",
    "find_next_critical", "kdv_asymptotic_params", "map_to_XT", "reconstruct_u",
]
