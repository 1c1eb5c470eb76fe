"""
Numerical toolkit for transfer operators of smooth Anosov maps of the 2-torus:
maps and hyperbolicity, adapted stable foliations and holonomies, the graph
transform, anisotropic norm estimators, and Ulam discretisations.
"""

from .dynamics import AnosovMap, check_cone_invariance, estimate_hyperbolicity, perturbed_cat_terms
from .trig import DensityField, TrigField

__all__ = ["AnosovMap", "check_cone_invariance", "estimate_hyperbolicity", "perturbed_cat_terms",
           "DensityField", "TrigField"]
__version__ = "0.1.0"
