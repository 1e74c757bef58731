"""Flat superconnections on finite models: cohomology, Maurer-Cartan deformations and transfer."""
__version__ = "0.1.0"

from .base import BaseAlgebra, build_exterior, build_point, parameter_algebra, tensor_product, validate
from .cohesive import (CohesiveModel, HomotopyData, Morphism, cone, hom_differential, is_homotopy_equivalence,
                       make_model, shift)
from .deform import GaugeSeries, MCSeries, gauge_act, mc_residual, slice_normalize, solve_kuranishi
from .graded import AlgebraElement, GradedMap, GradedSpace
from .hodge import HodgePackage, MetricData, build_hodge
from .transfer import FamilyConnection, linfty_terms, regularize, strongify, transfer_mc

__all__ = [
    "AlgebraElement", "BaseAlgebra", "CohesiveModel", "FamilyConnection", "GaugeSeries", "GradedMap",
    "GradedSpace", "HodgePackage", "HomotopyData", "MCSeries", "MetricData", "Morphism", "build_exterior",
    "build_hodge", "build_point", "cone", "gauge_act", "hom_differential", "is_homotopy_equivalence",
    "linfty_terms", "make_model", "mc_residual", "parameter_algebra", "regularize", "shift",
    "slice_normalize", "solve_kuranishi", "strongify", "tensor_product", "transfer_mc", "validate",
]
