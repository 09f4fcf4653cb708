"""Exact computations in Lipschitz-free spaces over finite pointed metric
spaces, with certified norm-attainment perturbations."""
from .metric_core import PointedMetricSpace, analyze, validate
from .free_space import FreeVector, Molecule, free_norm
from .normed_targets import NormSpec
from .bpb_engine import LipschitzMap, lip_bpb_solve

__all__ = ["PointedMetricSpace", "analyze", "validate", "FreeVector", "Molecule", "free_norm", "NormSpec",
           "LipschitzMap", "lip_bpb_solve"]
