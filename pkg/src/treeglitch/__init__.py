"""Glitch detection and search for decision-tree ensembles."""
from .ensemble import (Ensemble, FeatureSpace, ModelError, Node, StructureError, Tree,
                       evaluate_ensemble, evaluate_tree, load_ensemble, save_ensemble)
from .glitch import GlitchTriple, Rejection, Shape, check_triple, magnitude
from .oracle import OracleResult, exhaustive_search, slice_profile
from .problem import SearchProblem

__version__ = "0.1.0"
