"""MILP encodings, LP file output, external solver backends and search."""
from .backends import (SolveOutcome, SolverBackendConfig, SolverError, cbc_backend,
                       default_backend, highs_backend, run_backend)
from .encode import (EncodingParams, encode_consistency, encode_decision,
                     encode_delta_variant, encode_max_step)
from .instance import MilpInstance
from .lpformat import emit_lp
from .search import (DecisionResult, EncodingSoundnessError, decode_solution,
                     solve_decision, solve_max_magnitude)
