"""Centralized numerical tolerances and defaults."""
from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    on_space: float = 1e-12          # embedding residual accepted for input points
    tangent: float = 1e-12           # normal component of a tangent vector
    unit: float = 1e-12              # | |v| - 1 | for unit vectors
    fiber_constancy: float = 1e-10   # basic functions along fibers
    rank_rel: float = 1e-8           # relative singular-value cutoff for ranks
    rank_ambiguity: float = 10.0     # factor around rank_rel treated as inconclusive
    root_bisect: float = 1e-10       # focal root localization
    kernel_rel: float = 1e-7         # relative cutoff for focal multiplicity
    root_merge: float = 1e-8         # clustered focal roots are merged
    window_edge: float = 1e-6        # roots this close to the window edge warn
    tail_fit: float = 1e-3           # maximal residual of the affine tail model
    min_pairs: int = 6               # focal pairs required in a window
    fd_step: float = 1e-4            # chart finite differences
    distance_refine: float = 1e-10   # golden-section tolerance on fiber distances
    ode_rtol: float = 1e-12
    ode_atol: float = 1e-13
    degree_cap: int = 12

    def with_(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT = Tolerances()
DEFAULT_SEED = 20240917
DEFAULT_WINDOW = 20.0
