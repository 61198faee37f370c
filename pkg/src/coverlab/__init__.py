"""coverlab: desk-scale experiments on random covering sets of [0,1].

Modules:
  geometry  - dyadic-cell bitmask sets and box-counting regression
  measures  - Lebesgue, Cantor cascade, and gap-midpoint atomic measures
  spectra   - spectrum curves, 1-Lipschitz hulls, dimension predictions
  hitting   - hitting operator, divergence classifier, fixed-point iteration
  covering  - Monte Carlo coverage fields, dimension estimates, hit tests
  cli       - the `coverlab` command
"""

from ._kernels import BACKEND as kernel_backend
from .geometry import (DimensionEstimate, GridSet, box_dimension, cell_count,
                       count_boxes, dilate_cells, empty_set, full_set,
                       intersect, is_empty, make_grid_set, neighborhood, union)
from .measures import (BlockSchedule, ConstructionTree, LocalDimCurve,
                       MeasureModel, cantor_theta, cdf, lebesgue_measure,
                       local_dim_curve, mass_interval, mass_of_gridset,
                       mu_one, mu_two, sample)
from .spectra import (PredictedDimension, SpectrumCurve, analytic_spectra,
                      hull_by_relaxation, lipschitz_hull, predicted_f,
                      tilde_transform)
from .hitting import (CompactFamily, DivergencePolicy, IterationTrace,
                      RadiusSchedule, SeriesVerdict, build_ordinal_tower,
                      classify, hitting_operator, iterate_operator,
                      ordinal_tower_family, s2_exponent, series_checkpoints)
from .covering import (CoverageField, DichotomyResult, HitReport,
                       dichotomy_experiment, dimension_estimate, hit_test,
                       simulate)

__version__ = "0.1.0"
