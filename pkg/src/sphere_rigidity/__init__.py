"""Numerical verification, at desk scale, of the quantitative rigidity of
degree-1 conformal maps of the 2-sphere: every admissible map is close, in
gradient distance, to some Moebius transformation, with the distance
controlled by a universal multiple of its conformal deficit."""

from .errors import (CenteringError, DegenerateMapError, GenerationError,
                     OutOfRegimeError, PoleError, RepresentationError,
                     ResolutionError, SphereRigidityError)
from .grid import ScalarField, SphereGrid, VectorField, build_grid, mean
from .harmonics import (SHExpansion, basis_field, evaluate_expansion,
                        laplace_eigencheck, max_k_for_grid, project,
                        sh_analyze, sh_synthesize, tangential_gradient)
from .maps import (SphereMap, deficit, degree, dirichlet_energy,
                   gradient_distance_sq, identity_map, normalize_to_sphere,
                   read_map, reflect, write_map)
from .moebius import (CenteringResult, MoebiusTransform, apply, as_map,
                      center_map, compose, dilate, homotopy_F,
                      identity_transform, inverse, parse_transform_line,
                      precompose, pure_dilation, pure_rotation,
                      random_moebius, stereo, stereo_inv, transform_line)
from .rigidity import (PolarData, RigidityReport, analyze, best_moebius,
                       cubic_term, degree_identity_residual,
                       linear_coefficient, linear_coefficient_sh,
                       poincare_gap_check, polar_decompose, qv3,
                       rigidity_constants, w_field, wente_check)
from .experiments import (ExperimentConfig, FAMILIES, SweepRow, SweepResult,
                          convergence_study, generate, random_band_field,
                          sweep)

__version__ = "0.1.0"
