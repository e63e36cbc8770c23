"""Compound twin beams: simulation, reconstruction and analysis toolkit."""

from .core import (PHOTON, PHOTOCOUNT, JointDist, MarginalDist, TwbParams,
                   convolve_joint, joint_twb, mandel_rice, self_convolve)
from .detection import (DetectionMatrix, DetectorSpec, compound_photocounts,
                        conditional_photon_dist, detection_matrix,
                        forward_photocounts, genuine_pnrd_model)
from .ingest import (GroupingPolicy, JointHistogram, averaged_correlation,
                     conditioned_sequences, group_histogram, grouped_counts,
                     window_correlation)
from .metrology import (PostSelectionResult, PrecisionReport,
                        effective_efficiency, effective_efficiency_model,
                        fano_model, nrp_model, optimal_postselection,
                        precision_improvement, relative_error)
from .moments import (MomentTable, NcdResult, bootstrap_statistic,
                      fano_nrp_cov, from_intensity_moments, moments, ncd,
                      nci_value, to_intensity_moments, to_s_ordered)
from .quasidist import (IntensityGrid, grid_moments, grid_normalization,
                        quasi_distribution)
from .reconstruct import (EmConfig, EmResult, conditional_histogram,
                          em_conditional, em_joint)
from .simulate import (ClickStream, PumpCorrelation, pump_moment_model,
                       sample_stream)

__version__ = "0.1.0"
