"""Discrete-time point-process models for events with uncertain timestamps."""
from .errors import (ArgumentError, DomainError, FormatError, GenerationError,
                     InfeasibleParameterError, NoRootError, NumericError, TulikError,
                     UnboundedError)
from .likelihood import (WindowedEvents, link_Phi, link_phi, loglik_batch, loglik_network,
                         loglik_unit, loglik_windowed)
from .model import (IntensityRecord, Kernel, ModelParams, TimeGrid, Trajectory,
                    discretize_kernel, history_vector, intensities, intensity, intensity_record)
from .predict import (classification_metrics, predict_interval_network,
                      predict_interval_time_only, recovery_report, relative_errors,
                      step_probabilities, survival_probability)
from .simulate import (PRESETS, make_preset, simulate_dataset, simulate_network,
                       simulate_time_only)

__version__ = "0.1.0"
