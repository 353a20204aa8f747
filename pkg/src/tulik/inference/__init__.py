from .baseline import solve_mu_bisection, solve_mu_network, solve_mu_time_only
from .fields import (barrier_gradient, barrier_value, gd_field, gd_field_network, project_box,
                     smoothness_gradient, smoothness_operator, smoothness_penalty,
                      stationary_fields, vi_field,
                     vi_field_network)
from .lowrank import low_rank_truncate, middle_chunk
from .train import FitReport, TrainConfig, mean_nll, train
