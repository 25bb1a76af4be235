"""Deep-LMS crosstalk cancellation for vectored upstream DSL, with its convergence theory."""

from .cancelers import (AveragerState, DeepLmsConfig, DeepLmsState, LmsState, averaged_filter,
                        averager_reset, avg_deep_lms_step, choose_mu, compute_Dtilde,
                        deep_lms_init, deep_lms_step, lms_init, lms_step, update_trigger)
from .channel_model import (CableConfig, ToneChannel, dominance_ratio, generate_cable,
                            load_channels, make_near_far, save_channels, stack_channels)
from .errors import (ChannelFileError, DeepLmsError, DivergentF, DomainError,
                     SingularCovariance, ZeroDiagonal)
from .experiment import ExperimentSpec, TraceRecord, run_experiment, simulate
from .metrics import effective_channel, input_sinr, output_mse, output_sinr, rate, to_db
from .signal_engine import (PilotSource, SecondOrderStats, exact_stats, fourth_moment_identity,
                            fourth_moment_mc, received_signal, streams)
from .snapshot import load_snapshot, save_snapshot
from .suites import run_bound_suite, run_oracle_suite
from .theory import (BoundReport, bound_report, build_F, eta_inf_bound, f_norm1_closed_form,
                     mc_coefficient_mse, mse_recursion_init, mse_recursion_step,
                     theorem1_bound, wiener)

__version__ = "0.1.0"
