"""Mutually exciting point-process model of tick-by-tick prices."""

__version__ = "0.1.0"

from .analytics import (
    CovarianceCoefficients,
    SignaturePlotParams1D,
    covariance_at_scale,
    covariance_coefficients,
    covariance_density_1d,
    diffusive_covariance,
    epps_asymptote,
    epps_curve,
    epps_slope,
    leadlag_delta,
    signature_plot_1d,
    symmetric_covariance,
    volatility_ratio,
)
from .curves import Curve, parse_tau_grid, tau_grid
from .empirics import (
    aggregate_days,
    realized_cross_covariance,
    realized_epps,
    realized_leadlag,
    realized_signature_plot,
    sample_increments,
)
from .estimation import FitResult, fit_mle, fit_regression, log_likelihood
from .ingest import SessionSpec, TickRecord, parse_ticks, to_event_logs
from .model import (
    BivariateParams,
    EventLog,
    ExpKernel,
    PricePath,
    UnivariateParams,
    intensity_at,
    kernel_eval,
    mean_intensities,
    price_path,
    stability_check,
)
from .simulation import read_event_log_csv, simulate, simulate_days, write_event_log_csv
