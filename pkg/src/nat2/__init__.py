"""Neighborhood-assisted Hotelling T^2 tests for high-dimensional means."""

__version__ = "0.1.0"

from .core import (
    AR1,
    BlockDiag,
    EqualCorr,
    Explicit,
    NumericalError,
    RandomSparse,
    SingularMatrixError,
    materialize,
    matrix_power,
    model_from_letter,
)
from .ksel import SelectionConfig, SelectionResult, snr_estimate, stability_select
from .natest import (
    TestReport,
    na_statistic,
    na_statistic_regression_form,
    population_variance,
    run_test,
    variance_estimator,
)
from .oracle import (
    OracleSpec,
    eigenblock_ordering_check,
    oracle_power,
    oracle_snr,
    oracle_statistic,
    spectral_summary,
)
from .precision import (
    BandedPrecision,
    PopulationBandedPrecision,
    apply_transform,
    assemble,
    estimate_banded_precision,
    population_banded_precision,
)
from .simgen import ScenarioConfig, ScenarioResult, SignalSpec, power_curve, run_scenario, sample_dataset
from .twosample import run_two_sample_test, transform
