"""Prevalence estimation that combines list experiments with direct questions."""

from .data import CellSummary, Dataset, ListDesign, RawRecord, Respondent, summarize_arrays, summarize_cells, validate
from .dgp import DgpParams, identification_oracle
from .estimators import (
    EstimateReport,
    Method,
    asymptotic_variance_combined,
    asymptotic_variance_standard,
    combined_estimate,
    direct_estimate,
    standard_list_estimate,
    variance_reduction,
)
from .placebo import PlaceboReport, PlaceboTest, fisher_combine, placebo_test_one, placebo_test_two
from .simulation import GridSpec, PowerCell, generate_dataset, power_test_one_grid, power_test_two

__version__ = "0.1.0"
