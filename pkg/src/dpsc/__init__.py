"""Differentially private spatial crowdsourcing with historical-data learning.

Build a private spatial decomposition of worker locations, grow geocast
regions for tasks on it, and score those regions against ground truth.
"""
from .dp import BudgetCharge, BudgetLedger, PrivacyBudget, RandomStream, laplace_sample, noisy_value
from .geocast import (
    GeocastRegion, ScoreMaps, Task, acceptance_rate, build_gr_greedy_utility, build_gr_nonprivate,
    build_gr_rht, cell_score, cell_utility, combine_utility, find_lgr,
)
from .geometry import Circle, Point, Rect, distance, min_enclosing_circle
from .psd import (
    PSD, Partition, PeriodizedDataset, build_psd_gdy, build_psd_ggr, build_psd_rht,
    refresh_realtime_counts,
)

__version__ = "0.1.0"
