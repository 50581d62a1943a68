from .coverage import (ESTIMATORS, KM, MKM, MNA, NA, QUANTILES, CoverageReport, clopper_pearson,
                       coverage_study, run_replicate)
from .households import (CHAIN_BINOMIAL, MARGINAL, HouseholdAnalysis, NaturalHistory,
                         build_household_record, daily_hazard_for, household_analyze,
                         sar_forward_simulation, sensitivity_analysis, simulate_households,
                         synthetic_fixture, synthetic_layout)
from .presets import NATURAL_HISTORY_GRID, PRESETS, PRIMARY_HISTORY, Preset
