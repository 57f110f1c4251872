"""Fuzzy difference-in-differences: Wald-DID, Wald-TC and Wald-CIC estimators,
partial-identification bounds, multi-group aggregation, placebo tests and
Monte Carlo tooling."""
__version__ = "0.1.0"

from .bounds import BoundsResult, cic_bounds, defective_mass_report, tc_bounds
from .dataset import CellTable, Dataset, build_cells, check_design, load_table
from .errors import (
    BootstrapError, BoundsError, ConfigError, DensityFloorError, DesignError, FuzzyDidError,
    MissingCellError, SchemaError, SupergroupError, UnboundedSupportError, UnstableControlError,
    WeakDesignError,
)
from .estimators import Estimate, did_decomposition, lqte, switcher_cdf, wald_cic, wald_did, wald_tc
from .inference import (
    BootstrapConfig, bootstrap, influence_cic, influence_did, influence_lqte, influence_tc,
)
from .multigroup import SupergroupMap, acr_weights, aggregate, classify_supergroups, split_sample
from .placebo import placebo_report
from .simulate import DgpConfig, generate, monte_carlo, truth

__all__ = [
    "BootstrapConfig", "BootstrapError", "BoundsError", "BoundsResult", "CellTable", "ConfigError",
    "Dataset", "DensityFloorError", "DesignError", "DgpConfig", "Estimate", "FuzzyDidError",
    "MissingCellError", "SchemaError", "SupergroupError", "SupergroupMap", "UnboundedSupportError",
    "UnstableControlError", "WeakDesignError", "acr_weights", "aggregate", "bootstrap", "build_cells",
    "check_design", "cic_bounds", "classify_supergroups", "defective_mass_report", "did_decomposition",
    "generate", "influence_cic", "influence_did", "influence_lqte", "influence_tc", "load_table", "lqte",
    "monte_carlo", "placebo_report", "split_sample", "switcher_cdf", "tc_bounds", "truth", "wald_cic",
    "wald_did", "wald_tc",
]
