"""Statistical primitives and the validation/counterfactual studies."""
from .stats import (
    CorrelationReport,
    CostReport,
    binomial_sign_test,
    bootstrap_mean_difference,
    flag_rule_false_positive_rate,
    pearson,
    spearman,
    wilcoxon_signed_rank,
)
from .studies import (
    FULL_SCALE_REFERENCE,
    beta_grid_search,
    file_spread_counterfactual,
    main_contributors,
    probability_correction_test,
    project_correlation_study,
    table1_report,
    token_swap_cost,
    yy_binning_validation,
)

__all__ = [
    "CorrelationReport",
    "CostReport",
    "binomial_sign_test",
    "bootstrap_mean_difference",
    "flag_rule_false_positive_rate",
    "pearson",
    "spearman",
    "wilcoxon_signed_rank",
    "FULL_SCALE_REFERENCE",
    "beta_grid_search",
    "file_spread_counterfactual",
    "main_contributors",
    "probability_correction_test",
    "project_correlation_study",
    "table1_report",
    "token_swap_cost",
    "yy_binning_validation",
]
