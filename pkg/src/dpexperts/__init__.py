"""Differentially private prediction with expert advice, measured by dynamic regret."""
from .experts import RegretTrace, dynamic_comparator, regret_finalize
from .harness import AggregateReport, ConfigError, RunConfig, audit_budget, load_config, run_batch, run_trial
from .learners import ResourceCapError, make_learner
from .mechanisms import AboveThreshold, BudgetLedger, PrivacyBudget, TreeCounter, report_noisy_argmin

__version__ = "0.1.0"

__all__ = [
    "AboveThreshold", "AggregateReport", "BudgetLedger", "ConfigError", "PrivacyBudget",
    "RegretTrace", "ResourceCapError", "RunConfig", "TreeCounter", "audit_budget",
    "dynamic_comparator", "load_config", "make_learner", "regret_finalize",
    "report_noisy_argmin", "run_batch", "run_trial",
]
