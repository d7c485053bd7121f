"""Hard-label ray-search attacks guided by surrogate priors, with the estimator theory behind them."""

from .attack import AttackConfig, AttackTrace, run_attack
from .estimators import EstimatorConfig
from .modelzoo import HardLabelOracle, QueryLedger
from .rayoracle import AttackGoal

__all__ = ["AttackConfig", "AttackGoal", "AttackTrace", "EstimatorConfig", "HardLabelOracle", "QueryLedger",
           "run_attack"]
__version__ = "0.1.0"
