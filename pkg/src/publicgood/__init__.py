"""Decentralized price adjustment for financing a public good."""

from .agent import AgentContext, NumericalFailure, solve_agent
from .model import (AgentResponse, AgentSpec, DualState, Scenario, StepsizeSchedule,
                    UtilitySpec, ValidatedScenario, ValidationError, upsilon_bound,
                    validate_scenario)
from .oracle import OracleResult, centralized_solve
from .sim import RunResult, TerminationCriteria, Trace, run

__all__ = [
    "AgentContext", "AgentResponse", "AgentSpec", "DualState", "NumericalFailure",
    "OracleResult", "RunResult", "Scenario", "StepsizeSchedule", "TerminationCriteria",
    "Trace", "UtilitySpec", "ValidatedScenario", "ValidationError", "centralized_solve",
    "run", "solve_agent", "upsilon_bound", "validate_scenario",
]
