"""Moteur de simulation : scénarios, génération de données et études de réplication"""

from lpsmc.simulation.generator import (
    SimulatedData,
    generate_dataset,
    plateau_fraction,
    scenario_rates,
    truncated_exponential_draw,
    weibull_latency_draw,
)
from lpsmc.simulation.scenarios import SCENARIOS, ScenarioConfig, get_scenario
from lpsmc.simulation.study import (
    StudySummary,
    ase_incidence,
    coverage_survival,
    incidence_ase,
    run_study,
)

__all__ = [
    "SCENARIOS",
    "ScenarioConfig",
    "get_scenario",
    "SimulatedData",
    "generate_dataset",
    "weibull_latency_draw",
    "truncated_exponential_draw",
    "plateau_fraction",
    "scenario_rates",
    "StudySummary",
    "run_study",
    "ase_incidence",
    "incidence_ase",
    "coverage_survival",
]
