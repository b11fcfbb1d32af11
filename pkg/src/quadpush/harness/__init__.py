from .scenario import ConfigError, Controller, ScenarioConfig, Task, TaskSpec, load_scenario, make_reference
from .runner import COLUMNS, Metrics, Outcome, RunResult, run_scenario
from .report import Comparison, compare, compare_results, hierarchical_failures, read_csv, write_csv

__all__ = ["ConfigError", "Controller", "ScenarioConfig", "Task", "TaskSpec", "load_scenario",
           "make_reference", "COLUMNS", "Metrics", "Outcome", "RunResult", "run_scenario",
           "Comparison", "compare", "compare_results", "hierarchical_failures", "read_csv", "write_csv"]
