"""Streaming multiphase feeder state estimation.

Thin wrapper over the compiled core: fixed-point power flow, re-anchored
linear voltage models, Huber-robust measurement costs, and a first-order
prediction-correction tracker with its convergence certificate.
"""

import json as _json
from pathlib import Path as _Path

from ._ddse import (  # noqa: F401
    ConvergenceCertificate,
    FopcEstimator,
    LinearPowerFlowModel,
    MeasurementFrame,
    ModelError,
    NetworkModel,
    PowerFlowError,
    StateLayout,
    StepTiming,
    certify,
    huber,
    huber_curv,
    huber_grad,
    linearize,
    load_network,
    network_from_json,
    pack_state,
    pf_residual,
    run_scenario_json,
    solve_power_flow,
    stack_voltage,
    unstack_voltage,
)

__all__ = [
    "ConvergenceCertificate",
    "FopcEstimator",
    "LinearPowerFlowModel",
    "MeasurementFrame",
    "ModelError",
    "NetworkModel",
    "PowerFlowError",
    "StateLayout",
    "StepTiming",
    "certify",
    "huber",
    "huber_curv",
    "huber_grad",
    "linearize",
    "load_network",
    "network_from_json",
    "pack_state",
    "pf_residual",
    "run_scenario",
    "run_scenario_json",
    "solve_power_flow",
    "stack_voltage",
    "unstack_voltage",
]

__version__ = "0.1.0"


def run_scenario(scenario, base_dir=""):
    """Run an estimation scenario and return the summary as a dict.

    ``scenario`` may be a dict, a JSON string, or a path to a scenario
    file. Relative paths inside the scenario resolve against ``base_dir``
    (for a file input, its parent directory by default).
    """
    if isinstance(scenario, (str, _Path)) and _Path(scenario).is_file():
        path = _Path(scenario)
        text = path.read_text()
        base_dir = base_dir or str(path.parent)
    elif isinstance(scenario, dict):
        text = _json.dumps(scenario)
    else:
        text = str(scenario)
    return _json.loads(run_scenario_json(text, str(base_dir)))
