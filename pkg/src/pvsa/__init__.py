"""Voltage sensitivity of unbalanced radial feeders to power changes at actor buses.

Modules
-------
network     three-phase impedance model, radial topology, shared-path impedance
feeder_io   text formats for feeders and scenarios, bundled IEEE 37/123 data
loadflow    backward/forward sweep load flow (ground truth)
vsa         closed-form voltage change and its error bound
stochastic  Gaussian power changes -> Nakagami |dV|, Monte-Carlo checks
cli         ``pvsa`` command line
"""

__version__ = "0.1.0"

from .errors import ComputeError, InputError, PVSAError  # noqa: E402
from .feeder_io import load_feeder, load_scenario  # noqa: E402
from .loadflow import SolveSettings, delta_v_oracle, solve  # noqa: E402
from .network import FeederGraph, LineSegment, LoadSpec, NodeVoltage, Phase, PhaseImpedanceMatrix  # noqa: E402
from .network import kron_reduce, path_edges, shared_path_impedance, validate  # noqa: E402
from .stochastic import (  # noqa: E402
    assemble_covariance,
    build_sensitivity_vectors,
    fit_nakagami,
    gamma_params,
    js_distance,
    mc_distribution,
    moments,
    nakagami_params,
    nakagami_pdf,
    regularized_lower_incomplete_gamma,
    sample_power_changes,
    violation_probability,
)
from .vsa import ActorPerturbation, delta_v_multi, delta_v_single, error_bound, error_bound_multi  # noqa: E402

__all__ = [
    "ActorPerturbation", "ComputeError", "FeederGraph", "InputError", "LineSegment", "LoadSpec", "NodeVoltage",
    "PVSAError", "Phase", "PhaseImpedanceMatrix", "SolveSettings", "assemble_covariance", "build_sensitivity_vectors",
    "delta_v_multi", "delta_v_oracle", "delta_v_single", "error_bound", "error_bound_multi", "fit_nakagami",
    "gamma_params", "js_distance", "kron_reduce", "load_feeder", "load_scenario", "mc_distribution", "moments",
    "nakagami_params", "nakagami_pdf", "path_edges", "regularized_lower_incomplete_gamma", "sample_power_changes",
    "shared_path_impedance", "solve", "validate", "violation_probability",
]
