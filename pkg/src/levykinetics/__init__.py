"""Sampling and numerical certification for kinetic Langevin dynamics
driven by heavy-tailed stable noise under singular interaction potentials.

Submodules: rng, noise, potentials, sampling, lyapunov, generator,
dynamics, ergodicity, config, reports, cli.

Re-exports are lazy (PEP 562): the CLI must be able to apply thread limits
from flags/environment before numpy is first imported, so importing this
package must stay cheap.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "RngStream": "rng",
    "NoiseSpec": "noise",
    "sample_stable_1d": "noise",
    "sample_isotropic_stable": "noise",
    "sample_subordinator_increment": "noise",
    "empirical_char_function": "noise",
    "Confinement": "potentials",
    "LennardJones": "potentials",
    "PowerLaw": "potentials",
    "Coulomb": "potentials",
    "LogCoulomb": "potentials",
    "PotentialModel": "potentials",
    "min_pair_distance": "potentials",
    "check_HU": "potentials",
    "check_HV_HK": "potentials",
    "make_configuration_sampler": "sampling",
    "make_state_sampler": "sampling",
    "drift_scan_states": "sampling",
    "Case1Constants": "lyapunov",
    "Case2Params": "lyapunov",
    "LyapunovModel": "lyapunov",
    "estimate_case1_constants": "lyapunov",
    "derive_case2_params": "lyapunov",
    "QuadratureSpec": "generator",
    "levy_constant": "generator",
    "jump_integral": "generator",
    "small_jump_integral": "generator",
    "apply_generator": "generator",
    "verify_drift": "generator",
    "DriftReport": "generator",
    "PhaseState": "dynamics",
    "SystemSpec": "dynamics",
    "TrajectoryBatch": "dynamics",
    "simulate": "dynamics",
    "synthesize_control": "dynamics",
    "integrate_controlled": "dynamics",
    "DecayCurve": "ergodicity",
    "empirical_moment": "ergodicity",
    "weighted_tv_estimate": "ergodicity",
    "fit_decay_rate": "ergodicity",
    "gibbs_oracle_check": "ergodicity",
    "two_start_tv_curve": "ergodicity",
    "RunConfig": "config",
    "load_config": "config",
    "validate_config": "config",
    "DomainError": "errors",
    "UnsupportedModelError": "errors",
    "EstimationError": "errors",
    "PlanningError": "errors",
    "SimulationStuckError": "errors",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    try:
        module_name = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}") from None
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
