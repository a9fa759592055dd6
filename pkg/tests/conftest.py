"""Shared fixtures: the three reference systems used across the suite.

Construction mirrors the CLI path (same sampler tags and sample counts) so
the constants here agree with what `levykinetics estimate-constants` prints
for the shipped configs.
"""

import numpy as np
import pytest

from levykinetics.dynamics import SystemSpec
from levykinetics.lyapunov import (
    LyapunovModel,
    derive_case2_params,
    estimate_case1_constants,
)
from levykinetics.noise import NoiseSpec
from levykinetics.potentials import (
    Confinement,
    LennardJones,
    LogCoulomb,
    PotentialModel,
    check_HV_HK,
)
from levykinetics.rng import RngStream
from levykinetics.sampling import make_configuration_sampler, make_state_sampler

SEED = 20260816


@pytest.fixture(scope="session")
def lj_model():
    return PotentialModel(
        n_particles=2,
        dim=3,
        confinement=Confinement(c0=1.0, exponent=2.0),
        interaction=LennardJones(c1=1.0, c2=1.0),
        normalization="pairs",
    )


@pytest.fixture(scope="session")
def lj_constants(lj_model):
    sampler = make_configuration_sampler(2, 3, RngStream(SEED).child("case1-constants"))
    return estimate_case1_constants(lj_model, 1.0, sampler, n=4000)


@pytest.fixture(scope="session")
def lj_lyap(lj_model, lj_constants):
    return LyapunovModel(
        potential=lj_model, gamma=1.0, theta=0.7, min_alpha=1.5, case1=lj_constants
    )


@pytest.fixture(scope="session")
def lj_system(lj_model):
    return SystemSpec(
        n_particles=2, dim=3, gamma=1.0, potential=lj_model,
        noise=NoiseSpec(per_particle_alpha=(1.5, 1.5)),
    )


@pytest.fixture(scope="session")
def log_coulomb_model():
    return PotentialModel(
        n_particles=3,
        dim=2,
        confinement=Confinement(c0=1.0, exponent=2.0),
        interaction=LogCoulomb(),
        normalization="mean_field",
    )


@pytest.fixture(scope="session")
def hvhk_report(log_coulomb_model):
    sampler = make_configuration_sampler(3, 2, RngStream(SEED).child("case2-check"))
    return check_HV_HK(log_coulomb_model, sampler, n=4000)


@pytest.fixture(scope="session")
def case2_params(log_coulomb_model, hvhk_report):
    sampler = make_state_sampler(log_coulomb_model, RngStream(SEED).child("case2-constants"))
    return derive_case2_params(hvhk_report, 1.0, sampler, n=4000)


@pytest.fixture(scope="session")
def lc_lyap(log_coulomb_model, case2_params):
    return LyapunovModel(
        potential=log_coulomb_model, gamma=1.0, theta=0.5, min_alpha=1.2,
        case2=case2_params,
    )


@pytest.fixture(scope="session")
def lc_system(log_coulomb_model):
    return SystemSpec(
        n_particles=3, dim=2, gamma=1.0, potential=log_coulomb_model,
        noise=NoiseSpec(per_particle_alpha=(1.2, 1.2, 1.2)),
    )


@pytest.fixture(scope="session")
def harmonic_model():
    return PotentialModel(n_particles=1, dim=1, confinement=Confinement(1.0, 2.0))


@pytest.fixture(scope="session")
def harmonic_lyap(harmonic_model):
    sampler = make_configuration_sampler(1, 1, RngStream(7).child("c"))
    consts = estimate_case1_constants(harmonic_model, 1.0, sampler, n=2000)
    return LyapunovModel(
        potential=harmonic_model, gamma=1.0, theta=0.7, min_alpha=1.5, case1=consts
    )


def stratified_states(model, seed, n):
    """Positions/velocities covering tight pairs, bulk clouds and far halos."""
    xs, vs = make_state_sampler(model, RngStream(seed).child("strata"))(n)
    return np.asarray(xs), np.asarray(vs)
