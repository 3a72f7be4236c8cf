import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from moveris.channel import LinkPaths, PathGeometry, TrialGeometry, random_positions, sample_trial_geometry
from moveris.config import SystemConfig, trial_rng
from moveris.metrics import SolutionState

settings.register_profile("moveris", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("moveris")


def unit_rows(rng, K, M):
    v = rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_state(config: SystemConfig, rng: np.random.Generator, p=None, v=None) -> SolutionState:
    """Channels, positions and phases drawn at random; v random unit rows unless given."""
    paths = sample_trial_geometry(config, rng)
    A, d0 = config.region_side_m, config.min_spacing_m
    U = random_positions(config.num_bs_antennas, A, d0, rng)
    T = random_positions(config.num_ris_elements, A, d0, rng)
    theta = rng.uniform(0.0, 2.0 * np.pi, config.num_ris_elements)
    if p is None:
        p = config.pmax_vector * rng.uniform(0.2, 1.0, config.num_users)
    if v is None:
        v = unit_rows(rng, config.num_users, config.num_bs_antennas)
    return SolutionState.build(v, p, theta, U, T, paths, config.noise_watt)


def geometry(kappas) -> PathGeometry:
    kappas = np.atleast_2d(np.asarray(kappas, dtype=float))
    L = len(kappas)
    return PathGeometry(np.zeros(L), np.zeros(L), kappas)


def link(rx_kappas, response, tx_kappas=None) -> LinkPaths:
    tx = None if tx_kappas is None else geometry(tx_kappas)
    return LinkPaths(tx, geometry(rx_kappas), np.asarray(response, dtype=complex), 1.0, 2.0)


def manual_paths(ris_bs: LinkPaths, user_bs, user_ris) -> TrialGeometry:
    K = len(user_bs)
    return TrialGeometry(ris_bs, tuple(user_bs), tuple(user_ris), np.zeros((K, 3)))


@pytest.fixture
def small_config():
    return SystemConfig(num_bs_antennas=4, num_ris_elements=8, num_users=3, num_paths=2)


@pytest.fixture
def desk_config():
    return SystemConfig(num_bs_antennas=4, num_ris_elements=16, num_users=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_state(small_config, rng):
    return random_state(small_config, rng)


__all__ = ["random_state", "unit_rows", "geometry", "link", "manual_paths", "trial_rng"]
