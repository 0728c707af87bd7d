import math

import numpy as np
import pytest

from mcdcft.domains import Circle, CircularDomain


@pytest.fixture(scope="session")
def annulus():
    """Concentric annulus model with modulus r = 1 (inner radius e^{-1})."""
    return CircularDomain((Circle(0j, math.exp(-1.0)),))


@pytest.fixture(scope="session")
def genus2():
    return CircularDomain((Circle(-0.45 + 0j, 0.12), Circle(0.45 + 0.1j, 0.12)))


@pytest.fixture(scope="session")
def annulus_pd(annulus):
    from mcdcft.special import build_period_data

    return build_period_data(annulus)


@pytest.fixture(scope="session")
def genus2_pd(genus2):
    from mcdcft.special import build_period_data

    return build_period_data(genus2)


@pytest.fixture(scope="session")
def annulus_map(annulus):
    from mcdcft.loewner import CanonicalMap

    return CanonicalMap(annulus, 1.0, max_level=12)


@pytest.fixture(scope="session")
def genus2_map(genus2):
    from mcdcft.loewner import CanonicalMap

    return CanonicalMap(genus2, 1j, max_level=8)


def annulus_green_oracle(zeta, z, r=1.0, K=200):
    """Closed-form annulus Dirichlet Green's function, truncated at K factors."""
    k = np.arange(1, K + 1)
    q = np.exp(-2 * r * k)
    prod = np.prod((1 - q * zeta / z) * (1 - q * z / zeta)
                   / ((1 - q * zeta * np.conj(z)) * (1 - q / (zeta * np.conj(z)))))
    val = -np.log(abs((z - zeta) / (1 - zeta * np.conj(z)) * prod))
    return val - np.log(abs(zeta)) * np.log(abs(z)) / r
