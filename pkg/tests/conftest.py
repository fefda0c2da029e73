import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qgtensor.models import ParameterPoint, doubled_qwz_family, qwz_family
from qgtensor.qgt import Subspace

settings.register_profile(
    "default", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def qwz_matrix(kx, ky, m):
    """Two-band Bloch matrix written out independently of the package."""
    return np.sin(kx) * SX + np.sin(ky) * SY + (m + np.cos(kx) + np.cos(ky)) * SZ


def lower_projector(kx, ky, m):
    _, v = np.linalg.eigh(qwz_matrix(kx, ky, m))
    p = v[:, :1]
    return p @ p.conj().T


def oracle_trace_q(kx, ky, m, h=1e-5):
    """``Tr(P dP_mu dP_nu)`` with numpy eigh and central differences."""
    p = lower_projector(kx, ky, m)
    dx = (lower_projector(kx + h, ky, m) - lower_projector(kx - h, ky, m)) / (2 * h)
    dy = (lower_projector(kx, ky + h, m) - lower_projector(kx, ky - h, m)) / (2 * h)
    d = (dx, dy)
    return np.array([[np.trace(p @ d[a] @ d[b]) for b in range(2)] for a in range(2)])


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng, n, scale=1.0):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (z + z.conj().T) / 2


@pytest.fixture(scope="session")
def qwz():
    return qwz_family()


@pytest.fixture(scope="session")
def doubled():
    return doubled_qwz_family()


@pytest.fixture
def lower():
    return Subspace(0, 1)


@pytest.fixture
def lower_pair():
    return Subspace(0, 2)


@pytest.fixture
def generic_point():
    return ParameterPoint((1.0, 0.5), (1.0,))
