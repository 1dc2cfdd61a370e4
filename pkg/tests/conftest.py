import numpy as np
import pytest

from infersched import (
    ArProcessSpec,
    DelayLaw,
    DelayNetwork,
    ErrorSurface,
    build_error_surface,
)

PAPER_COEFFS = (0.0, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9)


@pytest.fixture(scope="session")
def paper_spec():
    return ArProcessSpec(PAPER_COEFFS, 0.01, 0.001)


@pytest.fixture(scope="session")
def paper_surface(paper_spec):
    return build_error_surface(paper_spec, 500, 10)


@pytest.fixture(scope="session")
def paper_surface_50(paper_spec):
    return build_error_surface(paper_spec, 50, 10)


@pytest.fixture(scope="session")
def small_surface():
    """AR(3) surface that converges well inside its grid."""
    return build_error_surface(ArProcessSpec((0.3, 0.1, 0.4), 0.5, 0.01), 40, 6)


def single_state_net(t_by_length, f_delay=1):
    """One delay state with deterministic delays; t_by_length[l-1] = T(l)."""
    laws = tuple(DelayLaw.point(t) for t in t_by_length)
    return DelayNetwork(np.array([[1.0]]), (laws,), (DelayLaw.point(f_delay),))


def linear_surface(delta_max, l_max=1, slope=1.0):
    """eps(age, l) = slope * age, same for every length."""
    col = slope * np.arange(delta_max + 1, dtype=float)
    return ErrorSurface(np.tile(col[:, None], (1, l_max)))


def table_surface(values):
    return ErrorSurface(np.asarray(values, dtype=float))
