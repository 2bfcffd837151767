import pytest

import conmet

BOUNDS = ((-1.0, 1.0), (-1.0, 1.0))


@pytest.fixture(scope="session")
def linear():
    """Built-in linear system with its exact metric and rhs matrix."""
    return conmet.linear_example()


@pytest.fixture(scope="session")
def kernel():
    return conmet.wendland_c8(0.9)


def _solve_on(system, kernel, spacing, rhs):
    points = conmet.make_grid(conmet.GridSpec(BOUNDS, spacing))
    cset, gram = conmet.assemble(system, kernel, points)
    return conmet.solve(gram, rhs, cset, kernel)


@pytest.fixture(scope="session")
def solved_quarter(linear, kernel):
    """Linear example solved on the alpha = 1/4 grid (81 points)."""
    system, _, rhs = linear
    return _solve_on(system, kernel, 0.25, rhs)


@pytest.fixture(scope="session")
def solved_eighth(linear, kernel):
    """Linear example solved on the alpha = 1/8 grid (289 points)."""
    system, _, rhs = linear
    return _solve_on(system, kernel, 0.125, rhs)
