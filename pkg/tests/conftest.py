import time

import pytest

from equishoot.shooting import (
    find_infty_figure,
    find_t4_corner,
    find_torus_corner,
    iteration_ladder,
)


@pytest.fixture(scope="session")
def build_times():
    """Wall-clock seconds of the expensive session builds, by key."""
    return {}


def _timed(build_times, key, fn):
    t0 = time.perf_counter()
    value = fn()
    build_times[key] = time.perf_counter() - t0
    return value


@pytest.fixture(scope="session")
def corner_n2(build_times):
    return _timed(build_times, "corner_n2", lambda: find_torus_corner(2))


@pytest.fixture(scope="session")
def corner_n3(build_times):
    return _timed(build_times, "corner_n3", lambda: find_torus_corner(3))


@pytest.fixture(scope="session")
def t4_corner(build_times):
    return _timed(build_times, "t4_corner", lambda: find_t4_corner())


@pytest.fixture(scope="session")
def ladder_n2(build_times):
    # K = 4 so the decay example is covered; acceptance slices the first 3
    return _timed(build_times, "ladder_n2", lambda: iteration_ladder(2, 4))


@pytest.fixture(scope="session")
def ladder_n3(build_times):
    return _timed(build_times, "ladder_n3", lambda: iteration_ladder(3, 3))


@pytest.fixture(scope="session")
def infty_n2(build_times):
    return _timed(build_times, "infty_n2", lambda: find_infty_figure(2))


@pytest.fixture(scope="session")
def infty_n3(build_times):
    return _timed(build_times, "infty_n3", lambda: find_infty_figure(3))
