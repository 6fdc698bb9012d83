"""Shared fixtures.

Catalog entries are immutable singletons; the solved symmetry spaces are
expensive, so one session-wide cache hands them to every test that needs one.
"""

import pytest
from hypothesis import HealthCheck, settings

from sdesym import ansatz, catalog

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def bm1d():
    return catalog.get_model("bm1d")


@pytest.fixture(scope="session")
def ou():
    return catalog.get_model("ou")


@pytest.fixture(scope="session")
def cir():
    return catalog.get_model("cir")


@pytest.fixture(scope="session")
def bm2d():
    return catalog.get_model("bm2d")


@pytest.fixture(scope="session")
def spaces():
    """Memoized access to solved symmetry spaces: spaces(model, mode)."""
    solved = {}

    def get(model: str, mode: str):
        key = (model, mode)
        if key not in solved:
            entry = catalog.get_model(model)
            solved[key] = ansatz.solve(entry.sde, entry.ansatz_basis(mode), mode)
        return solved[key]

    return get
