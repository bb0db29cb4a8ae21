import pytest

from crossbif.poincare import SectionSpec, demo_potential, libration_branch_scan

DEMO_E0 = 0.35
DEMO_RANGE = (-0.25, 0.3)


@pytest.fixture(scope="session")
def demo():
    return demo_potential(1.0, 1.2, 1.5)


@pytest.fixture(scope="session")
def demo_scan(demo):
    return libration_branch_scan(demo, DEMO_E0, DEMO_RANGE, 12, SectionSpec(0.0))
