import numpy as np
import pytest

from sasakian_reduction import catalog, cone, reduction


@pytest.fixture(scope="session")
def s3():
    return catalog.make_sphere(1)


@pytest.fixture(scope="session")
def s5():
    return catalog.make_sphere(2)


@pytest.fixture(scope="session")
def t3():
    return catalog.get_entry("t3-flat").build_data()


@pytest.fixture(scope="session")
def s3_perturbed():
    return catalog.get_entry("s3-perturbed").build_data()


@pytest.fixture(scope="session")
def s3_cone(s3):
    return cone.build_cone(s3)


@pytest.fixture(scope="session")
def s5_cone(s5):
    return cone.build_cone(s5)


@pytest.fixture(scope="session")
def s3_action(s3):
    return catalog.make_circle_action(s3, [1, -1])


@pytest.fixture(scope="session")
def s5_action(s5):
    return catalog.make_circle_action(s5, [1, 1, -2])


@pytest.fixture(scope="session")
def s3_center(s3_cone, s3_action):
    return reduction.project_to_level_set(s3_cone, s3_action, np.array([0.6, 1.0, 2.0]))


@pytest.fixture(scope="session")
def s5_quotient(s5_cone, s5_action):
    """Five S5 slice-chart reports, shared by the reduction and acceptance tests."""
    return reduction.verify_quotient_sasakian(s5_cone, s5_action, n_charts=5, samples=20, seed=0)


def by_name(reports):
    return {r.check_name: r for r in reports}
