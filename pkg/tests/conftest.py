import numpy as np
import pytest

from mixeddg import build_face_topology, build_uniform_tri, case_2d_poly
from mixeddg.forms import StabilizationParams


@pytest.fixture(scope="session")
def case2d():
    return case_2d_poly()


@pytest.fixture(scope="session")
def two_tri(case2d):
    mesh = build_uniform_tri(1, case2d.box)
    return mesh, build_face_topology(mesh)


@pytest.fixture
def rng():
    return np.random.RandomState(1234)


def stab_hinv_h():
    return StabilizationParams(alpha1=-1.0, alpha2=0.0, beta1=1.0, beta2=0.0)
