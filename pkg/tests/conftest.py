"""Shared fixtures: small meshes on the builtin networks.

Session scope keeps the assembly cost out of individual tests; none of the
fixtures are mutated by tests (FemSystem and DescriptorSystem are frozen).
"""

import pytest

from pipewave.descriptor import from_fem
from pipewave.fem import Mesh, assemble
from pipewave.network import builtin_scenario


@pytest.fixture(scope="session")
def tp1_fem():
    net = builtin_scenario("tp1")
    return assemble(net, Mesh.uniform(net, 20))


@pytest.fixture(scope="session")
def tp2_fem():
    net = builtin_scenario("tp2")
    return assemble(net, Mesh.uniform(net, 10))


@pytest.fixture(scope="session")
def tp3_fem():
    net = builtin_scenario("tp3")
    return assemble(net, Mesh.uniform(net, 8))


@pytest.fixture(scope="session")
def tp1_full(tp1_fem):
    return from_fem(tp1_fem)


@pytest.fixture(scope="session")
def tp2_full(tp2_fem):
    return from_fem(tp2_fem)


@pytest.fixture(scope="session")
def tp3_full(tp3_fem):
    return from_fem(tp3_fem)
