import numpy as np
import pytest

from memodiff import mesh_fem


@pytest.fixture(scope="session")
def fem32():
    """Unit interval, 32 cells, a0 = a1 = 1."""
    mesh = mesh_fem.build_mesh(1.0, 32)
    return mesh_fem.assemble(
        mesh, mesh_fem.CoefficientField.constant(1.0), mesh_fem.CoefficientField.constant(1.0)
    )


@pytest.fixture(scope="session")
def fem32_nomem():
    """Unit interval, 32 cells, a1 = 0 (no memory form)."""
    mesh = mesh_fem.build_mesh(1.0, 32)
    return mesh_fem.assemble(
        mesh, mesh_fem.CoefficientField.constant(1.0), mesh_fem.CoefficientField.constant(0.0)
    )


@pytest.fixture(scope="session")
def eigenmode32(fem32):
    return np.sin(np.pi * fem32.mesh.interior_nodes)
