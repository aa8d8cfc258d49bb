import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kineticfv.mesh import Rect, build_delaunay, build_polygonal_dual, from_triangulation, perturbed_lattice, \
    periodic_dual_mesh, periodic_triangle_mesh, rectangle_tagger, structured_triangulation
from kineticfv.velocity import build_grid

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

UNIT = Rect(0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def unit_triangles():
    tri = structured_triangulation(UNIT, 6, 5, "/")
    return from_triangulation(tri, tagger=rectangle_tagger(UNIT))


@pytest.fixture(scope="session")
def dual_mesh():
    pts = perturbed_lattice(UNIT, 7, 7, 0.2, seed=4)
    return build_polygonal_dual(build_delaunay(pts, UNIT))


@pytest.fixture(scope="session")
def periodic_duals():
    dom = Rect(0.0, 2.0, 0.0, 2.0)
    return periodic_dual_mesh(perturbed_lattice(dom, 10, 10, 0.25, seed=1, cell_centred=True), dom)


@pytest.fixture(scope="session")
def periodic_tris():
    dom = Rect(0.0, 2.0, 0.0, 2.0)
    return periodic_triangle_mesh(perturbed_lattice(dom, 9, 9, 0.25, seed=2, cell_centred=True), dom)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(-8.0, 8.0, 16)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(-10.0, 10.0, 32)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Print and remember one pass/fail line, then fail the test if needed."""
    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
