import numpy as np
import pytest

from minlag.generators import generate_mesh
from minlag.mesh import SimplicialPatch


@pytest.fixture(scope="session")
def disk16():
    return generate_mesh("disk", 16)


@pytest.fixture(scope="session")
def annulus16():
    return generate_mesh("annulus", 16)


@pytest.fixture(scope="session")
def pants16():
    return generate_mesh("pants", 16)


@pytest.fixture
def triangle():
    verts = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [0, 0, 1, 0]], dtype=float)
    return SimplicialPatch(verts, np.array([[0, 1, 2]]))


def cylinder(segments: int = 16, height: float = 1.0) -> SimplicialPatch:
    """Flat Lagrangian cylinder {(e^{is}, t)}, 0 <= t <= height, in C^2."""
    s = 2 * np.pi * np.arange(segments) / segments
    verts = []
    for t in (0.0, height):
        for a in s:
            verts.append([np.cos(a), np.sin(a), t, 0.0])
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([i, j, segments + j])
        tris.append([i, segments + j, segments + i])
    return SimplicialPatch(np.array(verts), np.array(tris))


@pytest.fixture(scope="session")
def cylinder16():
    return cylinder(16)


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
