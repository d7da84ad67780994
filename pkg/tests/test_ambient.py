import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from minlag.ambient import (
    AffineScaffold,
    AmbientSpace,
    ProductScaffold,
    QuadricScaffold,
    UnionScaffold,
    alpha_integral,
    alpha_integrals,
    check_scaffold_conditions,
    load_scaffold,
    omega_eval,
    omega_integral,
    omega_integrals,
    parse_scaffold_config,
    scaffold_eval,
    scaffold_frame,
    scaffold_project,
    tangent_basis,
)
from minlag.errors import ParseError, ProjectionError, ScaffoldError, ValidationError
from minlag.mesh import boundary_data

from conftest import cylinder

finite = st.floats(-3, 3, allow_nan=False)
vec4 = arrays(np.float64, 4, elements=finite)
tri4 = arrays(np.float64, (3, 4), elements=finite)

X1, Y1, X2, Y2 = np.eye(4)
RIGHT_TRIANGLE = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [0, 0, 1, 0]], dtype=float)


def rotate_z1(points, phi):
    z = points[:, 0] + 1j * points[:, 1]
    out = points.copy()
    out[:, 0], out[:, 1] = (np.exp(1j * phi) * z).real, (np.exp(1j * phi) * z).imag
    return out


# -- structure ------------------------------------------------------------------
def test_omega_examples():
    assert omega_eval(X1, Y1) == 1.0
    assert omega_eval(X1, X2) == 0.0
    assert omega_eval(Y2, X2) == -1.0


def test_omega_dimension_mismatch():
    with pytest.raises(ValidationError):
        omega_eval(np.ones(4), np.ones(3))


@settings(max_examples=50)
@given(u=vec4, v=vec4)
def test_compatibility(u, v):
    space = AmbientSpace(2)
    J = space.J
    assert omega_eval(u, u) == 0.0
    assert omega_eval(J @ u, J @ v) == pytest.approx(omega_eval(u, v), abs=1e-12)
    assert u @ v == pytest.approx(omega_eval(u, J @ v), abs=1e-12)


def test_alpha_on_standard_frame():
    assert AmbientSpace(2).alpha(np.array([X1, X2])) == 1.0


# -- simplex integrals ---------------------------------------------------------
def test_omega_integral_examples():
    assert omega_integral(RIGHT_TRIANGLE) == 0.0
    assert omega_integral(np.array([[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0.]])) == 0.5
    assert omega_integral(np.array([[0, 0, 0, 0], [0, 1, 0, 0], [1, 0, 0, 0.]])) == -0.5


def test_alpha_integral_examples():
    assert alpha_integral(RIGHT_TRIANGLE, 0.0) == 0.5
    rotated = rotate_z1(RIGHT_TRIANGLE, np.pi / 2)
    assert alpha_integral(rotated, 0.0).imag == pytest.approx(0.5, abs=1e-15)
    assert alpha_integral(rotated, np.pi / 2).imag == pytest.approx(0.0, abs=1e-15)


def test_degenerate_simplex_rejected():
    pts = np.array([[0, 0, 0, 0], [1, 0, 0, 0], [2, 0, 0, 0.]])
    with pytest.raises(ValidationError):
        omega_integral(pts)
    with pytest.raises(ValidationError):
        alpha_integral(pts)


def test_batched_integrals_match(annulus16):
    pos = annulus16.vertices + 0.1 * np.random.default_rng(0).standard_normal(annulus16.vertices.shape)
    tris = annulus16.simplices
    assert np.allclose(omega_integrals(pos, tris), [omega_integral(pos[t]) for t in tris], atol=1e-15)
    assert np.allclose(alpha_integrals(pos, tris, 0.4), [alpha_integral(pos[t], 0.4) for t in tris],
                       atol=1e-15)


@settings(max_examples=100)
@given(pts=tri4, theta=st.floats(-7, 7))
def test_phase_factorization(pts, theta):
    z0 = alpha_integrals(pts, np.array([[0, 1, 2]]), 0.0)[0]
    zt = alpha_integrals(pts, np.array([[0, 1, 2]]), theta)[0]
    assert zt == pytest.approx(np.exp(-1j * theta) * z0, abs=1e-12)


@settings(max_examples=100)
@given(pts=tri4, theta=st.floats(-3, 3))
def test_integrals_additive_under_subdivision(pts, theta):
    # split at the midpoint of edge 1-2 and at the centroid
    m = 0.5 * (pts[1] + pts[2])
    c = pts.mean(axis=0)
    allp = np.vstack([pts, m, c])
    whole = np.array([[0, 1, 2]])
    parts = np.array([[0, 1, 3], [0, 3, 2]])
    fine = np.array([[0, 1, 4], [1, 3, 4], [3, 2, 4], [2, 0, 4]])
    w_om = omega_integrals(allp, whole).sum()
    w_al = alpha_integrals(allp, whole, theta).sum()
    for sub in (parts, fine):
        assert omega_integrals(allp, sub).sum() == pytest.approx(w_om, abs=1e-12)
        assert alpha_integrals(allp, sub, theta).sum() == pytest.approx(w_al, abs=1e-12)


# -- scaffolds -----------------------------------------------------------------
def test_scaffold_eval_examples():
    q = QuadricScaffold(1.0)
    f1, f2, g1, g2 = scaffold_eval(q, [1, 0, 0, 0])
    assert (f1, f2) == (0.0, 0.0)
    assert scaffold_eval(q, np.zeros(4))[0] == -1.0
    plane = AffineScaffold.coordinate_plane(4, ["x1", "y1"], [0.3, -0.2])
    assert scaffold_eval(plane, [0.3, -0.2, 5, 7])[:2] == (0.0, 0.0)


def test_project_examples():
    q = QuadricScaffold(1.0)
    p = np.array([1.0, 0, 0, 0])
    assert np.array_equal(scaffold_project(q, p), p)
    # closest point of the c = 1.1 quadric to (1.1, 0, 0, 0): 1-d Newton on x^2 = 1.1
    out = scaffold_project(QuadricScaffold(1.1), [1.1, 0, 0, 0])
    assert out == pytest.approx([np.sqrt(1.1), 0, 0, 0], abs=1e-12)
    assert scaffold_project(q, [1.1, 0, 0, 0]) == pytest.approx([1, 0, 0, 0], abs=1e-12)


def test_project_critical_point_fails():
    with pytest.raises(ProjectionError):
        scaffold_project(QuadricScaffold(1.0), np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(p=arrays(np.float64, 4, elements=st.floats(-0.3, 0.3)), seed=st.integers(0, 10))
def test_projection_properties(p, seed):
    w = QuadricScaffold(1.0, phases=[0.1 * seed, 0.0])
    base = np.array([np.cos(0.1 * seed), np.sin(0.1 * seed), 0.0, 0.0])
    q = scaffold_project(w, base + p)
    assert np.abs(w.values(q[None])).max() <= 1e-12
    assert np.linalg.norm(scaffold_project(w, q) - q) <= 1e-12
    # correction is normal to W at q
    t = tangent_basis(w, q)
    assert np.abs(t @ (base + p - q)).max() <= 1e-10


def test_projection_jacobian_matches_fd():
    w = QuadricScaffold(1.0)
    p = np.array([[1.05, 0.02, 0.1, -0.03]])
    _, jac = w.project_jacobian(p)
    h = 1e-6
    fd = np.stack([(w.project(p[0] + h * e) - w.project(p[0] - h * e)) / (2 * h) for e in np.eye(4)], 1)
    assert np.abs(jac[0] - fd).max() <= 1e-7


def test_frame_affine_plane():
    w = AffineScaffold.coordinate_plane(4, ["x1", "y1"], [0, 0])
    e, f = scaffold_frame(w, np.zeros(4))
    assert np.allclose(e, X1) and np.allclose(f, Y1)


def test_frame_quadric():
    w = QuadricScaffold(1.0)
    p = np.array([1.0, 0, 0, 0])
    e, f = scaffold_frame(w, p)
    assert omega_eval(e, f) == pytest.approx(1.0, abs=1e-10)
    rng = np.random.default_rng(1)
    t = tangent_basis(w, p)
    for c in rng.standard_normal((10, 2)):
        tv = c @ t
        assert abs(omega_eval(e, tv)) <= 1e-10
        assert abs(omega_eval(f, tv)) <= 1e-10


def test_isotropic_plane_rejected():
    w = AffineScaffold.coordinate_plane(4, ["x1", "x2"], [0, 0])
    with pytest.raises(ScaffoldError, match="not symplectic"):
        scaffold_frame(w, np.zeros(4))


def test_product_scaffold_chart_roundtrip():
    w = ProductScaffold(0.7)
    pts = np.random.default_rng(2).uniform(-1, 1, (20, 4))
    assert np.allclose(w.from_chart(w.to_chart(pts)), pts, atol=1e-13)
    on = w.from_chart(np.hstack([pts[:, :2], np.zeros((20, 2))]))
    assert np.abs(w.values(on)).max() <= 1e-14


def test_union_dispatches_to_nearest():
    w = UnionScaffold([QuadricScaffold(1.0), QuadricScaffold(4.0)])
    q = w.project_many(np.array([[1.1, 0, 0, 0], [1.9, 0, 0, 0]]))[0]
    assert q[:, 0] == pytest.approx([1.0, 2.0], abs=1e-12)


# -- scaffold conditions ---------------------------------------------------------
def test_disk_rim_on_quadric_passes(disk16):
    report = check_scaffold_conditions(QuadricScaffold(1.0), disk16, boundary_data(disk16))
    assert report.passed
    assert max(report.condition_max.values()) <= 1e-8


def test_displaced_rim_reports_containment(disk16):
    bd = boundary_data(disk16)
    pos = disk16.vertices.copy()
    pos[bd.vertex_indices] *= 1.1
    report = check_scaffold_conditions(QuadricScaffold(1.0), disk16, bd, positions=pos)
    assert not report.passed
    assert report.condition_max["containment"] >= 0.1
    assert report.failures() == ["containment"]


def test_affine_planes_hold_cylinder_rims(cylinder16):
    w = parse_scaffold_config("type = affine\nfix = x2 y2\nvalues = 0 0; 1 0\n")
    report = check_scaffold_conditions(w, cylinder16, boundary_data(cylinder16))
    assert report.passed, report.format()


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.5, 3.0), phi=st.floats(-np.pi, np.pi))
def test_complex_quadric_transversal(c, phi):
    from minlag.generators import generate_mesh

    patch = generate_mesh("disk", 12)
    pts = rotate_z1(patch.vertices * np.sqrt(c), phi)
    w = QuadricScaffold(c, phases=[phi, 0.0])
    bd = boundary_data(type(patch)(pts, patch.simplices))
    report = check_scaffold_conditions(w, patch, bd, positions=pts)
    assert report.condition_max["transversality"] <= 1e-8


# -- config files ----------------------------------------------------------------
def test_parse_configs(tmp_path):
    q = parse_scaffold_config("type = quadric\nc = 1.21\n")
    assert isinstance(q, QuadricScaffold) and q.c == 1.21
    u = parse_scaffold_config("type = quadric\nc = 1, 4  # two rims\n")
    assert isinstance(u, UnionScaffold) and len(u.components) == 2
    p = parse_scaffold_config("type = product\ncurvature = 0.25\n")
    assert isinstance(p, ProductScaffold)
    path = tmp_path / "w.cfg"
    path.write_text("type = affine\nfix = x1, y1\nvalues = 0.5, 0\n")
    a = load_scaffold(path)
    assert scaffold_eval(a, [0.5, 0, 3, 3])[:2] == (0.0, 0.0)


@pytest.mark.parametrize("text", ["", "type = sphere\n", "type = quadric\nc = abc\n",
                                  "type = affine\nfix = x1\n", "type = quadric\nc = 1\nphases = 1\n"])
def test_bad_configs(text):
    with pytest.raises(ParseError):
        parse_scaffold_config(text)
