import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import winding_number
from glchains.chains import PolyChain, point_chain
from glchains.fields import (
    InvalidDescriptor,
    SimplexTouchesBoundary,
    box_domain,
    constant_field,
    disk_competitor,
    insert_dipole,
    load_field,
    make_boundary_datum,
    project_near_manifold,
    regularize,
    sample_field,
    solid_angle,
)
from glchains.groups import get_group
from glchains.manifolds import get_target

C = get_target("circle")
Z = get_group("Z_circle")


def test_disk_datum_on_boundary():
    for d in (1, 2, -1):
        u = make_boundary_datum({"kind": "disk", "degree": d, "n": 64})
        x = u.coords()[u.dirichlet]
        th = np.arctan2(x[:, 1], x[:, 0])
        np.testing.assert_allclose(u.values[u.dirichlet], np.stack([np.cos(d * th), np.sin(d * th)], -1), atol=1e-12)
        assert np.all(u.values[~u.inside] == 0)


def test_solid_torus_datum():
    u = make_boundary_datum({"kind": "solid_torus", "n": 32})
    x = u.coords()[u.dirichlet]
    xt = np.stack([np.hypot(x[:, 0], x[:, 1]) - 2.0, x[:, 2]], -1)
    np.testing.assert_allclose(u.values[u.dirichlet], xt / np.linalg.norm(xt, axis=1, keepdims=True), atol=1e-12)


def test_sphere_datum_errors():
    with pytest.raises(InvalidDescriptor):
        make_boundary_datum({"kind": "sphere", "points": [[1, 0, 0], [-1, 0, 0]], "classes": [1, 1], "n": 16})
    with pytest.raises(InvalidDescriptor):
        make_boundary_datum({"kind": "blob"})
    with pytest.raises(InvalidDescriptor):
        make_boundary_datum({"kind": "disk", "n": 4})


def test_sphere_datum_winds_around_points():
    u = make_boundary_datum({"kind": "sphere", "points": [[0, 0, 1], [0, 0, -1]], "classes": [1, -1], "n": 24})
    # the boundary band is N-valued
    assert np.all(np.abs(C.dist(u.values[u.dirichlet])) < 1e-12)


def _ring_nodes(u, center, k):
    """Grid nodes on the square ring of index radius k around the node nearest to center, in loop order."""
    i0 = np.rint((np.asarray(center) - u.origin) / u.spacing).astype(int)
    ring = []
    for t in range(-k, k):
        ring.append((k, t))
    for t in range(k, -k, -1):
        ring.append((t, k))
    for t in range(k, -k, -1):
        ring.append((-k, t))
    for t in range(-k, k):
        ring.append((t, -k))
    idx = np.array(ring) + i0
    return u.values[idx[:, 0], idx[:, 1]], u.coords()[idx[:, 0], idx[:, 1]]


def test_dipole_winding_2d():
    w = constant_field(box_domain((-1, -1), (1, 1)), 81, C)
    a, b = np.array([-0.3, 0.05]), np.array([0.4, -0.1])
    u = insert_dipole(w, np.stack([a, b]), 1)
    vb, xb = _ring_nodes(u, b, 4)
    va, xa = _ring_nodes(u, a, 4)
    assert winding_number(xb, b) == 1  # the ring goes counterclockwise
    assert C.loop_class(vb) == Z.element(1)
    assert C.loop_class(va) == Z.element(-1)
    vall, _ = _ring_nodes(u, (a + b) / 2, 30)
    assert C.loop_class(vall) == Z.zero
    assert np.array_equal(insert_dipole(w, np.stack([a, b]), 0).values, w.values)


def test_dipole_refuses_boundary():
    w = constant_field(box_domain((-1, -1), (1, 1)), 41, C)
    with pytest.raises(SimplexTouchesBoundary):
        insert_dipole(w, np.array([[0.0, 0.0], [1.0, 0.0]]), 1)


def test_regularize_examples():
    w = constant_field(box_domain((-1, -1), (1, 1)), 41, C)
    eps = 0.2
    S = point_chain(Z, [(0.0, 0.0)], [1])
    r = regularize(w, S, eps)
    dist = np.linalg.norm(w.coords(), axis=-1)
    far = dist >= eps
    np.testing.assert_array_equal(r.values[far], w.values[far])
    i0 = np.rint(-w.origin / w.spacing).astype(int)
    assert np.all(r.values[i0[0], i0[1]] == 0)
    np.testing.assert_allclose(np.linalg.norm(r.values, axis=-1), np.minimum(dist / eps, 1.0), atol=1e-12)
    # node at distance eps / 2
    S2 = point_chain(Z, [(eps / 2, 0.0) + w.coords()[i0[0], i0[1]]], [1])
    np.testing.assert_allclose(regularize(w, S2, eps).values[i0[0], i0[1]], w.values[i0[0], i0[1]] / 2)
    assert regularize(w, PolyChain(0, Z, [], 2), eps).values.tolist() == w.values.tolist()


def test_project_near_manifold_examples():
    w = constant_field(box_domain((-1, -1), (1, 1)), 9, C)
    np.testing.assert_allclose(project_near_manifold(w, 0.0, 0.1).values, w.values)
    y = np.array([0.1, 0.0])
    z = w.with_values(np.broadcast_to(y, w.values.shape).copy())
    assert np.all(project_near_manifold(z, y, 0.1).values == 0)


@given(st.integers(0, 1000), st.floats(0.05, 1.0))
def test_project_near_manifold_bounded(seed, eps):
    r = np.random.default_rng(seed)
    dom = box_domain((-1, -1), (1, 1))
    u = sample_field(dom, 16, C, lambda x: r.uniform(-1.5, 1.5, size=x.shape[:-1] + (2,)))
    y = r.normal(size=2)
    y *= 0.9 * C.delta_star * r.uniform() / np.linalg.norm(y)
    out = project_near_manifold(u, y, eps).values
    n = np.linalg.norm(out, axis=-1)
    assert np.all(n <= C.radius + 1e-12)
    # every output is a ramped point of N
    nz = n > 1e-12
    assert np.all(C.dist(out[nz] / n[nz, None]) < 1e-9)


def test_glf_roundtrip(tmp_path):
    u = make_boundary_datum({"kind": "disk", "degree": 2, "n": 32})
    p = tmp_path / "u.glf"
    from glchains.fields import save_field

    save_field(p, u)
    v = load_field(p)
    assert np.array_equal(v.values, u.values)
    assert v.spacing == u.spacing and v.domain == u.domain and v.target.kind == "circle"
    assert np.array_equal(v.dirichlet, u.dirichlet)
    assert v.meta["datum"]["degree"] == 2


def test_solid_angle_square():
    a, d = 0.5, 0.7
    sq = np.array([[-a, -a, 0], [a, -a, 0], [a, a, 0], [-a, a, 0]], dtype=float)
    ref = 4 * math.atan(a * a / (d * math.sqrt(2 * a * a + d * d)))
    om = solid_angle(np.array([[0, 0, d], [0, 0, -d]]), sq)
    assert abs(om[0]) == pytest.approx(ref, rel=1e-12)
    assert om[1] == pytest.approx(-om[0])
    # jump of 4 pi across the polygon, continuity outside it
    near = solid_angle(np.array([[0.1, 0.1, 1e-9], [0.1, 0.1, -1e-9], [2.0, 0.0, 1e-9], [2.0, 0.0, -1e-9]]), sq)
    assert abs(near[0] - near[1]) == pytest.approx(4 * math.pi, abs=1e-5)
    assert near[2] == pytest.approx(near[3], abs=1e-5)


def test_disk_competitor_boundary_and_points():
    w = make_boundary_datum({"kind": "disk", "degree": 2, "n": 64})
    comp, S = disk_competitor(w, 0.1)
    assert np.array_equal(comp.values[w.dirichlet], w.values[w.dirichlet])
    assert S.total_class() == Z.element(2)
    np.testing.assert_allclose(np.linalg.norm(S.points(), axis=1), 0.2**0.25, rtol=1e-3)
