import math

import numpy as np
import pytest

from glchains.chains import point_chain
from glchains.energy import SolverOptions, energy, energy_grad, minimize
from glchains.fields import (
    annulus_domain,
    ball_domain,
    box_domain,
    constant_field,
    disk_domain,
    make_boundary_datum,
    regularize,
    sample_field,
)
from glchains.groups import director_to_q, get_group
from glchains.manifolds import get_target

C = get_target("circle")


def _hedgehog(x):
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-300)


def test_constant_field_zero_energy_and_gradient():
    u = constant_field(disk_domain(1.0, 32), 32, C)
    assert energy(u, 0.1).total == pytest.approx(0.0, abs=1e-14)
    assert np.all(energy_grad(u, 0.1) == 0)


def test_annulus_dirichlet_closed_form():
    r1, r2 = 0.25, 1.0
    u = sample_field(annulus_domain(r1, r2, 256), 256, C, _hedgehog)
    rep = energy(u, 0.1)
    assert rep.potential == pytest.approx(0.0, abs=1e-12)
    assert rep.dirichlet == pytest.approx(math.pi * math.log(r2 / r1), rel=0.02)


def test_potential_scales_and_n_valued_invariance():
    u = sample_field(annulus_domain(0.25, 1.0, 64), 64, C, _hedgehog)
    assert energy(u, 0.1).total == pytest.approx(energy(u, 0.2).total)
    v = u.with_values(0.9 * u.values)
    e1, e2 = energy(v, 0.1), energy(v, 0.2)
    assert e1.potential == pytest.approx(4 * e2.potential)
    assert e1.per_cell_density.sum() == pytest.approx(e1.total)


@pytest.mark.parametrize(
    "kind,dom",
    [("circle", disk_domain(1.0, 20)), ("torus", box_domain((-1, -1), (1, 1))), ("rp2", ball_domain(1.0, 10))],
)
def test_gradient_matches_finite_differences(kind, dom, rng):
    tm = get_target(kind)
    n = 20 if dom.ndim == 2 else 10
    if kind == "rp2":
        fn = lambda x: 0.8 * director_to_q(rng.normal(size=x.shape[:-1] + (3,))) + 0.1 * rng.normal(size=x.shape[:-1] + (5,))
    else:
        fn = lambda x: rng.normal(size=x.shape[:-1] + (tm.m,))
    u = sample_field(dom, n, tm, fn)
    eps = 0.3
    g = energy_grad(u, eps)
    assert np.all(g[u.dirichlet] == 0)
    for _ in range(3):
        phi = rng.normal(size=u.values.shape) * u.free[..., None]
        h = 1e-6
        fd = (energy(u.with_values(u.values + h * phi), eps, False).total - energy(u.with_values(u.values - h * phi), eps, False).total) / (2 * h)
        assert (g * phi).sum() == pytest.approx(fd, rel=1e-5)


def test_minimize_keeps_dirichlet_and_decreases():
    w = make_boundary_datum({"kind": "disk", "degree": 1, "n": 48})
    for opts in (SolverOptions(), SolverOptions(direction="gradient", max_iters=300)):
        u, rep, trace = minimize(w, 0.1, opts)
        assert np.array_equal(u.values[u.dirichlet], w.values[w.dirichlet])
        e = np.array([t[1] for t in trace])
        # strictly decreasing until the energy is flat at machine precision
        assert np.all(np.diff(e) <= 0)
        live = e[:-1] - e[-1] > 1e-12 * e[-1]
        assert np.all(np.diff(e)[live] < 0)
        assert rep.total == pytest.approx(e[-1])
    # fixed steps below the explicit stability limit ~ h^2 / 4
    opts = SolverOptions(step_rule="fixed", initial_step=0.2 * w.spacing**2, max_iters=50)
    u, rep, trace = minimize(w, 0.1, opts)
    assert np.array_equal(u.values[u.dirichlet], w.values[w.dirichlet])
    assert trace[-1][1] < trace[0][1]


def test_minimize_stops_at_critical_point():
    u0 = constant_field(disk_domain(1.0, 24), 24, C)
    u, rep, trace = minimize(u0, 0.1)
    assert len(trace) == 1 and trace[0][0] == 0
    assert np.array_equal(u.values, u0.values)


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(step_rule="wild")
    with pytest.raises(ValueError):
        SolverOptions(direction="newton")
    with pytest.raises(ValueError):
        SolverOptions(grad_tol=0)
    with pytest.raises(ValueError):
        energy(constant_field(disk_domain(1.0, 16), 16, C), 0.0)


def test_regularized_hedgehog_slope():
    # E(regularize(w, S, eps)) grows like M(S) |log eps| with M(S) = pi
    w = sample_field(disk_domain(1.0, 128), 128, C, _hedgehog)
    S = point_chain(get_group("Z_circle"), [(0.0, 0.0)], [1])
    eps_list = [0.1, 0.05, 0.025]
    E = [energy(regularize(w, S, e), e, False).total for e in eps_list]
    slope = np.polyfit([abs(math.log(e)) for e in eps_list], E, 1)[0]
    assert slope == pytest.approx(math.pi, rel=0.15)


def test_minimizer_sandwiched(deg1_128):
    from glchains.fields import disk_competitor
    from glchains.lowerbound import ball_construction

    w, u, rep, _ = deg1_128
    eps = 0.05
    cert = ball_construction(u, eps)
    comp, _ = disk_competitor(w, eps)
    upper = energy(comp, eps, False).total
    assert cert.certified_bound <= rep.total <= upper
