"""Discrete Ginzburg-Landau energy E_eps(u) = int 1/2 |grad u|^2 + eps^-2 f(u) and its minimisation.

Quadrature: a cell counts when all its corners are inside the domain. Each
cell contributes the mean of its forward-difference squares along every
axis (so an edge shared by j inside cells of the 2^(d-1) possible carries
weight h^(d-2)/2 * j/2^(d-1)) and the mean of f over its corners times h^d.
The discrete gradient is exact for this sum.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from . import kernels
from .fields import Field

log = logging.getLogger(__name__)


class NonFiniteEnergy(FloatingPointError):
    pass


@dataclass
class EnergyReport:
    total: float
    dirichlet: float
    potential: float
    epsilon: float
    per_cell_density: np.ndarray = None

    @property
    def normalized(self) -> float:
        return self.total / abs(math.log(self.epsilon))

    def as_dict(self):
        return {
            "total": self.total,
            "dirichlet": self.dirichlet,
            "potential": self.potential,
            "epsilon": self.epsilon,
            "normalized": self.normalized,
        }


@dataclass
class SolverOptions:
    max_iters: int = 5000
    grad_tol: float = 1e-6
    step_rule: str = "backtracking"
    initial_step: float = 0.1
    record_every: int = 1
    direction: str = "lbfgs"

    def __post_init__(self):
        if self.step_rule not in ("fixed", "backtracking"):
            raise ValueError("step_rule must be 'fixed' or 'backtracking'")
        if self.direction not in ("lbfgs", "gradient"):
            raise ValueError("direction must be 'lbfgs' or 'gradient'")
        if not (self.max_iters >= 0 and self.grad_tol > 0 and self.initial_step > 0 and self.record_every >= 1):
            raise ValueError("solver options must be positive")


class Stencil:
    """Edge and node quadrature weights of a field's geometry (flat node order)."""

    def __init__(self, u: Field):
        d, h = u.ndim, u.spacing
        shape = u.shape
        inside = u.inside
        # cell mask: all 2^d corners inside
        cells = np.ones(tuple(s - 1 for s in shape), dtype=bool)
        for corner in np.ndindex(*(2,) * d):
            cells &= inside[tuple(slice(c, c + s - 1) for c, s in zip(corner, shape))]
        self.cells = cells
        node_count = np.zeros(shape)
        for corner in np.ndindex(*(2,) * d):
            node_count[tuple(slice(c, c + s - 1) for c, s in zip(corner, shape))] += cells
        self.node_w = (h**d / 2**d) * node_count.ravel()

        strides = [int(np.prod(shape[a + 1 :])) for a in range(d)]
        weights = np.zeros((d, int(np.prod(shape))))
        for a in range(d):
            cnt = np.zeros(shape)
            others = [b for b in range(d) if b != a]
            for corner in np.ndindex(*(2,) * (d - 1)):
                sl = [slice(0, s - 1) for s in shape]
                for b, c in zip(others, corner):
                    sl[b] = slice(c, c + shape[b] - 1)
                dst = [slice(None)] * d
                dst[a] = slice(0, shape[a] - 1)
                for b, c in zip(others, corner):
                    dst[b] = slice(c, c + shape[b] - 1)
                cnt[tuple(dst)] += cells[tuple(slice(0, s - 1) for s in shape)]
            weights[a] = (0.5 * h ** (d - 2) / 2 ** (d - 1)) * cnt.ravel()
        self.weights = np.ascontiguousarray(weights)
        self.strides = strides
        self.free = u.free.ravel()
        self.volume = h**d


def stencil(u: Field) -> Stencil:
    st = u.__dict__.get("stencil")
    if st is None:
        st = u.__dict__["stencil"] = Stencil(u)
    return st


def _terms(u: Field, values, eps, want_grad=True):
    st = stencil(u)
    flat = np.ascontiguousarray(values.reshape(-1, u.m))
    ed, gd = kernels.dirichlet(flat, st.weights, st.strides)
    if u.target.kind in ("circle", "torus"):
        ep, gp = kernels.wells(flat, st.node_w)
    else:
        ep = float((st.node_w * u.target.potential(flat)).sum())
        gp = st.node_w[:, None] * u.target.potential_grad(flat) if want_grad else None
    ep /= eps * eps
    if not want_grad:
        return ed, ep, None
    grad = gd + gp / (eps * eps)
    grad[~st.free] = 0.0
    return ed, ep, grad


def per_cell_density(u: Field, eps: float) -> np.ndarray:
    """Energy carried by each cell (zero outside the domain); sums to the total."""
    d, h, v = u.ndim, u.spacing, u.values
    shape = u.shape
    st = stencil(u)
    f = u.target.potential(v.reshape(-1, u.m)).reshape(shape)
    dens = np.zeros(st.cells.shape)
    for corner in np.ndindex(*(2,) * d):
        dens += f[tuple(slice(c, c + s - 1) for c, s in zip(corner, shape))]
    dens *= h**d / 2**d / eps**2
    for a in range(d):
        diff = np.diff(v, axis=a)
        sq = (diff * diff).sum(axis=-1)
        others = [b for b in range(d) if b != a]
        for corner in np.ndindex(*(2,) * (d - 1)):
            sl = [slice(None)] * d
            sl[a] = slice(0, shape[a] - 1)
            for b, c in zip(others, corner):
                sl[b] = slice(c, c + shape[b] - 1)
            dens += 0.5 * h ** (d - 2) / 2 ** (d - 1) * sq[tuple(sl)]
    return np.where(st.cells, dens, 0.0)


def energy(u: Field, eps: float, density=True) -> EnergyReport:
    if eps <= 0:
        raise ValueError("eps must be positive")
    ed, ep, _ = _terms(u, u.values, eps, want_grad=False)
    return EnergyReport(ed + ep, ed, ep, eps, per_cell_density(u, eps) if density else None)


def energy_grad(u: Field, eps: float) -> np.ndarray:
    """Exact gradient of the discrete energy w.r.t. node values; zero on fixed nodes."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _terms(u, u.values, eps)[2].reshape(u.values.shape)


TRACE_COLUMNS = ("iter", "energy", "dirichlet", "potential", "grad_norm", "step")


def minimize(u0: Field, eps: float, opts: SolverOptions = None, callback=None):
    """Dirichlet-constrained descent on the free nodes. Returns (field, report, trace rows).

    step_rule ``backtracking``: with the default ``lbfgs`` direction, scipy's
    L-BFGS-B, whose line search enforces sufficient decrease; with the
    ``gradient`` direction, L2-preconditioned gradient steps from a
    Barzilai-Borwein trial length halved until the Armijo condition holds.
    step_rule ``fixed``: gradient steps of length ``initial_step``.
    Either way the run stops once the largest nodal L2-gradient is below
    ``grad_tol`` or after ``max_iters`` iterations.
    """
    opts = opts or SolverOptions()
    st = stencil(u0)
    x0 = u0.values.reshape(-1, u0.m).copy()
    inv_vol = 1.0 / st.volume

    def evaluate(v, want_grad=True):
        ed, ep, g = _terms(u0, v, eps, want_grad)
        e = ed + ep
        if not math.isfinite(e):
            raise NonFiniteEnergy(f"energy overflow (eps={eps})")
        return e, ed, ep, g

    def gnorm_of(g):
        return float(np.sqrt((g * g).sum(axis=1)).max()) * inv_vol

    t0 = time.perf_counter()
    if opts.step_rule == "backtracking" and opts.direction == "lbfgs":
        x, trace = _lbfgs(x0, st.free, evaluate, gnorm_of, opts, callback)
    else:
        x, trace = _gradient(x0, st.free, evaluate, gnorm_of, opts, callback, u0)
    log.debug("minimize eps=%g: %d iterations, %.2fs, E=%.6f", eps, trace[-1][0], time.perf_counter() - t0, trace[-1][1])
    out = u0.with_values(x.reshape(u0.values.shape))
    out.values[u0.dirichlet] = u0.values[u0.dirichlet]
    return out, energy(out, eps), trace


def _lbfgs(x0, free, evaluate, gnorm_of, opts, callback):
    m = x0.shape[1]
    last = {}

    def full(z):
        x = x0.copy()
        x[free] = z.reshape(-1, m)
        return x

    def fun(z):
        e, ed, ep, g = evaluate(full(z))
        last.update(z=z.copy(), row=(e, ed, ep, gnorm_of(g)))
        return e, g[free].ravel()

    z0 = x0[free].ravel()
    e, _ = fun(z0)
    trace = [(0,) + last["row"] + (0.0,)]
    if not z0.size or last["row"][3] < opts.grad_tol:
        return x0, trace
    state = {"it": 0, "z": z0}

    def cb(intermediate_result):
        z = intermediate_result.x
        state["it"] += 1
        it = state["it"]
        if "z" not in last or not np.array_equal(last["z"], z):
            fun(z)
        step = float(np.abs(z - state["z"]).max())
        state["z"] = z.copy()
        row = (it,) + last["row"] + (step,)
        if it % opts.record_every == 0:
            trace.append(row)
        state["row"] = row
        if callback is not None:
            callback(it, row[1], row[4])
        if row[4] < opts.grad_tol:
            raise StopIteration

    # the projected-gradient test in L-BFGS-B is componentwise on the raw
    # gradient; the nodal L2 test is applied in the callback
    res = scipy_minimize(
        fun,
        z0,
        jac=True,
        method="L-BFGS-B",
        callback=cb,
        options=dict(maxiter=opts.max_iters, maxfun=max(15000, 5 * opts.max_iters), gtol=0.0, ftol=0.0, maxcor=10),
    )
    log.debug("L-BFGS-B: %s", res.message)
    z = res.x
    if "row" in state and trace[-1][0] != state["row"][0]:
        trace.append(state["row"])
    return full(z), trace


def _gradient(x0, free, evaluate, gnorm_of, opts, callback, u0):
    x = x0
    e, ed, ep, g = evaluate(x)
    gnorm = gnorm_of(g)
    inv_vol = 1.0 / (u0.spacing**u0.ndim)
    p = g * inv_vol
    trace = [(0, e, ed, ep, gnorm, 0.0)]
    # a stable explicit step for the Dirichlet part is ~h^2/(2d)
    step = min(opts.initial_step, u0.spacing**2 / (2 * u0.ndim)) if opts.step_rule == "backtracking" else opts.initial_step
    it = 0
    while it < opts.max_iters and gnorm >= opts.grad_tol:
        it += 1
        slope = -float((g * p).sum())
        if opts.step_rule == "fixed":
            x_new = x - step * p
            e_new, ed_new, ep_new, g_new = evaluate(x_new)
        else:
            while True:
                x_new = x - step * p
                e_new, ed_new, ep_new, _ = evaluate(x_new, want_grad=False)
                if e_new <= e + 1e-4 * step * slope or step < 1e-16:
                    break
                step *= 0.5
            if not e_new < e:  # no further descent at machine precision
                it -= 1
                break
            _, _, _, g_new = evaluate(x_new)
        p_new = g_new * inv_vol
        if opts.step_rule == "backtracking":
            s = (x_new - x)[free]
            yv = (p_new - p)[free]
            sy = float((s * yv).sum())
            if sy > 0:
                step = float((s * s).sum()) / sy
            step = min(max(step, 1e-12), 1e6)
        x, e, ed, ep, g, p = x_new, e_new, ed_new, ep_new, g_new, p_new
        gnorm = gnorm_of(g)
        if it % opts.record_every == 0:
            trace.append((it, e, ed, ep, gnorm, step))
        if callback is not None:
            callback(it, e, gnorm)
    if trace[-1][0] != it:
        trace.append((it, e, ed, ep, gnorm, step))
    return x, trace
