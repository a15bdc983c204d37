"""Ball-construction lower bounds for E_eps in two dimensions.

Profiles
  lambda_eps(rho) = min_{0<=mu<=1} mu^2/rho + C0/eps (1 - mu)^N
  Lambda_eps(rho) = int_0^rho min(lambda_eps(t), C1/eps) dt
with C1 = eps lambda_eps(eps), so the cap is active exactly below rho = eps.
Both depend on rho/eps only.

Certificate
  Essential components of {s <= 1/2}, s = clamp(1 - dist(u, N)/theta0, 0, 1),
  are covered by disjoint initial balls B_i of radius rho_i >= eps, credited
  |sigma_i|_* Lambda_eps(rho_i/|sigma_i|_*). The balls then grow in the common
  scale s (a ball grows once r_i = |sigma_i|_* s), each annulus adding
  |sigma_i|_* (Lambda_eps(s2) - Lambda_eps(s1)); balls that touch are merged
  into their enclosing ball with the summed class. Growth events are resolved
  exactly, so the credited regions are disjoint and the total never exceeds
  the energy whenever the annulus and initial-ball estimates hold. That is
  checked a posteriori against the measured discrete energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .energy import Stencil, energy
from .fields import Field
from .groups import GroupElement

# sup over rho >= eps of log(rho/eps) - Lambda_eps(rho) at the default
# parameters (C0 = 1, N = 3), measured once and frozen
LAMBDA_LOG_CONSTANT = 1.291


class BoundaryTouch(ValueError):
    pass


class NotAdmissible(ValueError):
    pass


@dataclass(frozen=True)
class BallParams:
    C0: float = 1.0
    C1: float = None
    N_exp: float = 3.0
    tau: float = None
    s_threshold: float = 0.5
    growth: float = 1.05
    eps0: float = 2.0

    def __post_init__(self):
        if not (self.C0 > 0 and self.N_exp > 1 and 0 < self.s_threshold < 1 and self.growth > 1 and self.eps0 > 0):
            raise ValueError("invalid ball-construction parameters")
        if self.C1 is None:
            object.__setattr__(self, "C1", float(_lambda1(1.0, self.C0, self.N_exp)))
        if self.C1 <= 0 or (self.tau is not None and self.tau <= 0):
            raise ValueError("C1 and tau must be positive")


# ---------------------------------------------------------------------------
# profiles


def _mu_star(t, C0, N):
    """Minimiser of mu^2/t + C0 (1 - mu)^N over [0, 1] (eps = 1), by bisection."""
    t = np.asarray(t, dtype=float)
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    for _ in range(60):  # interval 2^-60 < 1e-10
        mid = 0.5 * (lo + hi)
        g = 2.0 * mid / t - C0 * N * (1.0 - mid) ** (N - 1)
        lo = np.where(g < 0, mid, lo)
        hi = np.where(g < 0, hi, mid)
    return 0.5 * (lo + hi)


def _lambda1(t, C0, N):
    mu = _mu_star(t, C0, N)
    return mu**2 / t + C0 * (1.0 - mu) ** N


def lambda_eps(rho, eps, p: BallParams = BallParams()):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) or eps <= 0:
        raise ValueError("rho and eps must be positive")
    return _lambda1(rho / eps, p.C0, p.N_exp) / eps


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_PANEL = 0.25  # panel width in log t; the integrand is analytic there


def _Lambda1(t, C0, N, C1):
    """C1 t for t <= 1, else C1 + int_1^t lambda_1; one cumulative pass over sorted t."""
    shape = np.shape(t)
    t = np.atleast_1d(np.asarray(t, dtype=float)).ravel()
    out = C1 * np.minimum(t, 1.0)
    big = t > 1.0
    if not big.any():
        return out.reshape(shape)
    v = np.log(t[big])
    knots = np.union1d(np.arange(0.0, v.max(), _PANEL), v)
    knots = np.union1d([0.0], knots)
    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
    et = np.exp(x)
    panel = half * ((_lambda1(et, C0, N) * et) @ _GL_W)
    cum = np.concatenate([[0.0], np.cumsum(panel)])
    out[big] = C1 + cum[np.searchsorted(knots, v)]
    return out.reshape(shape)


def Lambda_eps(rho, eps, p: BallParams = BallParams()):
    if eps <= 0:
        raise ValueError("eps must be positive")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be non-negative")
    out = _Lambda1(rho / eps, p.C0, p.N_exp, p.C1)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# essential set


@dataclass
class Component:
    nodes: np.ndarray  # (k, 2) integer node indices
    points: np.ndarray  # (k, 2) coordinates
    cls: GroupElement
    essential: bool


def s_field(u: Field):
    tm = u.target
    return np.clip(1.0 - tm.dist(u.values) / tm.theta0, 0.0, 1.0)


def _cell_loop_sums(u: Field):
    """Per field cell: counterclockwise sum of principal increments of the phase data of u."""
    tm = u.target
    v = u.values
    if tm.kind == "rp2":
        ph = tm.phases(v)
        dx = ((ph[1:, :] * ph[:-1, :]).sum(-1) < 0).astype(float)[..., None]
        dy = ((ph[:, 1:] * ph[:, :-1]).sum(-1) < 0).astype(float)[..., None]
    else:
        ph = tm.phases(v)
        if tm.kind == "circle":
            ph = ph[..., None]
        dx = (np.diff(ph, axis=0) + np.pi) % (2 * np.pi) - np.pi
        dy = (np.diff(ph, axis=1) + np.pi) % (2 * np.pi) - np.pi
    return dx[:, :-1] + dy[1:, :] - dx[:, 1:] - dy[:-1, :]


def essential_components(u: Field, p: BallParams = BallParams(), node_mask=None):
    """Connected components (8-neighbour) of {s <= 1/2} with their classes.

    The class of a component is read on the boundary of the union of field
    cells touching it, which runs through nodes with s > 1/2.
    """
    if u.ndim != 2:
        raise ValueError("essential components are computed on 2D fields")
    inside = u.inside if node_mask is None else node_mask
    S = inside & (s_field(u) <= p.s_threshold)
    if not S.any():
        return []
    lab, n = ndimage.label(S, structure=np.ones((3, 3), dtype=bool))
    cells = np.ones(tuple(s - 1 for s in u.shape), dtype=bool)
    for c in np.ndindex(2, 2):
        cells &= inside[c[0] : c[0] + u.shape[0] - 1, c[1] : c[1] + u.shape[1] - 1]
    loops = _cell_loop_sums(u)
    coords = u.coords()
    interior = inside & ~u.dirichlet if node_mask is None else inside
    tm = u.target
    out = []
    for k in range(1, n + 1):
        comp = lab == k
        touch = np.zeros(cells.shape, dtype=bool)
        for c in np.ndindex(2, 2):
            touch |= comp[c[0] : c[0] + cells.shape[0], c[1] : c[1] + cells.shape[1]]
        if np.any(touch & ~cells) or np.any(comp & ~interior) or comp[[0, -1], :].any() or comp[:, [0, -1]].any():
            raise BoundaryTouch("a component of {s <= 1/2} reaches the boundary of the domain")
        tot = loops[touch].sum(axis=0)
        cls = tm.class_of_sum(tot if tm.kind == "torus" else tot[0])
        idx = np.argwhere(comp)
        out.append(Component(idx, coords[comp], cls, bool(cls)))
    return out


# ---------------------------------------------------------------------------
# ball construction


@dataclass
class Ball:
    center: np.ndarray
    radius: float
    cls: GroupElement


@dataclass
class LowerBoundCertificate:
    balls: list
    certified_bound: float
    measured_energy: float
    total_class: GroupElement
    flags: dict = field(default_factory=dict)

    @property
    def sound(self) -> bool:
        return self.certified_bound <= self.measured_energy * (1 + 1e-12)

    def to_json(self):
        return {
            "balls": [{"center": b.center.tolist(), "radius": b.radius, "class": list(b.cls.value)} for b in self.balls],
            "bound": self.certified_bound,
            "energy": self.measured_energy,
            "class": list(self.total_class.value),
            "sound": self.sound,
            "flags": self.flags,
        }


def _enclosing(c1, r1, c2, r2):
    d = float(np.linalg.norm(c2 - c1))
    if d + r2 <= r1:
        return c1, r1
    if d + r1 <= r2:
        return c2, r2
    r = 0.5 * (d + r1 + r2)
    return c1 + (r - r1) / d * (c2 - c1), r


def _merge_overlapping(balls):
    changed = True
    while changed:
        changed = False
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                a, b = balls[i], balls[j]
                if np.linalg.norm(a.center - b.center) < a.radius + b.radius:
                    c, r = _enclosing(a.center, a.radius, b.center, b.radius)
                    balls[i] = Ball(c, r, a.cls + b.cls)
                    del balls[j]
                    changed = True
                    break
            if changed:
                break
    return balls


def grow_balls(balls, eps, tau, norm, p: BallParams = BallParams()):
    """Jerrard-type growth of disjoint balls up to the scale tau.

    Returns (balls, bound, log) where the bound adds the initial credits and
    every annulus increment; contacts are resolved exactly before merging.
    """
    L = lambda s: Lambda_eps(s, eps, p)  # noqa: E731
    balls = _merge_overlapping([Ball(np.asarray(b.center, float), max(b.radius, eps), b.cls) for b in balls])
    bound = 0.0
    for b in balls:
        n = norm(b.cls)
        if n > 0:
            bound += n * L(b.radius / n)
    steps = 0

    def ratio(b):
        n = norm(b.cls)
        return b.radius / n if n > 0 else math.inf

    s = min([ratio(b) for b in balls] + [math.inf])
    while s < tau and balls:
        # next event: growth step, tau, a frozen ball starting to grow, or a contact
        s_next = min(s * p.growth, tau)
        for b in balls:
            t = ratio(b)
            if s < t < s_next:
                s_next = t
        grow = [norm(b.cls) if ratio(b) <= s * (1 + 1e-12) else 0.0 for b in balls]
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                d = float(np.linalg.norm(balls[i].center - balls[j].center))
                ri, rj = balls[i].radius, balls[j].radius
                rate = grow[i] + grow[j]
                if rate > 0:
                    sc = s + (d - ri - rj) / rate
                    if sc < s_next:
                        s_next = max(sc, s)
        for b, g in zip(balls, grow):
            if g > 0:
                bound += g * (L(s_next) - L(s))
                b.radius = float(g * s_next)
        s = float(s_next)
        steps += 1
        merged = _merge_touching(balls)
        balls = merged
    return balls, bound, {"final_scale": s, "steps": steps}


def _merge_touching(balls, tol=1e-12):
    out = list(balls)
    changed = True
    while changed:
        changed = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                a, b = out[i], out[j]
                if np.linalg.norm(a.center - b.center) <= (a.radius + b.radius) * (1 + tol):
                    c, r = _enclosing(a.center, a.radius, b.center, b.radius)
                    out[i] = Ball(c, r, a.cls + b.cls)
                    del out[j]
                    changed = True
                    break
            if changed:
                break
    return out


def _initial_ball(comp: Component, spacing, eps):
    lo, hi = comp.points.min(axis=0), comp.points.max(axis=0)
    c = 0.5 * (lo + hi)
    r = float(np.linalg.norm(comp.points - c, axis=1).max()) + spacing
    return Ball(c, max(r, eps), comp.cls)


def ball_construction(u: Field, eps: float, p: BallParams = BallParams(), measured_energy=None, node_mask=None):
    """Certified lower bound for E_eps(u) from the essential set of u (2D)."""
    g = u.target.group
    comps = essential_components(u, p, node_mask)
    ess = [c for c in comps if c.essential]
    if measured_energy is None:
        measured_energy = energy(u, eps, density=False).total
    total = g.zero
    for c in ess:
        total = total + c.cls
    flags = {"components": len(comps), "essential": len(ess)}
    if not ess:
        return LowerBoundCertificate([], 0.0, measured_energy, total, flags)
    norm_sum = sum(g.norm(c.cls) for c in ess)
    if eps * abs(math.log(eps)) * norm_sum > p.eps0:
        raise NotAdmissible(f"eps |log eps| |sigma|_* = {eps * abs(math.log(eps)) * norm_sum:.3f} exceeds {p.eps0}")
    r = float(min(u.domain.dist_to_boundary(c.points).min() for c in ess))
    tau = p.tau if p.tau is not None else r / (8 * norm_sum)
    flags.update(r=r, tau=tau, norm=norm_sum)
    if 4 * tau * norm_sum >= r:
        raise NotAdmissible(f"4 tau |sigma|_* = {4 * tau * norm_sum:.4g} is not below r = {r:.4g}")
    balls = [_initial_ball(c, u.spacing, eps) for c in ess]
    balls, bound, info = grow_balls(balls, eps, tau, g.norm, p)
    flags.update(info)
    return LowerBoundCertificate(balls, bound, measured_energy, total, flags)


# ---------------------------------------------------------------------------
# three dimensions: slices


def slice_fields(u: Field, axis: int):
    """2D slices orthogonal to ``axis``, with node masks that keep the slice energies below the 3D energy."""
    from .fields import Domain

    inside = u.inside
    ax = [a for a in range(3) if a != axis]
    dom = Domain("box", [u.domain.lo[a] for a in ax], [u.domain.hi[a] for a in ax])
    out = []
    for i in range(1, u.shape[axis] - 1):
        sl = [slice(None)] * 3
        mask = np.ones(tuple(u.shape[a] for a in ax), dtype=bool)
        for k in (i - 1, i, i + 1):
            sl[axis] = k
            mask &= inside[tuple(sl)]
        sl[axis] = i
        vals = u.values[tuple(sl)]
        f = Field(vals, [u.origin[a] for a in ax], u.spacing, u.target, dom)
        f.__dict__["inside"] = mask
        f.__dict__["dirichlet"] = np.zeros_like(mask)
        out.append((i, f))
    return out


def slice_certificate(u: Field, eps: float, axis: int = 0, p: BallParams = BallParams()):
    """Sum over slices of spacing * (2D certificate); slices that are not certifiable add 0."""
    total = 0.0
    rows = []
    for i, f in slice_fields(u, axis):
        if not f.inside.any():
            continue
        e2 = energy(f, eps, density=False).total
        try:
            cert = _ball_construction_masked(f, eps, p, e2)
            b, status = cert.certified_bound, "ok"
        except (BoundaryTouch, NotAdmissible) as exc:
            b, status = 0.0, type(exc).__name__
        total += u.spacing * b
        rows.append({"index": i, "bound": b, "energy": e2, "status": status})
    return total, rows


def _ball_construction_masked(f, eps, p, e2):
    # the slice is a box grid with an explicit mask; distances to the boundary
    # are measured to the complement of the mask
    dist = ndimage.distance_transform_edt(f.inside) * f.spacing
    comps = essential_components(f, p, node_mask=f.inside)
    ess = [c for c in comps if c.essential]
    g = f.target.group
    total = g.zero
    for c in ess:
        total = total + c.cls
    if not ess:
        return LowerBoundCertificate([], 0.0, e2, total)
    norm_sum = sum(g.norm(c.cls) for c in ess)
    if eps * abs(math.log(eps)) * norm_sum > p.eps0:
        raise NotAdmissible("slice not admissible")
    r = float(min(dist[tuple(c.nodes.T)].min() for c in ess))
    tau = p.tau if p.tau is not None else r / (8 * norm_sum)
    if 4 * tau * norm_sum >= r:
        raise NotAdmissible("slice collar too thin")
    balls, bound, info = grow_balls([_initial_ball(c, f.spacing, eps) for c in ess], eps, tau, g.norm, p)
    return LowerBoundCertificate(balls, bound, e2, total, info)
