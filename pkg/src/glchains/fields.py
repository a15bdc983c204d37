"""Sampled maps u: Omega -> R^m on uniform grids.

A field stores node values of shape ``(*shape, m)`` on the lattice
``origin + spacing * index``. The domain is described analytically (box,
disk, annulus, ball or solid torus); the inside mask and the Dirichlet band
(inside nodes closer than one spacing to the boundary) are derived from it.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from .chains import PolyChain
from .groups import GroupElement, _vec_to_mat, director_to_q
from .manifolds import TargetManifold, get_target

DOMAIN_KINDS = ("box", "disk", "annulus", "ball", "solid_torus")


class InvalidDescriptor(ValueError):
    pass


class SimplexTouchesBoundary(ValueError):
    pass


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    kind: str
    lo: tuple
    hi: tuple
    center: tuple = None
    radius: float = None
    inner: float = None
    major: float = None

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise InvalidDescriptor(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def ndim(self):
        return len(self.lo)

    def _c(self):
        return np.zeros(self.ndim) if self.center is None else np.asarray(self.center)

    def dist_to_boundary(self, x):
        """Distance to the boundary for inside points, negative outside."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            lo, hi = np.asarray(self.lo), np.asarray(self.hi)
            return np.minimum(x - lo, hi - x).min(axis=-1)
        r = np.linalg.norm(x - self._c(), axis=-1)
        if self.kind in ("disk", "ball"):
            return self.radius - r
        if self.kind == "annulus":
            return np.minimum(self.radius - r, r - self.inner)
        # solid torus around the z axis: tube of radius `radius` around the circle of radius `major`
        rho = np.hypot(x[..., 0], x[..., 1])
        return self.radius - np.hypot(rho - self.major, x[..., 2])

    def inside(self, x, tol=1e-12):
        return self.dist_to_boundary(x) >= -tol

    def to_json(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_json(cls, d):
        return cls(**d)


def box_domain(lo, hi):
    return Domain("box", lo, hi)


def _padded(kind, half_extent, n, pad_nodes=2, **kw):
    """Domain whose bounding box leaves ``pad_nodes`` spacings around the shape."""
    half_extent = np.asarray(half_extent, dtype=float)
    h = 2 * half_extent.max() / (n - 1 - 2 * pad_nodes)
    c = np.zeros(len(half_extent)) if kw.get("center") is None else np.asarray(kw["center"])
    return Domain(kind, c - half_extent - pad_nodes * h, c + half_extent + pad_nodes * h, **kw)


def disk_domain(radius=1.0, n=128, center=(0.0, 0.0)):
    return _padded("disk", [radius, radius], n, center=center, radius=radius)


def annulus_domain(inner, outer, n=256):
    return _padded("annulus", [outer, outer], n, center=(0.0, 0.0), radius=outer, inner=inner)


def ball_domain(radius=1.0, n=32):
    return _padded("ball", [radius] * 3, n, center=(0.0, 0.0, 0.0), radius=radius)


def solid_torus_domain(n=48, major=2.0, minor=1.0):
    ext = major + minor
    return _padded("solid_torus", [ext, ext, minor], n, radius=minor, major=major)


# ---------------------------------------------------------------------------
# fields


@dataclass
class Field:
    values: np.ndarray
    origin: np.ndarray
    spacing: float
    target: TargetManifold
    domain: Domain
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if self.values.shape[-1] != self.target.m:
            raise ValueError("value dimension does not match the target")

    @property
    def shape(self):
        return self.values.shape[:-1]

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def m(self):
        return self.values.shape[-1]

    def coords(self):
        axes = [self.origin[a] + self.spacing * np.arange(s) for a, s in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @cached_property
    def inside(self):
        return self.domain.inside(self.coords())

    @cached_property
    def dirichlet(self):
        return self.inside & (self.domain.dist_to_boundary(self.coords()) < self.spacing)

    @property
    def free(self):
        return self.inside & ~self.dirichlet

    def with_values(self, values):
        new = replace(self, values=values, meta=dict(self.meta))
        # masks depend only on geometry; share them
        for k in ("inside", "dirichlet", "stencil"):
            if k in self.__dict__:
                new.__dict__[k] = self.__dict__[k]
        return new

    def copy(self):
        return self.with_values(self.values.copy())


def make_grid(domain: Domain, n: int):
    """Spacing and shape for ``n`` nodes along the longest bounding-box side."""
    ext = np.asarray(domain.hi) - np.asarray(domain.lo)
    h = ext.max() / (n - 1)
    shape = tuple(int(round(e / h)) + 1 for e in ext)
    return h, shape


def sample_field(domain: Domain, n: int, target: TargetManifold, fn) -> Field:
    """Field with values fn(coords) (an array of shape (*shape, m))."""
    h, shape = make_grid(domain, n)
    proto = Field(np.zeros(shape + (target.m,)), domain.lo, h, target, domain)
    return proto.with_values(np.asarray(fn(proto.coords()), dtype=float))


def constant_field(domain: Domain, n: int, target: TargetManifold, value=None) -> Field:
    p = target.base_point() if value is None else np.asarray(value, dtype=float)
    return sample_field(domain, n, target, lambda x: np.broadcast_to(p, x.shape[:-1] + (target.m,)).copy())


# ---------------------------------------------------------------------------
# boundary data


def _clamp(values, bound):
    r = np.linalg.norm(values, axis=-1, keepdims=True)
    return np.where(r > bound, values * (bound / np.maximum(r, 1e-300)), values)


def _as_target(t):
    if isinstance(t, TargetManifold):
        return t
    if isinstance(t, dict):
        return get_target(t.get("kind", "circle"), t.get("theta0"), t.get("delta_star"))
    return get_target(t or "circle")


def _phase_to_values(target, phase, amp=1.0):
    """N-valued map from one phase (circle/rp2) or a pair of phases (torus)."""
    amp = np.asarray(amp, dtype=float)
    if target.kind == "circle":
        return amp[..., None] * np.stack([np.cos(phase), np.sin(phase)], axis=-1)
    if target.kind == "torus":
        p1, p2 = phase
        return amp[..., None] * np.stack([np.cos(p1), np.sin(p1), np.cos(p2), np.sin(p2)], axis=-1)
    n = np.stack([np.cos(phase / 2), np.sin(phase / 2), np.zeros_like(phase)], axis=-1)
    return amp[..., None] * director_to_q(n)


def _seed_points(d, radius, r_frac=0.1):
    k = abs(int(d))
    if k <= 1:
        return np.zeros((k, 2))
    t = 2 * np.pi * np.arange(k) / k
    return r_frac * radius * np.stack([np.cos(t), np.sin(t)], axis=-1)


def _disk_values(x, degree, radius, target, seed_frac=0.1):
    """Boundary angle datum e^{i d theta} in the band, product-of-zeros seed inside."""
    z = (x[..., 0] + 1j * x[..., 1]) / radius
    theta = np.angle(z)
    if target.kind == "torus":
        d1, d2 = degree
        band = _phase_to_values(target, (d1 * theta, d2 * theta))
        s1, s2 = _zero_product(z, d1, seed_frac), _zero_product(z, d2, seed_frac)
        seed = np.stack([s1.real, s1.imag, s2.real, s2.imag], axis=-1)
        return band, _clamp(seed, target.radius)
    d = int(degree[0] if np.ndim(degree) else degree)
    if target.kind == "rp2":
        # half-integer director winding: the director turns by d*pi around the boundary
        band = _phase_to_values(target, d * theta)
        return band, np.minimum(np.abs(z), 1.0)[..., None] * band
    band = _phase_to_values(target, d * theta)
    s = _zero_product(z, d, seed_frac)
    return band, _clamp(np.stack([s.real, s.imag], axis=-1), 1.0)


def _zero_product(z, d, seed_frac):
    pts = _seed_points(d, 1.0, seed_frac)
    out = np.ones_like(z)
    for a in pts[:, 0] + 1j * pts[:, 1]:
        out = out * (z - a)
    return np.conj(out) if d < 0 else out


def _stereo_phase(x, points, classes):
    """Sum of sigma_j arg(w - w_j), w the orientation-corrected stereographic coordinate.

    Points live on the sphere around the origin; the projection pole is a
    unit vector far from all singular points, and the conjugation makes the
    winding counterclockwise with respect to the outward normal.
    """
    u = x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-300)
    pts = points / np.linalg.norm(points, axis=-1, keepdims=True)
    rng = np.random.default_rng(0)
    cand = rng.normal(size=(256, 3))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    pole = cand[np.argmin((cand @ pts.T).max(axis=1))]
    # orthonormal frame (e1, e2, pole)
    e1 = np.cross(pole, [1.0, 0.0, 0.0] if abs(pole[0]) < 0.9 else [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(pole, e1)

    def stereo(v):
        den = 1.0 - v @ pole
        return ((v @ e1) - 1j * (v @ e2)) / np.maximum(den, 1e-300)

    w = stereo(u)
    phase = np.zeros(x.shape[:-1] + (np.shape(classes)[1],))
    for p, s in zip(pts, np.asarray(classes, dtype=float)):
        phase += np.angle(w - stereo(p))[..., None] * s
    return phase


def make_boundary_datum(spec) -> Field:
    """Field with Dirichlet band set to the datum and interior seeded.

    ``spec`` is a dict with ``kind`` one of

    * ``disk``: ``degree`` (int, or pair for the torus target), ``radius``, ``n``
    * ``sphere``: ``points`` on the sphere of radius ``radius`` and their
      ``classes`` (must add up to zero), ``n``
    * ``solid_torus``: ``n``; u(Psi(x, theta)) = x on the boundary and inside
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidDescriptor("datum descriptor must be a dict with a 'kind'")
    kind = spec["kind"]
    target = _as_target(spec.get("target", "circle"))
    n = int(spec.get("n", 128 if kind == "disk" else 48))
    if n < 8:
        raise InvalidDescriptor("n must be at least 8")

    if kind == "disk":
        R = float(spec.get("radius", 1.0))
        deg = spec.get("degree", 1)
        if target.kind == "torus":
            if np.ndim(deg) != 1 or len(deg) != 2:
                raise InvalidDescriptor("torus target needs a degree pair")
            deg = tuple(int(v) for v in deg)
        elif np.ndim(deg) != 0:
            raise InvalidDescriptor("degree must be an integer")
        dom = disk_domain(R, n)
        h, shape = make_grid(dom, n)
        f = Field(np.zeros(shape + (target.m,)), dom.lo, h, target, dom)
        band, seed = _disk_values(f.coords(), deg, R, target, spec.get("seed_frac", 0.1))
    elif kind == "sphere":
        R = float(spec.get("radius", 1.0))
        pts = np.asarray(spec.get("points", []), dtype=float).reshape(-1, 3)
        cls = spec.get("classes", [])
        if len(cls) != len(pts):
            raise InvalidDescriptor("one class per point is required")
        cls = np.asarray(cls, dtype=np.int64).reshape(len(pts), -1)
        if target.kind == "rp2":
            if np.any(cls.sum(axis=0) % 2):
                raise InvalidDescriptor("boundary classes must add up to zero")
            cls = _lift_z2(cls[:, 0])
        elif np.any(cls.sum(axis=0)):
            raise InvalidDescriptor("boundary classes must add up to zero")
        need = 2 if target.kind == "torus" else 1
        if cls.shape[1] != need:
            raise InvalidDescriptor("class width does not match the target group")
        dom = ball_domain(R, n)
        h, shape = make_grid(dom, n)
        f = Field(np.zeros(shape + (target.m,)), dom.lo, h, target, dom)
        x = f.coords()
        ph = _stereo_phase(x, pts, cls)
        ph = (ph[..., 0], ph[..., 1]) if target.kind == "torus" else ph[..., 0]
        band = _phase_to_values(target, ph)
        seed = np.minimum(np.linalg.norm(x, axis=-1) / R, 1.0)[..., None] * band
    elif kind == "solid_torus":
        if target.kind != "circle":
            raise InvalidDescriptor("the solid-torus datum takes values in the circle")
        dom = solid_torus_domain(n)
        h, shape = make_grid(dom, n)
        f = Field(np.zeros(shape + (target.m,)), dom.lo, h, target, dom)
        x = f.coords()
        xt = np.stack([np.hypot(x[..., 0], x[..., 1]) - dom.major, x[..., 2]], axis=-1)
        r = np.linalg.norm(xt, axis=-1, keepdims=True)
        band = xt / np.maximum(r, 1e-300)
        seed = _clamp(xt, 1.0)
    else:
        raise InvalidDescriptor(f"unknown datum kind {kind!r}")

    values = np.where(f.dirichlet[..., None], band, np.where(f.inside[..., None], seed, 0.0))
    out = f.with_values(values)
    out.meta["datum"] = {k: v for k, v in spec.items() if k != "target"}
    out.meta["datum"]["target"] = target.kind
    return out


def _lift_z2(bits):
    """Alternating +-1 integer lift of Z/2 classes with zero sum (bits sum to 0 mod 2)."""
    out = np.zeros((len(bits), 1), dtype=np.int64)
    sign = 1
    for i, b in enumerate(bits):
        if b % 2:
            out[i, 0] = sign
            sign = -sign
    return out


# ---------------------------------------------------------------------------
# dipoles


def solid_angle(x, vertices):
    """Signed solid angle of the planar polygon at points x (fan + two-argument arctangent)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(vertices, dtype=float)
    total = np.zeros(x.shape[:-1])
    r0 = v[0] - x
    n0 = np.linalg.norm(r0, axis=-1)
    for i in range(1, len(v) - 1):
        r1, r2 = v[i] - x, v[i + 1] - x
        n1, n2 = np.linalg.norm(r1, axis=-1), np.linalg.norm(r2, axis=-1)
        num = np.einsum("...i,...i->...", r0, np.cross(r1, r2))
        den = (
            n0 * n1 * n2
            + np.einsum("...i,...i->...", r0, r1) * n2
            + np.einsum("...i,...i->...", r0, r2) * n1
            + np.einsum("...i,...i->...", r1, r2) * n0
        )
        total += 2.0 * np.arctan2(num, den)
    return total


def dipole_phase(x, T):
    """Multivalued phase whose loops around the oriented boundary of T wind once.

    2D segment a -> b: the angle subtended, arg((x - b)/(x - a)), which winds
    +1 around b and -1 around a. 3D polygon: minus half the signed solid angle,
    which winds +1 around each boundary edge traversed in vertex order under
    the chain orientation used for extraction.
    """
    T = np.asarray(T, dtype=float)
    x = np.asarray(x, dtype=float)
    if T.shape[-1] == 2:
        za = (x[..., 0] - T[0, 0]) + 1j * (x[..., 1] - T[0, 1])
        zb = (x[..., 0] - T[1, 0]) + 1j * (x[..., 1] - T[1, 1])
        return np.angle(zb * np.conj(za))
    return -0.5 * solid_angle(x, T)


def _as_element(group, s):
    return s if isinstance(s, GroupElement) else group.element(s)


def _rotate_directors(values, alpha):
    """Rotate the canonical-sign director of each Q by alpha in a plane containing it."""
    _, vecs = np.linalg.eigh(_vec_to_mat(values))
    n = vecs[..., :, -1]
    idx = np.argmax(np.abs(n), axis=-1)
    n = n * np.sign(np.take_along_axis(n, idx[..., None], axis=-1))
    c = np.where((np.abs(n[..., 2:3]) < 0.9), np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    b = c - (c * n).sum(axis=-1, keepdims=True) * n
    b /= np.linalg.norm(b, axis=-1, keepdims=True)
    n2 = np.cos(alpha)[..., None] * n + np.sin(alpha)[..., None] * b
    scale = np.linalg.norm(values, axis=-1, keepdims=True)
    return scale * director_to_q(n2)


def insert_dipole(w: Field, T, sigma) -> Field:
    """Field whose singular chain is that of ``w`` plus sigma times the boundary of T."""
    g = w.target.group
    sigma = _as_element(g, sigma)
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[1] != w.ndim or (w.ndim == 2 and len(T) != 2) or (w.ndim == 3 and len(T) < 3):
        raise ValueError("T must be a segment (2D) or a planar polygon (3D) in the field's space")
    if np.any(w.domain.dist_to_boundary(T) <= w.spacing):
        raise SimplexTouchesBoundary("the simplex must lie strictly inside the domain")
    if not sigma:
        return w.copy()
    phase = dipole_phase(w.coords(), T)
    v = w.values
    if w.target.kind == "circle":
        z = (v[..., 0] + 1j * v[..., 1]) * np.exp(1j * sigma.value[0] * phase)
        out = np.stack([z.real, z.imag], axis=-1)
    elif w.target.kind == "torus":
        z1 = (v[..., 0] + 1j * v[..., 1]) * np.exp(1j * sigma.value[0] * phase)
        z2 = (v[..., 2] + 1j * v[..., 3]) * np.exp(1j * sigma.value[1] * phase)
        out = np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)
    else:
        out = _rotate_directors(v, phase / 2)
    out = np.where(w.inside[..., None], out, v)
    return w.with_values(out)


# ---------------------------------------------------------------------------
# regularisation and projection


def regularize(w: Field, S: PolyChain, eps: float) -> Field:
    """min(dist(x, spt S)/eps, 1) * w(x)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not S:
        return w.copy()
    factor = np.clip(S.support_distance(w.coords()) / eps, 0.0, 1.0)
    return w.with_values(w.values * factor[..., None])


def project_near_manifold(u: Field, y, eps: float) -> Field:
    """xi_eps(psi(u - y)) * rho_y(u) per node; nodes with u - y on the complex go to 0."""
    tm = u.target
    y = np.broadcast_to(np.asarray(y, dtype=float), (tm.m,))
    flat = u.values.reshape(-1, tm.m)
    z = flat - y
    psi = tm.cutoff_psi(z)
    ok = tm.dist_to_complex(z) >= 1e-9
    out = np.zeros_like(flat)
    if ok.any():
        out[ok] = np.minimum(psi[ok] / eps, 1.0)[:, None] * tm.retraction(flat[ok], y)
    return u.with_values(out.reshape(u.values.shape))


# ---------------------------------------------------------------------------
# explicit competitors


def _blaschke_radius(d):
    """Radius of the symmetric |d|-vortex ring minimising the disk renormalised energy."""
    k = abs(d)
    if k <= 1:
        return 0.0

    def W(r):
        a = r * np.exp(2j * np.pi * np.arange(k) / k)
        diff = np.abs(a[:, None] - a[None, :])
        np.fill_diagonal(diff, 1.0)
        return -np.pi * np.log(diff).sum() - np.pi * np.log(np.abs(1 - a[:, None] * np.conj(a[None, :]))).sum()

    return float(minimize_scalar(W, bounds=(0.05, 0.95), method="bounded").x)


def disk_competitor(datum: Field, eps: float, points=None):
    """Regularised Blaschke-product competitor for the degree-d disk datum (circle target).

    The N-valued map prod_j (z - a_j)(1 - conj(a_j) z)/|...| (z scaled by R)
    equals e^{i d theta} on the boundary circle; it is regularised around its
    zeros. Dirichlet nodes keep the datum values. Returns (field, point chain).
    """
    if datum.target.kind != "circle" or datum.domain.kind != "disk":
        raise ValueError("the explicit competitor is implemented for the circle disk datum")
    d = int(datum.meta.get("datum", {}).get("degree", 1))
    R = datum.domain.radius
    if points is None:
        r = _blaschke_radius(d)
        k = abs(d)
        points = R * r * np.stack([np.cos(2 * np.pi * np.arange(k) / k), np.sin(2 * np.pi * np.arange(k) / k)], -1)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x = datum.coords()
    z = (x[..., 0] + 1j * x[..., 1]) / R
    w = np.ones_like(z)
    for a in (points[:, 0] + 1j * points[:, 1]) / R:
        f = (z - a) * (1 - np.conj(a) * z)
        w = w * f / np.maximum(np.abs(f), 1e-300)
    if d < 0:
        w = np.conj(w)
    vals = np.stack([w.real, w.imag], axis=-1)
    g = datum.target.group
    S = PolyChain(0, g, [(p, g.element(int(np.sign(d)))) for p in points], 2)
    comp = regularize(datum.with_values(vals), S, eps)
    out = np.where(datum.dirichlet[..., None], datum.values, np.where(datum.inside[..., None], comp.values, 0.0))
    return datum.with_values(out), S


# ---------------------------------------------------------------------------
# .glf binary format


MAGIC = b"GLCH"
VERSION = 1


def save_field(path, u: Field):
    """Header (magic, version, m, ndim, shape, spacing, JSON extras) + little-endian float64 node-major values."""
    extras = json.dumps(
        {
            "origin": u.origin.tolist(),
            "domain": u.domain.to_json(),
            "target": {"kind": u.target.kind, "theta0": u.target.theta0, "delta_star": u.target.delta_star},
            "meta": u.meta,
        }
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, u.m, u.ndim))
        fh.write(struct.pack(f"<{u.ndim}I", *u.shape))
        fh.write(struct.pack("<d", u.spacing))
        dk = u.domain.kind.encode()
        fh.write(struct.pack("<I", len(dk)) + dk)
        fh.write(struct.pack("<I", len(extras)) + extras)
        fh.write(u.values.astype("<f8").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not a .glf field file")
    version, m, ndim = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported .glf version {version}")
    off = 16
    shape = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    (lk,) = struct.unpack_from("<I", data, off)
    off += 4 + lk
    (le,) = struct.unpack_from("<I", data, off)
    extras = json.loads(data[off + 4 : off + 4 + le])
    off += 4 + le
    values = np.frombuffer(data, dtype="<f8", count=math.prod(shape) * m, offset=off).reshape(tuple(shape) + (m,))
    t = extras["target"]
    return Field(
        values.astype(float),
        extras["origin"],
        h,
        get_target(t["kind"], t["theta0"], t["delta_star"]),
        Domain.from_json(extras["domain"]),
        extras.get("meta", {}),
    )
