"""Discrete singular sets: plaquette homotopy classes and their dual chain.

A singular grid is the lattice ``a + h Z^d``. Every lattice edge whose
bilinear/trilinear interpolation stencil stays inside the field's domain is
sampled (>= 8 points), the samples are pushed to N by the retraction rho_y,
and the increments of their phase data are summed once per edge. A
plaquette's class is the signed sum of its four edge sums, so neighbouring
plaquettes share edge data and the dual chain has no interior boundary.

Orientation conventions
  2D: the class of a square is read counterclockwise and sits at its centre.
  3D: the plaquette with normal e_c is read clockwise about e_c, i.e. in the
      order (e_{c+2}, e_{c+1}), and the class is carried by the dual edge
      pointing along +e_c through the plaquette centre.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import map_coordinates

from . import kernels
from .chains import PolyChain
from .energy import energy
from .fields import Field
from .groups import GroupElement
from .manifolds import Undersampled

MIN_SAMPLES = 8
MAX_SAMPLES = 64


class SkeletonTooClose(ValueError):
    pass


class SingularGrid:
    def __init__(self, field: Field, h: float, offset):
        offset = np.asarray(offset, dtype=float)
        if not h > 2 * field.spacing:
            raise ValueError("singular grid size must exceed twice the field spacing")
        self.field = field
        self.h = float(h)
        self.offset = offset
        lo = np.asarray(field.domain.lo)
        hi = np.asarray(field.domain.hi)
        i0 = np.floor((lo - offset) / h).astype(int)
        i1 = np.ceil((hi - offset) / h).astype(int)
        self.base = offset + h * i0
        self.nv = tuple(int(v) for v in (i1 - i0 + 1))
        self._cache = {}

    @property
    def ndim(self):
        return self.field.ndim

    def __repr__(self):
        return f"SingularGrid(h={self.h:.4g}, offset={np.round(self.offset, 4).tolist()}, vertices={self.nv})"

    def vertex(self, idx):
        return self.base + self.h * np.asarray(idx, dtype=float)

    # -- edge sampling -------------------------------------------------------
    def edge_shape(self, axis):
        return tuple(n - 1 if a == axis else n for a, n in enumerate(self.nv))

    def edge_points(self, axis, S):
        """Sample points (*edge_shape, S+1, d), both endpoints included."""
        shp = self.edge_shape(axis)
        idx = np.stack(np.meshgrid(*[np.arange(n) for n in shp], indexing="ij"), axis=-1).astype(float)
        start = self.base + self.h * idx
        t = np.arange(S + 1) / S
        e = np.zeros(self.ndim)
        e[axis] = self.h
        return start[..., None, :] + t[:, None] * e

    def _interp(self, pts):
        """Field values at points (N, d) by multilinear interpolation, and a stencil-inside flag."""
        f = self.field
        q = (pts - f.origin) / f.spacing
        shape = np.asarray(f.shape)
        cell = np.floor(q).astype(int)
        inb = np.all((q >= -1e-9) & (q <= shape - 1 + 1e-9), axis=1)
        cell = np.clip(cell, 0, shape - 2)
        st = _cells(f)
        ok = inb & st[tuple(cell.T)]
        vals = np.stack([map_coordinates(f.values[..., c], q.T, order=1, mode="nearest") for c in range(f.m)], axis=-1)
        return vals, ok

    def edge_geometry(self, axis):
        """(values at MIN_SAMPLES+1 points per edge, valid mask, max dist(u, N) per edge)."""
        key = ("geom", axis)
        if key not in self._cache:
            tm = self.field.target
            shp = self.edge_shape(axis)
            ne = int(np.prod(shp))
            pts = self.edge_points(axis, MIN_SAMPLES).reshape(-1, self.ndim)
            vals, ok = self._interp(pts)
            valid = ok.reshape(ne, -1).all(axis=1)
            vals = vals.reshape(ne, MIN_SAMPLES + 1, tm.m)
            dist = np.full(ne, np.nan)
            dist[valid] = tm.dist(vals[valid]).max(axis=1)
            self._cache[key] = (vals, valid, dist)
        return self._cache[key]

    def edge_data(self, axis, y=None):
        """(phase sums (*edge_shape, p), valid mask) for the retraction rho_y."""
        key = (axis, None if y is None else tuple(np.asarray(y, dtype=float)))
        if key in self._cache:
            return self._cache[key]
        tm = self.field.target
        shp = self.edge_shape(axis)
        ne = int(np.prod(shp))
        vals, valid, _ = self.edge_geometry(axis)
        p = 2 if tm.kind == "torus" else 1
        sums = np.full((ne, p), np.nan)
        todo = np.flatnonzero(valid)
        S = MIN_SAMPLES
        while todo.size:
            if S > MIN_SAMPLES:
                sub = self.edge_points(axis, S).reshape(ne, S + 1, self.ndim)[todo]
                v, _ = self._interp(sub.reshape(-1, self.ndim))
                v = v.reshape(len(todo), S + 1, tm.m)
            else:
                v = vals[todo]
            s, bad = _edge_sums(tm, v, y)
            sums[todo[~bad]] = s[~bad]
            todo = todo[bad]
            if todo.size and S >= MAX_SAMPLES:
                raise Undersampled(f"{todo.size} edge(s) still undersampled at {S} samples")
            S *= 2
        out = (sums.reshape(shp + (p,)), valid.reshape(shp))
        self._cache[key] = out
        return out

    # -- checks and classes --------------------------------------------------
    def skeleton_max_dist(self):
        vals = [self.edge_geometry(a)[2] for a in range(self.ndim)]
        vals = np.concatenate([v[np.isfinite(v)] for v in vals])
        return float(vals.max()) if vals.size else 0.0

    def plaquette_sums(self, y=None):
        """Per orientation: (loop sums, validity). 2D: one array; 3D: three (normal axis c)."""
        E = [self.edge_data(a, y) for a in range(self.ndim)]
        out = []
        for c in (range(3) if self.ndim == 3 else [None]):
            if c is None:
                p, q = 0, 1
            else:
                p, q = (c + 1) % 3, (c + 2) % 3
            sp, vp = E[p][0], E[p][1]
            sq, vq = E[q][0], E[q][1]
            # trim to plaquette lattice (lower corners)
            pl = [n for n in self.nv]
            pl[p] -= 1
            pl[q] -= 1

            def part(arr, shift_axis):
                sl = [slice(0, n) for n in pl]
                if shift_axis is not None:
                    sl[shift_axis] = slice(1, pl[shift_axis] + 1)
                return arr[tuple(sl)]

            tot = part(sp, None) + part(sq, p) - part(sp, q) - part(sq, None)
            valid = part(vp, None) & part(vq, p) & part(vp, q) & part(vq, None)
            if c is not None:
                tot = -tot
            out.append((tot, valid))
        return out

    def classes(self, y=None):
        """Per orientation: (integer class coordinates, validity)."""
        tm = self.field.target
        res = []
        for tot, valid in self.plaquette_sums(y):
            tot = np.where(valid[..., None], tot, 0.0)
            res.append((tm.class_array(tot if tm.kind == "torus" else tot[..., 0]), valid))
        return res


def _cells(f: Field):
    c = f.__dict__.get("_cellmask")
    if c is None:
        d = f.ndim
        c = np.ones(tuple(s - 1 for s in f.shape), dtype=bool)
        for corner in np.ndindex(*(2,) * d):
            c &= f.inside[tuple(slice(k, k + s - 1) for k, s in zip(corner, f.shape))]
        f.__dict__["_cellmask"] = c
    return c


def _edge_sums(tm, v, y):
    """Phase-increment sums along sampled edges (E, S+1, m) and an undersampling flag per edge."""
    ne, ns, m = v.shape
    yv = np.zeros(m) if y is None else np.asarray(y, dtype=float)
    p = tm.retraction(v.reshape(-1, m), yv).reshape(ne, ns, m)
    if tm.kind == "rp2":
        ph = tm.phases(p)
        dots = (ph[:, 1:] * ph[:, :-1]).sum(axis=2)
        # consecutive lines more than ~60 degrees apart count as undersampled
        bad = np.abs(dots).min(axis=1) < 0.5
        return (dots < 0).sum(axis=1)[:, None].astype(float), bad
    ph = tm.phases(p)
    if tm.kind == "circle":
        ph = ph[..., None]
    sums = np.zeros((ne, ph.shape[-1]))
    bad = np.zeros(ne, dtype=bool)
    for j in range(ph.shape[-1]):
        s, mx = kernels.wrapped_sums(np.ascontiguousarray(ph[..., j]))
        sums[:, j] = s
        bad |= mx >= np.pi / 2
    return sums, bad


def default_h(u: Field, eps: float) -> float:
    size = float(np.max(np.asarray(u.domain.hi) - np.asarray(u.domain.lo)))
    return max(4 * u.spacing, size / (8 * abs(math.log(eps))))


def skeleton_check(u: Field, g: SingularGrid) -> float:
    """Largest dist(u, N) over the sampled edges of the grid."""
    if g.field is not u:
        g = SingularGrid(u, g.h, g.offset)
    return g.skeleton_max_dist()


def threshold(u: Field) -> float:
    tm = u.target
    return tm.dist_n_x - tm.delta_star


def choose_grid(u: Field, h: float, trials: int = 16, seed: int = 0, eps: float = None, penalty: float = 100.0):
    """Among random offsets, the grid with the least skeleton energy + penalty * max dist(u, N).

    The skeleton energy integrates the nodal Dirichlet density (plus the
    potential term when ``eps`` is given) along all sampled edges.
    """
    rng = np.random.default_rng(seed)
    dens = _node_density(u, eps)
    best, best_score = None, np.inf
    for _ in range(max(1, int(trials))):
        g = SingularGrid(u, h, rng.uniform(0.0, h, size=u.ndim))
        integral = 0.0
        for a in range(u.ndim):
            pts = g.edge_points(a, MIN_SAMPLES)
            flat = pts.reshape(-1, u.ndim)
            q = (flat - u.origin) / u.spacing
            dv = map_coordinates(dens, q.T, order=1, mode="nearest")
            _, _, dist = g.edge_geometry(a)
            valid = np.isfinite(dist).reshape(-1)
            dv = dv.reshape(len(valid), -1)[valid]
            integral += float(dv.sum()) * g.h / (MIN_SAMPLES + 1)
        score = integral + penalty * g.skeleton_max_dist()
        if score < best_score:
            best, best_score = g, score
    best.score = best_score
    return best


def _node_density(u: Field, eps):
    v = u.values
    dens = np.zeros(u.shape)
    for a in range(u.ndim):
        g = np.gradient(v, u.spacing, axis=a)
        dens += 0.5 * (g * g).sum(axis=-1)
    if eps is not None:
        dens += u.target.potential(v) / eps**2
    return np.where(u.inside, dens, 0.0)


def plaquette_class(u: Field, g: SingularGrid, K, y=None) -> GroupElement:
    """Class of the plaquette K: (i, j) in 2D, (c, i, j, k) in 3D (c = normal axis)."""
    if g.field is not u:
        g = SingularGrid(u, g.h, g.offset)
    res = g.classes(y)
    if u.ndim == 2:
        cls, valid = res[0]
        idx = tuple(K)
    else:
        cls, valid = res[K[0]]
        idx = tuple(K[1:])
    if not valid[idx]:
        raise ValueError("plaquette is not inside the sampled region")
    return u.target.group.element(tuple(int(v) for v in cls[idx]))


def _check_threshold(u, g):
    d = g.skeleton_max_dist()
    if d >= threshold(u):
        raise SkeletonTooClose(f"skeleton comes {d:.3f} from N (limit {threshold(u):.3f}); choose another grid")
    return d


def extract_chain(u: Field, g: SingularGrid, y=None, check_boundary=True) -> PolyChain:
    """Dual chain T = sum gamma(K) [K'] of the nonzero plaquette classes."""
    if g.field is not u:
        g = SingularGrid(u, g.h, g.offset)
    _check_threshold(u, g)
    grp = u.target.group
    res = g.classes(y)
    cells = []
    if u.ndim == 2:
        cls, valid = res[0]
        for idx in zip(*np.nonzero(np.any(cls != 0, axis=-1))):
            ctr = g.vertex(np.asarray(idx) + 0.5)
            cells.append((ctr, grp.element(tuple(int(v) for v in cls[idx]))))
        return PolyChain(0, grp, cells, 2)
    for c, (cls, valid) in enumerate(res):
        e = np.zeros(3)
        e[c] = 0.5 * g.h
        half = np.full(3, 0.5)
        half[c] = 0.0
        for idx in zip(*np.nonzero(np.any(cls != 0, axis=-1))):
            ctr = g.vertex(np.asarray(idx) + half)
            cells.append(((ctr - e, ctr + e), grp.element(tuple(int(v) for v in cls[idx]))))
    chain = PolyChain(1, grp, cells, 3)
    if check_boundary:
        bd = chain.boundary()
        if bd:
            interior = _interior_cubes(g, res)
            for pt, _ in bd:
                idx = tuple(np.rint((pt[0] - g.base) / g.h - 0.5).astype(int))
                inside = all(0 <= i < n for i, n in zip(idx, interior.shape)) and interior[idx]
                if inside:
                    raise AssertionError("dual chain has boundary at an interior cube")
    return chain


def _interior_cubes(g, res):
    """Cubes all of whose six faces are sampled plaquettes."""
    shape = tuple(n - 1 for n in g.nv)
    ok = np.ones(shape, dtype=bool)
    for c, (_, valid) in enumerate(res):
        lo = [slice(0, s) for s in shape]
        hi = list(lo)
        hi[c] = slice(1, shape[c] + 1)
        ok &= valid[tuple(lo)] & valid[tuple(hi)]
    return ok


def snap_points(g: SingularGrid, chain: PolyChain) -> PolyChain:
    """0-chain moved to the centres of the plaquettes containing its points (2D)."""
    cells = []
    for pt, m in chain:
        idx = np.floor((pt[0] - g.base) / g.h)
        cells.append((g.vertex(idx + 0.5), m))
    return PolyChain(0, chain.group, cells, chain.ambient_dim)


def sample_mass_bound(u: Field, g: SingularGrid, n_samples: int = 16, seed: int = 0):
    """(mean mass of extract_chain over y uniform in the delta_star-ball, int |grad u|^2, ratio)."""
    tm = u.target
    rng = np.random.default_rng(seed)
    masses = []
    for _ in range(n_samples):
        y = rng.normal(size=tm.m)
        y *= tm.delta_star * rng.uniform() ** (1.0 / tm.m) / np.linalg.norm(y)
        y *= 0.999
        masses.append(extract_chain(u, g, y).mass())
    avg = float(np.mean(masses)) if masses else 0.0
    dirichlet = 2.0 * energy(u, 1.0, density=False).dirichlet
    ratio = avg / dirichlet if dirichlet > 0 else 0.0
    return avg, dirichlet, ratio
