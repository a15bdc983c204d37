"""Polyhedral 0- and 1-chains with group coefficients.

A 0-chain is a finite sum of weighted points, a 1-chain a finite sum of
weighted oriented segments.  Coincident cells are merged on construction
(a reversed segment counts with the opposite multiplicity), so a chain is a
canonical value and can be compared with ``==``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from .groups import CoefficientGroup, GroupElement, get_group

_KEY_SCALE = 1e9


class NonZeroTotalClass(ValueError):
    pass


class Degenerate(ValueError):
    pass


def _key(p):
    return tuple(int(round(v * _KEY_SCALE)) for v in p)


class PolyChain:
    def __init__(self, dim: int, group: CoefficientGroup, cells: Iterable = (), ambient_dim: int = 3):
        if dim not in (0, 1):
            raise ValueError("only 0- and 1-chains are supported")
        self.dim = dim
        self.group = group
        self.ambient_dim = ambient_dim
        merged = {}
        for geom, mult in cells:
            group.check(mult)
            geom = np.asarray(geom, dtype=float).reshape(dim + 1, ambient_dim)
            if dim == 1:
                ka, kb = _key(geom[0]), _key(geom[1])
                if ka == kb:
                    continue
                if ka > kb:
                    geom, mult = geom[::-1], -mult
                key = (ka, kb)
            else:
                key = _key(geom[0])
            if key in merged:
                merged[key] = (merged[key][0], merged[key][1] + mult)
            else:
                merged[key] = (geom, mult)
        self._cells = tuple((g, m) for k, (g, m) in sorted(merged.items()) if m)

    # -- basic protocol ------------------------------------------------------
    @property
    def cells(self) -> Tuple[Tuple[np.ndarray, GroupElement], ...]:
        return self._cells

    def __len__(self):
        return len(self._cells)

    def __iter__(self):
        return iter(self._cells)

    def __bool__(self):
        return bool(self._cells)

    def __repr__(self):
        return f"PolyChain(dim={self.dim}, group={self.group.kind}, cells={len(self)})"

    def _like(self, cells):
        return PolyChain(self.dim, self.group, cells, self.ambient_dim)

    def _compatible(self, other):
        if not isinstance(other, PolyChain) or (other.dim, other.group, other.ambient_dim) != (
            self.dim,
            self.group,
            self.ambient_dim,
        ):
            raise TypeError("incompatible chains")

    def __add__(self, other):
        self._compatible(other)
        return self._like(list(self._cells) + list(other._cells))

    def __neg__(self):
        return self._like([(g, -m) for g, m in self._cells])

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        if not isinstance(other, PolyChain):
            return NotImplemented
        try:
            diff = self - other
        except TypeError:
            return False
        return not diff

    def scaled(self, s: GroupElement):
        """The chain with every multiplicity replaced by ``s`` (for unit-multiplicity chains)."""
        return self._like([(g, s) for g, _ in self._cells])

    # -- measurements --------------------------------------------------------
    def boundary(self) -> "PolyChain":
        if self.dim != 1:
            raise ValueError("boundary is only defined here for 1-chains")
        cells = []
        for g, m in self._cells:
            cells.append((g[1], m))
            cells.append((g[0], -m))
        return PolyChain(0, self.group, cells, self.ambient_dim)

    def lengths(self):
        if self.dim == 0:
            return np.ones(len(self))
        return np.array([np.linalg.norm(g[1] - g[0]) for g, _ in self._cells])

    def mass(self) -> float:
        return float(sum(self.group.norm(m) * l for (_, m), l in zip(self._cells, self.lengths())))

    def total_class(self) -> GroupElement:
        acc = self.group.zero
        for _, m in self._cells:
            acc = acc + m
        return acc

    def points(self) -> np.ndarray:
        if not self._cells:
            return np.zeros((0, self.ambient_dim))
        return np.array([g[0] for g, _ in self._cells]) if self.dim == 0 else np.array([g for g, _ in self._cells])

    def support_distance(self, x) -> np.ndarray:
        """Euclidean distance from points ``x`` (..., ambient_dim) to the support."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], np.inf)
        for g, _ in self._cells:
            out = np.minimum(out, _point_segment_distance(x, g[0], g[-1]))
        return out

    def restrict(self, inside) -> "PolyChain":
        """Cells whose (mid)points satisfy the predicate ``inside(points) -> bool array``."""
        if not self._cells:
            return self
        mids = np.array([g.mean(axis=0) for g, _ in self._cells])
        keep = np.asarray(inside(mids), dtype=bool)
        return self._like([c for c, k in zip(self._cells, keep) if k])

    # -- (de)serialisation ---------------------------------------------------
    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "group": self.group.kind,
            "ambient_dim": self.ambient_dim,
            "cells": [{"geom": g.tolist(), "mult": list(m.value)} for g, m in self._cells],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolyChain":
        group = get_group(data["group"])
        cells = [(c["geom"], group.element(tuple(c["mult"]))) for c in data["cells"]]
        amb = data.get("ambient_dim")
        if amb is None:
            amb = len(data["cells"][0]["geom"][0]) if data["cells"] else 3
        return cls(data["dim"], group, cells, amb)


def _point_segment_distance(x, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    den = float(ab @ ab)
    if den == 0.0:
        return np.linalg.norm(x - a, axis=-1)
    t = np.clip(((x - a) @ ab) / den, 0.0, 1.0)
    return np.linalg.norm(x - (a + t[..., None] * ab), axis=-1)


def point_chain(group, points, mults, ambient_dim=None) -> PolyChain:
    points = np.asarray(points, dtype=float)
    if ambient_dim is None:
        ambient_dim = points.shape[-1] if points.size else 3
    mults = [m if isinstance(m, GroupElement) else group.element(m) for m in mults]
    return PolyChain(0, group, zip(points, mults), ambient_dim)


def polygon_chain(group, vertices, mult, closed=True) -> PolyChain:
    v = np.asarray(vertices, dtype=float)
    idx = list(range(len(v)))
    pairs = zip(idx, idx[1:] + idx[:1]) if closed else zip(idx[:-1], idx[1:])
    return PolyChain(1, group, [((v[i], v[j]), mult) for i, j in pairs], v.shape[1])


def circle_chain(group, center, radius, mult, n=256, normal_axis=2) -> PolyChain:
    """Inscribed regular n-gon of a circle, counterclockwise about +e_{normal_axis}."""
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    a1, a2 = [(1, 2), (2, 0), (0, 1)][normal_axis]
    v = np.zeros((n, 3)) + np.asarray(center, dtype=float)
    v[:, a1] += radius * np.cos(t)
    v[:, a2] += radius * np.sin(t)
    return polygon_chain(group, v, mult)


# ---------------------------------------------------------------------------
# boundary, mass: thin functional wrappers


def boundary(c: PolyChain) -> PolyChain:
    return c.boundary()


def mass(c: PolyChain) -> float:
    return c.mass()


# ---------------------------------------------------------------------------
# flat norm of 0-chains and minimal connections


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def dist_to_boundary(self, x):
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.minimum(x - lo, hi - x).min(axis=-1).clip(min=0.0)

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.asarray(self.lo) - tol) & (x <= np.asarray(self.hi) + tol), axis=-1)


def _coordinates(group: CoefficientGroup):
    """Independent generator coordinates: (index, is_mod2, unit cost)."""
    if group.kind == "Z2_projective":
        return [(0, True, group.e_min(group.element(1)))]
    unit = math.pi
    return [(j, False, unit) for j in range(group.ndim)]


def _unit_pieces(chain: PolyChain, coord, mod2):
    """Split multiplicities into generator units along one coordinate."""
    pos, neg = [], []
    for g, m in chain.cells:
        d = m.value[coord]
        if mod2:
            if d % 2:
                pos.append(g[0])
        elif d > 0:
            pos.extend([g[0]] * d)
        elif d < 0:
            neg.extend([g[0]] * (-d))
    return np.array(pos).reshape(-1, chain.ambient_dim), np.array(neg).reshape(-1, chain.ambient_dim)


def _pair_distance(a, b):
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def _transport_with_drop(pos, neg, cost, drop_pos, drop_neg):
    """Exact min-cost pairing of +units with -units, each unit may instead be dropped."""
    p, n = len(pos), len(neg)
    if p + n == 0:
        return 0.0, []
    big = 1e18
    mat = np.full((p + n, n + p), big)
    if p and n:
        mat[:p, :n] = cost * _pair_distance(pos, neg)
    for i in range(p):
        mat[i, n + i] = drop_pos[i]
    for j in range(n):
        mat[p + j, j] = drop_neg[j]
    mat[p:, n:] = 0.0
    rows, cols = linear_sum_assignment(mat)
    total = float(mat[rows, cols].sum())
    pairs = [(r, c) for r, c in zip(rows, cols) if r < p and c < n]
    return total, pairs


def _matching_with_drop(pts, cost, drop):
    """Exact min-cost perfect matching in which each point pairs with another or drops.

    ``drop=None`` forbids dropping.  Small instances use a subset DP; larger
    ones use blossom matching on integer-scaled weights.
    """
    k = len(pts)
    if k == 0:
        return 0.0, []
    if drop is None and k % 2:
        raise NonZeroTotalClass("odd number of non-orientable points")
    d = cost * _pair_distance(pts, pts)
    if k <= 14:
        pairs = _matching_dp(d, drop)
    else:
        pairs = _matching_blossom(d, drop)
    used = {i for pr in pairs for i in pr}
    total = sum(d[i, j] for i, j in pairs)
    if drop is not None:
        total += sum(drop[i] for i in range(k) if i not in used)
    return float(total), pairs


def _matching_dp(d, drop):
    k = len(d)
    best = {0: (0.0, None)}

    def solve(mask):
        if mask in best:
            return best[mask][0]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        opts = []
        if drop is not None:
            opts.append((drop[i] + solve(rest), None))
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            opts.append((d[i, j] + solve(rest & ~(1 << j)), j))
        val, j = min(opts, key=lambda o: o[0]) if opts else (float("inf"), None)
        best[mask] = (val, j)
        return val

    full = (1 << k) - 1
    solve(full)
    pairs, mask = [], full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = best[mask][1]
        mask &= ~(1 << i)
        if j is not None:
            pairs.append((i, j))
            mask &= ~(1 << j)
    return pairs


def _matching_blossom(d, drop):
    k = len(d)
    scale = 1e9
    graph = nx.Graph()
    edges = [(("p", i), ("p", j), d[i, j]) for i, j in itertools.combinations(range(k), 2)]
    if drop is not None:
        edges += [(("p", i), ("d", i), drop[i]) for i in range(k)]
        edges += [(("d", i), ("d", j), 0.0) for i, j in itertools.combinations(range(k), 2)]
    big = max(w for *_, w in edges) + 1.0
    for a, b, w in edges:
        graph.add_edge(a, b, weight=int(round((big - w) * scale)))
    matching = nx.max_weight_matching(graph, maxcardinality=True)
    return [(a[1], b[1]) for a, b in matching if a[0] == "p" and b[0] == "p"]


def flat_norm_zero(c: PolyChain, domain: Optional[Box] = None) -> float:
    """Flat norm of a 0-chain.

    ``domain=None`` is free space (a point of class s can be removed at cost
    |s|_*); with a box, a point can also escape to the box boundary at cost
    |s|_* times its distance to the boundary.
    """
    if c.dim != 0:
        raise ValueError("flat_norm_zero needs a 0-chain")
    total = 0.0
    for coord, mod2, unit in _coordinates(c.group):
        pos, neg = _unit_pieces(c, coord, mod2)

        def drop(x):
            if domain is None:
                return np.full(len(x), unit)
            return unit * np.minimum(1.0, domain.dist_to_boundary(x))

        if mod2:
            t, _ = _matching_with_drop(pos, unit, drop(pos))
        else:
            t, _ = _transport_with_drop(pos, neg, unit, drop(pos), drop(neg))
        total += t
    return total


def minimal_connection(bd: PolyChain, domain: Optional[Box] = None) -> PolyChain:
    """Least-mass 1-chain of straight segments whose boundary is ``bd``."""
    if bd.dim != 0:
        raise ValueError("minimal_connection needs a 0-chain")
    if bd.total_class():
        raise NonZeroTotalClass(f"total class {bd.total_class()} is not zero")
    if domain is not None and len(bd) and not np.all(domain.contains(bd.points())):
        raise ValueError("boundary points outside the domain")
    g = bd.group
    cells = []
    for coord, mod2, unit in _coordinates(g):
        e = [0] * g.ndim
        e[coord] = 1
        gen = g.element(tuple(e))
        pos, neg = _unit_pieces(bd, coord, mod2)
        if mod2:
            _, pairs = _matching_with_drop(pos, unit, None)
            cells.extend(((pos[i], pos[j]), gen) for i, j in pairs)
        else:
            if len(pos) != len(neg):
                raise NonZeroTotalClass("unbalanced coordinate")
            if len(pos) == 0:
                continue
            rows, cols = linear_sum_assignment(_pair_distance(pos, neg))
            cells.extend(((neg[j], pos[i]), gen) for i, j in zip(rows, cols))
    return PolyChain(1, g, cells, bd.ambient_dim)


# ---------------------------------------------------------------------------
# intersection index with an oriented planar disk


@dataclass(frozen=True)
class Disk:
    center: Tuple[float, float, float]
    normal: Tuple[float, float, float]
    radius: float


def intersection_index(c: PolyChain, disk: Disk) -> GroupElement:
    """Signed count of crossings of the 1-chain through the disk.

    A segment a -> b counts +s when it passes from the negative to the
    non-negative side of the disk plane and -s in the opposite direction;
    the half-open convention makes the count invariant under subdivision.
    """
    if c.dim != 1:
        raise ValueError("intersection_index needs a 1-chain")
    ctr = np.asarray(disk.center, dtype=float)
    nrm = np.asarray(disk.normal, dtype=float)
    nrm = nrm / np.linalg.norm(nrm)
    acc = c.group.zero
    for g, m in c.cells:
        sa, sb = float((g[0] - ctr) @ nrm), float((g[1] - ctr) @ nrm)
        if sa == 0.0 and sb == 0.0:
            if np.any(_point_segment_distance(ctr[None], g[0], g[1]) <= disk.radius):
                raise Degenerate("segment lies in the disk plane")
            continue
        if (sa < 0.0) == (sb < 0.0):
            continue
        t = sa / (sa - sb)
        x = g[0] + t * (g[1] - g[0])
        if np.linalg.norm(x - ctr) <= disk.radius:
            acc = acc + (m if sa < 0.0 else -m)
    return acc


# ---------------------------------------------------------------------------
# splitting multiplicities into generators


def _offset_direction(ambient_dim):
    v = np.array([1.0, math.sqrt(2.0), math.sqrt(3.0)][:ambient_dim])
    return v / np.linalg.norm(v)


def split_multiplicities(c: PolyChain, offset_scale: float) -> PolyChain:
    """Replace each cell whose class is not a generator by translated copies.

    The k-th piece of every optimal decomposition is translated by a multiple
    of ``offset_scale`` along one fixed direction, so closed polygons with a
    constant multiplicity split into closed translated polygons.
    """
    g = c.group
    direction = _offset_direction(c.ambient_dim)
    cells = []
    for geom, m in c.cells:
        if g.in_generators(m):
            cells.append((geom, m))
            continue
        parts = g.decompose(m)
        k = len(parts)
        for i, part in enumerate(parts):
            shift = offset_scale * ((i - (k - 1) / 2) / max(k - 1, 1)) * direction
            cells.append((geom + shift, part))
    return PolyChain(c.dim, g, cells, c.ambient_dim)


# ---------------------------------------------------------------------------
# comparison diagnostics for 1-chains (no flat distance)


def sample_cells(c: PolyChain, per_cell=8):
    """Sample points and weights |s|_* * length / per_cell along the cells."""
    pts, wts = [], []
    for (g, m), l in zip(c.cells, c.lengths()):
        w = c.group.norm(m) * l
        if c.dim == 0:
            pts.append(g[0][None])
            wts.append(np.array([w]))
        else:
            t = (np.arange(per_cell) + 0.5) / per_cell
            pts.append(g[0] + t[:, None] * (g[1] - g[0]))
            wts.append(np.full(per_cell, w / per_cell))
    if not pts:
        return np.zeros((0, c.ambient_dim)), np.zeros(0)
    return np.concatenate(pts), np.concatenate(wts)


def mean_support_distance(c: PolyChain, dist_fn) -> float:
    """Mass-weighted mean of ``dist_fn(points)`` over the support of ``c``."""
    pts, wts = sample_cells(c)
    if wts.sum() == 0:
        return 0.0
    return float((dist_fn(pts) * wts).sum() / wts.sum())


def compare_chains(a: PolyChain, b: PolyChain, disks: Sequence[Disk] = ()):
    """(mass difference, mean support distance of a to b, intersection indices)."""
    dmass = a.mass() - b.mass()
    dist = mean_support_distance(a, b.support_distance) if b else float("nan")
    idx = [(intersection_index(a, d), intersection_index(b, d)) for d in disks]
    return dmass, dist, idx
