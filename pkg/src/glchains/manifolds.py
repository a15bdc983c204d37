"""Target manifolds N in R^m with their potentials and retractions.

All point-wise functions are vectorised over leading axes: a point array has
shape ``(..., m)``.

Supported targets

* ``circle``  -- S^1 in R^2, f(y) = (|y|^2 - 1)^2, singular complex X = {0}
* ``torus``   -- S^1 x S^1 in R^2 x R^2, f = sum of the two circle wells,
  X = {y' = 0} U {y'' = 0}
* ``rp2``     -- uniaxial unit Q-tensors Q = sqrt(3/2)(n n^T - I/3) in the
  5-dimensional space of symmetric traceless matrices, quartic Landau-de
  Gennes bulk potential shifted to vanish on N, X = {two leading eigenvalues
  coincide}
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .groups import CoefficientGroup, GroupElement, _mat_to_vec, _vec_to_mat, director_to_q, get_group

KINDS = ("circle", "torus", "rp2")
_GROUP_OF = {"circle": "Z_circle", "torus": "ZxZ_torus", "rp2": "Z2_projective"}
_DIM = {"circle": 2, "torus": 4, "rp2": 5}
# dist(N, X): circle/torus 1; for rp2 the uniaxial spectrum (2,-1,-1)/sqrt6 is
# (lambda1 - lambda2)/sqrt2 = sqrt(3)/2 away from {lambda1 = lambda2}
_DIST_N_X = {"circle": 1.0, "torus": 1.0, "rp2": math.sqrt(3.0) / 2.0}
# f >= lambda0 dist^2 on |y| <= 2; circle/torus exact, rp2 measured by dense sampling
_LAMBDA0 = {"circle": 1.0, "torus": 1.0, "rp2": 0.3}
_THETA0 = {"circle": 0.5, "torus": 0.5, "rp2": 0.3}

COMPLEX_TOL = 1e-9


class TooFarFromManifold(ValueError):
    pass


class OnComplex(ValueError):
    pass


class Undersampled(ValueError):
    pass


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class TargetManifold:
    kind: str
    theta0: float = None
    delta_star: float = None
    group: CoefficientGroup = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.theta0 is None:
            object.__setattr__(self, "theta0", _THETA0[self.kind])
        if self.delta_star is None:
            object.__setattr__(self, "delta_star", self.theta0 / 2)
        if not 0 < self.delta_star < self.dist_n_x:
            raise ValueError("delta_star must lie in (0, dist(N, X))")
        object.__setattr__(self, "group", get_group(_GROUP_OF[self.kind]))

    @property
    def m(self) -> int:
        return _DIM[self.kind]

    @property
    def dist_n_x(self) -> float:
        return _DIST_N_X[self.kind]

    @property
    def lambda0(self) -> float:
        return _LAMBDA0[self.kind]

    @property
    def radius(self) -> float:
        """max |z| over z in N."""
        return math.sqrt(2.0) if self.kind == "torus" else 1.0

    def base_point(self) -> np.ndarray:
        if self.kind == "circle":
            return np.array([1.0, 0.0])
        if self.kind == "torus":
            return np.array([1.0, 0.0, 1.0, 0.0])
        return director_to_q(np.array([1.0, 0.0, 0.0]))

    # -- distances -----------------------------------------------------------
    def dist(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "circle":
            return np.abs(np.linalg.norm(y, axis=-1) - 1.0)
        if self.kind == "torus":
            d1 = np.linalg.norm(y[..., :2], axis=-1) - 1.0
            d2 = np.linalg.norm(y[..., 2:], axis=-1) - 1.0
            return np.hypot(d1, d2)
        # |y - P(y)| with P(y) the uniaxial tensor along the leading eigenvector;
        # the closed form |y|^2 + 1 - sqrt6 lambda_max cancels badly near N
        return np.linalg.norm(y - self._rho(y), axis=-1)

    def dist_to_complex(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "circle":
            return np.linalg.norm(z, axis=-1)
        if self.kind == "torus":
            return np.minimum(np.linalg.norm(z[..., :2], axis=-1), np.linalg.norm(z[..., 2:], axis=-1))
        lam = np.linalg.eigvalsh(_vec_to_mat(z))
        return (lam[..., -1] - lam[..., -2]) / math.sqrt(2.0)

    def _rho(self, z):
        # nearest-point projection, extended to R^m minus X
        z = np.asarray(z, dtype=float)
        if self.kind == "circle":
            return z / np.linalg.norm(z, axis=-1, keepdims=True)
        if self.kind == "torus":
            a = z[..., :2] / np.linalg.norm(z[..., :2], axis=-1, keepdims=True)
            b = z[..., 2:] / np.linalg.norm(z[..., 2:], axis=-1, keepdims=True)
            return np.concatenate([a, b], axis=-1)
        _, vecs = np.linalg.eigh(_vec_to_mat(z))
        return director_to_q(vecs[..., :, -1])

    def project(self, y):
        """Nearest point of N; raises TooFarFromManifold outside the theta0-tube."""
        y = np.asarray(y, dtype=float)
        if np.any(self.dist(y) >= self.theta0):
            raise TooFarFromManifold(f"point(s) farther than theta0={self.theta0} from N")
        return self._rho(y)

    def rho(self, z):
        """The retraction R^m minus X -> N; raises OnComplex near X."""
        z = np.asarray(z, dtype=float)
        if np.any(self.dist_to_complex(z) < COMPLEX_TOL):
            raise OnComplex("point(s) on the singular complex")
        return self._rho(z)

    def retraction(self, z, y, tol=1e-10, max_iter=50):
        """rho_y(z): the point p of N with rho(p - y) = rho(z - y).

        The correction is inverted per point by fixed-point iteration
        ``p <- P_N(p + w - rho(p - y))``, a contraction for |y| < delta_star.
        """
        z = np.asarray(z, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), (self.m,))
        if np.linalg.norm(y) >= self.delta_star:
            raise ValueError(f"|y| must be below delta_star={self.delta_star}")
        w = self.rho(z - y)
        if not np.any(y):
            return w
        p = w.copy()
        for _ in range(max_iter):
            res = w - self._rho(p - y)
            err = np.abs(res).max(axis=-1)
            if np.all(err < tol):
                break
            p = np.where((err >= tol)[..., None], self._rho(p + res), p)
        return p

    def cutoff_psi(self, z):
        return np.minimum(self.dist_to_complex(z) / self.dist_n_x, 1.0)

    # -- potential -----------------------------------------------------------
    def potential(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "circle":
            return ((y**2).sum(axis=-1) - 1.0) ** 2
        if self.kind == "torus":
            return ((y[..., :2] ** 2).sum(axis=-1) - 1.0) ** 2 + ((y[..., 2:] ** 2).sum(axis=-1) - 1.0) ** 2
        m = _vec_to_mat(y)
        tr2 = (y**2).sum(axis=-1)
        tr3 = np.einsum("...ij,...jk,...ki->...", m, m, m)
        return -0.5 * tr2 - math.sqrt(6.0) / 3.0 * tr3 + 0.5 * tr2**2 + 1.0 / 3.0

    def potential_grad(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "circle":
            return 4.0 * ((y**2).sum(axis=-1, keepdims=True) - 1.0) * y
        if self.kind == "torus":
            a = 4.0 * ((y[..., :2] ** 2).sum(axis=-1, keepdims=True) - 1.0) * y[..., :2]
            b = 4.0 * ((y[..., 2:] ** 2).sum(axis=-1, keepdims=True) - 1.0) * y[..., 2:]
            return np.concatenate([a, b], axis=-1)
        m = _vec_to_mat(y)
        tr2 = (y**2).sum(axis=-1, keepdims=True)
        return -y - math.sqrt(6.0) * _mat_to_vec(m @ m) + 2.0 * tr2 * y

    # -- homotopy classes ----------------------------------------------------
    def phases(self, p):
        """Per-point data whose consecutive increments add up to the loop class.

        circle: angle; torus: pair of angles; rp2: director with a canonical sign.
        """
        p = np.asarray(p, dtype=float)
        if self.kind == "circle":
            return np.arctan2(p[..., 1], p[..., 0])
        if self.kind == "torus":
            return np.stack([np.arctan2(p[..., 1], p[..., 0]), np.arctan2(p[..., 3], p[..., 2])], axis=-1)
        _, vecs = np.linalg.eigh(_vec_to_mat(p))
        n = vecs[..., :, -1]
        idx = np.argmax(np.abs(n), axis=-1)
        sign = np.sign(np.take_along_axis(n, idx[..., None], axis=-1))
        return n * np.where(sign == 0, 1.0, sign)

    def increments(self, pa, pb, check=True):
        """Increment between consecutive phase data; raises Undersampled on large gaps."""
        if self.kind in ("circle", "torus"):
            inc = _wrap(pb - pa)
            if check and np.any(np.abs(inc) >= np.pi / 2):
                raise Undersampled("phase gap >= pi/2 between consecutive samples")
            return inc
        dot = (pa * pb).sum(axis=-1)
        if check and np.any(np.abs(dot) <= 1e-12):
            raise Undersampled("director gap >= pi/2 between consecutive samples")
        return (dot < 0).astype(float)

    def class_of_sum(self, total) -> GroupElement:
        total = np.asarray(total, dtype=float)
        if self.kind == "rp2":
            return self.group.element(int(round(float(total))) % 2)
        return self.group.element(tuple(int(v) for v in np.rint(np.atleast_1d(total) / (2 * np.pi))))

    def class_array(self, totals):
        """Vectorised class_of_sum: integer coordinates (..., ndim)."""
        totals = np.asarray(totals, dtype=float)
        if self.kind == "rp2":
            return (np.rint(totals).astype(np.int64) % 2)[..., None]
        out = np.rint(totals / (2 * np.pi)).astype(np.int64)
        return out[..., None] if self.kind == "circle" else out

    def loop_class(self, samples, closed=True) -> GroupElement:
        """Homotopy class of the closed loop through the given points of N."""
        samples = np.asarray(samples, dtype=float)
        if not closed:
            raise ValueError("loop_class needs a closed loop")
        ph = self.phases(samples)
        inc = self.increments(ph, np.roll(ph, -1, axis=0))
        return self.class_of_sum(inc.sum(axis=0))


def get_target(kind: str, theta0=None, delta_star=None) -> TargetManifold:
    return TargetManifold(kind, theta0, delta_star)
