"""Grids, quadrature, real spherical harmonics and tangent frames on spheres.

Conventions
-----------
Harmonics are real and orthonormal with respect to the round surface
measure, without the Condon-Shortley phase. Each basis function comes with
a polynomial extension to the ambient space (Gegenbauer recurrences on S^2,
homogeneous monomial expansions on S^3), so values, gradients and Hessians
are available in closed form and accept complex arguments. Only restrictions
to the sphere are meaningful; tangential quantities are extension-free.

Coefficient order on S^2 is (l, m), row-major in l, with m running from -l
to l; m < 0 selects the sine-type function sin(|m| phi) and m > 0 the
cosine-type one. On S^3 the order is (l, k, m) with 0 <= k <= l and the S^2
label (k, m) in the order above. On the circle the order is 1, then
(sin l t, cos l t) for l = 1, 2, ...

Equator frames are produced by Gram-Schmidt against the coordinate axes,
choosing at each step the axis with the largest residual. They are NOT
continuous in the normal direction v (no continuous choice exists). Nothing
in this package compares frames of different equators; all coupling between
equators goes through fields on the sphere or through frame-free ambient
vectors.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import json
import math

import numpy as np
from scipy.special import gammaln, roots_gegenbauer, roots_legendre

__all__ = [
    "AliasingError",
    "ResonanceError",
    "sphere_area",
    "harmonic_basis",
    "sphere_quadrature",
    "SphereGrid",
    "sphere_grid",
    "DirectionGrid",
    "make_direction_grid",
    "frame_for",
    "EquatorChart",
    "equator_chart",
    "ChartFamily",
    "chart_family",
    "HarmonicField",
    "field_project",
    "field_eval",
    "sphere_gradient",
    "helmholtz_solve",
    "harmonic_count",
]


class AliasingError(ValueError):
    """Raised when a grid cannot resolve the requested band limit."""


class ResonanceError(ValueError):
    """Raised when a Helmholtz right-hand side hits a resonant eigenspace."""


def sphere_area(d):
    """Surface area of the unit sphere S^d."""
    return 2.0 * math.pi ** ((d + 1) / 2.0) / math.gamma((d + 1) / 2.0)


def harmonic_count(d, L):
    """Number of harmonics of degree <= L on S^d."""
    if d == 1:
        return 2 * L + 1
    if d == 2:
        return (L + 1) ** 2
    if d == 3:
        return (L + 1) * (L + 2) * (2 * L + 3) // 6
    raise ValueError(f"unsupported sphere dimension {d}")


def _degree_dim(d, l):
    if d == 1:
        return 1 if l == 0 else 2
    if d == 2:
        return 2 * l + 1
    return (l + 1) ** 2


# ---------------------------------------------------------------------------
# Polynomial construction of harmonics

def _compositions(total, nvars):
    if nvars == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, nvars - 1):
            yield (first,) + rest


def _pmul(p, q):
    out = {}
    for ea, ca in p.items():
        for eb, cb in q.items():
            e = tuple(a + b for a, b in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return out


def _ppow(p, k, nvars):
    out = {(0,) * nvars: 1.0}
    for _ in range(k):
        out = _pmul(out, p)
    return out


def _pembed(p):
    return {e + (0,): c for e, c in p.items()}


def _circle_polys(m):
    """Return (Im, Re) of (x + i y)^m as polynomials in two variables."""
    re, im = {}, {}
    for k in range(m + 1):
        c = float(math.comb(m, k))
        if k % 2 == 0:
            re[(m - k, k)] = c * (-1) ** (k // 2)
        else:
            im[(m - k, k)] = c * (-1) ** ((k - 1) // 2)
    if m == 0:
        return None, {(0, 0): 1.0}
    return im, re


def _gegenbauer_part(j, lam, nvars):
    """r^j C_j^lam(x_last / r) as a polynomial in nvars variables."""
    r2 = {}
    for a in range(nvars):
        e = [0] * nvars
        e[a] = 2
        r2[tuple(e)] = 1.0
    out = {}
    for i in range(j // 2 + 1):
        logc = gammaln(j - i + lam) - gammaln(lam) - gammaln(i + 1) - gammaln(j - 2 * i + 1)
        c = (-1) ** i * math.exp(logc) * 2.0 ** (j - 2 * i)
        e = [0] * nvars
        e[-1] = j - 2 * i
        term = _pmul({tuple(e): c}, _ppow(r2, i, nvars))
        for key, val in term.items():
            out[key] = out.get(key, 0.0) + val
    return out


@lru_cache(maxsize=None)
def _raw_harmonics(d, L):
    """Unnormalized harmonic polynomials on S^d (d = 2, 3) with labels."""
    polys, labels = [], []
    if d == 2:
        for l in range(L + 1):
            for m in range(-l, l + 1):
                k = abs(m)
                im, re = _circle_polys(k)
                h = im if m < 0 else re
                g = _gegenbauer_part(l - k, k + 0.5, 3)
                polys.append(_pmul(g, _pembed(h)))
                labels.append((l, m))
        return polys, labels
    if d == 3:
        low_polys, low_labels = _raw_harmonics(2, L)
        for l in range(L + 1):
            for k in range(l + 1):
                g = _gegenbauer_part(l - k, k + 1.0, 4)
                for h, lab in zip(low_polys, low_labels):
                    if lab[0] != k:
                        continue
                    polys.append(_pmul(g, _pembed(h)))
                    labels.append((l, k, lab[1]))
        return polys, labels
    raise ValueError(f"unsupported sphere dimension {d}")


class _PolyHarmonics:
    """Orthonormal harmonics on S^3 stored as homogeneous polynomials."""

    _chunk = 4096

    def __init__(self, d, L):
        self.d = d
        self.L = L
        nv = d + 1
        self.exponents = np.array(
            [e for deg in range(L + 1) for e in _compositions(deg, nv)], dtype=int
        )
        index = {tuple(e): i for i, e in enumerate(self.exponents)}
        polys, labels = _raw_harmonics(d, L)
        nb = len(polys)
        C = np.zeros((len(self.exponents), nb))
        for j, p in enumerate(polys):
            for e, c in p.items():
                C[index[e], j] += c
        self.labels = labels
        self.degrees = np.array([lab[0] for lab in labels], dtype=int)
        pts, wts = sphere_quadrature(d, L)
        vals = self._monomials(pts) @ C
        norms = np.sqrt(wts @ (vals * vals))
        self.coeffs = C / norms
        # derivative operators on monomial coefficient vectors
        nm = len(self.exponents)
        self._grad = []
        for a in range(nv):
            D = np.zeros((nm, nm))
            for i, e in enumerate(self.exponents):
                if e[a] > 0:
                    f = e.copy()
                    f[a] -= 1
                    D[index[tuple(f)], i] = e[a]
            self._grad.append(D)
        self.grad_coeffs = np.stack([D @ self.coeffs for D in self._grad])
        self.hess_coeffs = np.stack(
            [np.stack([self._grad[b] @ self.grad_coeffs[a] for b in range(nv)]) for a in range(nv)]
        )

    @property
    def size(self):
        return len(self.labels)

    def _monomials(self, pts):
        pts = np.asarray(pts)
        L = self.L
        powers = np.ones(pts.shape[:-1] + (pts.shape[-1], L + 1), dtype=pts.dtype)
        for k in range(1, L + 1):
            powers[..., k] = powers[..., k - 1] * pts
        out = np.ones(pts.shape[:-1] + (len(self.exponents),), dtype=pts.dtype)
        for a in range(pts.shape[-1]):
            out = out * powers[..., a, :][..., self.exponents[:, a]]
        return out

    def _apply(self, pts, mats):
        pts = np.asarray(pts)
        flat = pts.reshape(-1, pts.shape[-1])
        res = []
        for s in range(0, max(len(flat), 1), self._chunk):
            res.append(self._monomials(flat[s:s + self._chunk]) @ mats)
        out = np.concatenate(res, axis=0) if res else np.zeros((0, mats.shape[-1]))
        return out.reshape(pts.shape[:-1] + (mats.shape[-1],))

    def values(self, pts):
        """Basis values, shape (..., size)."""
        return self._apply(pts, self.coeffs)

    def ambient_gradients(self, pts):
        """Ambient gradients of the homogeneous extensions, shape (..., size, d+1)."""
        nv = self.d + 1
        mats = np.concatenate(list(self.grad_coeffs), axis=1)
        g = self._apply(pts, mats)
        g = g.reshape(g.shape[:-1] + (nv, self.size))
        return np.swapaxes(g, -1, -2)

    def ambient_hessians(self, pts):
        """Ambient Hessians of the homogeneous extensions, shape (..., size, d+1, d+1)."""
        nv = self.d + 1
        mats = np.concatenate([self.hess_coeffs[a, b] for a in range(nv) for b in range(nv)], axis=1)
        h = self._apply(pts, mats)
        h = h.reshape(h.shape[:-1] + (nv, nv, self.size))
        return np.moveaxis(h, -1, -3)

    def tangent_gradients(self, pts):
        """Tangential gradients on the unit sphere, shape (..., size, d+1)."""
        pts = np.asarray(pts)
        g = self.ambient_gradients(pts)
        radial = np.einsum("...ka,...a->...k", g, pts)
        return g - radial[..., None] * pts[..., None, :]


def _gegenbauer_table(j_max, lam, t):
    """C_j^lam(t) for j = 0..j_max by the three-term recurrence."""
    out = [np.ones_like(t)]
    if j_max >= 1:
        out.append(2.0 * lam * t)
    for j in range(2, j_max + 1):
        out.append((2.0 * t * (j + lam - 1.0) * out[j - 1] - (j + 2.0 * lam - 2.0) * out[j - 2]) / j)
    return out


class _S2Harmonics:
    """Orthonormal real harmonics on S^2 evaluated by recurrences.

    Each basis function is N_lm * (d^m P_l/dz^m)(z) * B_m(x, y) with B_m the
    real or imaginary part of (x + i y)^m written as a polynomial, so that
    complex arguments (complex-step differentiation) are handled analytically.
    Derivatives refer to this polynomial extension, which agrees with the
    harmonic on the unit sphere but is not homogeneous.
    """

    d = 2

    def __init__(self, L):
        self.L = L
        self.labels = [(l, m) for l in range(L + 1) for m in range(-l, l + 1)]
        self.degrees = np.array([lab[0] for lab in self.labels], dtype=int)
        # log of N_lm * (2m-1)!!, the factor in front of C_{l-m}^{m+1/2}
        self._lognorm = {}
        for l in range(L + 1):
            for m in range(l + 1):
                lg = 0.5 * (math.log((2 * l + 1) / (4 * math.pi)) + gammaln(l - m + 1) - gammaln(l + m + 1))
                if m > 0:
                    lg += 0.5 * math.log(2.0)
                lg += gammaln(2 * m + 1) - m * math.log(2.0) - gammaln(m + 1)
                self._lognorm[(l, m)] = lg

    @property
    def size(self):
        return len(self.labels)

    def _parts(self, pts, order):
        pts = np.asarray(pts)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        L = self.L
        bc = [np.ones_like(x)]
        bs = [np.zeros_like(x)]
        for m in range(1, L + 1):
            bc.append(x * bc[m - 1] - y * bs[m - 1])
            bs.append(x * bs[m - 1] + y * bc[m - 1])
        A = {}
        for m in range(L + 1):
            lam = m + 0.5
            tabs = [_gegenbauer_table(L - m, lam + s, z) for s in range(order + 1)]
            for l in range(m, L + 1):
                j = l - m
                a0 = tabs[0][j]
                a1 = 2.0 * lam * tabs[1][j - 1] if (order >= 1 and j >= 1) else np.zeros_like(z)
                a2 = (4.0 * lam * (lam + 1.0) * tabs[2][j - 2]
                      if (order >= 2 and j >= 2) else np.zeros_like(z))
                c = math.exp(self._lognorm[(l, m)])
                A[(l, m)] = (c * a0, c * a1, c * a2)
        return bc, bs, A

    def values(self, pts):
        bc, bs, A = self._parts(pts, 0)
        cols = []
        for l, m in self.labels:
            b = bs[-m] if m < 0 else bc[m]
            cols.append(A[(l, abs(m))][0] * b)
        return np.stack(cols, axis=-1)

    @staticmethod
    def _bderiv(bc, bs, m, sine):
        """First and second derivatives of B_m in (x, y)."""
        zero = np.zeros_like(bc[0])

        def get(seq, k):
            return seq[k] if k >= 0 else zero

        if sine:
            bx, by = m * get(bs, m - 1), m * get(bc, m - 1)
            bxx = m * (m - 1) * get(bs, m - 2)
            bxy = m * (m - 1) * get(bc, m - 2)
        else:
            bx, by = m * get(bc, m - 1), -m * get(bs, m - 1)
            bxx = m * (m - 1) * get(bc, m - 2)
            bxy = -m * (m - 1) * get(bs, m - 2)
        return bx, by, bxx, bxy, -bxx

    def ambient_gradients(self, pts):
        bc, bs, A = self._parts(pts, 1)
        cols = []
        for l, m in self.labels:
            k = abs(m)
            b = bs[k] if m < 0 else bc[k]
            bx, by, _, _, _ = self._bderiv(bc, bs, k, m < 0)
            a0, a1, _ = A[(l, k)]
            cols.append(np.stack([a0 * bx, a0 * by, a1 * b], axis=-1))
        return np.stack(cols, axis=-2)

    def ambient_hessians(self, pts):
        bc, bs, A = self._parts(pts, 2)
        cols = []
        for l, m in self.labels:
            k = abs(m)
            b = bs[k] if m < 0 else bc[k]
            bx, by, bxx, bxy, byy = self._bderiv(bc, bs, k, m < 0)
            a0, a1, a2 = A[(l, k)]
            H = np.stack([
                np.stack([a0 * bxx, a0 * bxy, a1 * bx], axis=-1),
                np.stack([a0 * bxy, a0 * byy, a1 * by], axis=-1),
                np.stack([a1 * bx, a1 * by, a2 * b], axis=-1),
            ], axis=-2)
            cols.append(H)
        return np.stack(cols, axis=-3)

    def tangent_gradients(self, pts):
        pts = np.asarray(pts)
        g = self.ambient_gradients(pts)
        radial = np.einsum("...ka,...a->...k", g, pts)
        return g - radial[..., None] * pts[..., None, :]

    def contract(self, pts, coeffs, order):
        """Value (order 0), ambient gradient (1) or Hessian (2) of sum c_k Y_k.

        Accumulates term by term instead of forming the basis tensor.
        """
        bc, bs, A = self._parts(pts, order)
        shape = np.shape(bc[0]) + (3,) * order
        out = np.zeros(shape, dtype=np.result_type(bc[0], float))
        for c, (l, m) in zip(coeffs, self.labels):
            if c == 0.0:
                continue
            k = abs(m)
            b = bs[k] if m < 0 else bc[k]
            a0, a1, a2 = A[(l, k)]
            if order == 0:
                out += c * a0 * b
                continue
            bx, by, bxx, bxy, byy = self._bderiv(bc, bs, k, m < 0)
            if order == 1:
                out[..., 0] += c * a0 * bx
                out[..., 1] += c * a0 * by
                out[..., 2] += c * a1 * b
                continue
            out[..., 0, 0] += c * a0 * bxx
            out[..., 0, 1] += c * a0 * bxy
            out[..., 1, 1] += c * a0 * byy
            out[..., 0, 2] += c * a1 * bx
            out[..., 1, 2] += c * a1 * by
            out[..., 2, 2] += c * a2 * b
        if order == 2:
            for a, b in ((1, 0), (2, 0), (2, 1)):
                out[..., a, b] = out[..., b, a]
        return out


class _CircleHarmonics:
    """Orthonormal Fourier basis on the unit circle in R^2."""

    d = 1

    def __init__(self, L):
        self.L = L
        labels = [(0, 0)]
        for l in range(1, L + 1):
            labels += [(l, -l), (l, l)]
        self.labels = labels
        self.degrees = np.array([lab[0] for lab in labels], dtype=int)

    @property
    def size(self):
        return len(self.labels)

    def _angles(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.arctan2(pts[..., 1], pts[..., 0])

    def values(self, pts):
        t = self._angles(pts)
        out = np.empty(t.shape + (self.size,))
        out[..., 0] = 1.0 / math.sqrt(2 * math.pi)
        s = 1.0 / math.sqrt(math.pi)
        for l in range(1, self.L + 1):
            out[..., 2 * l - 1] = s * np.sin(l * t)
            out[..., 2 * l] = s * np.cos(l * t)
        return out

    def angular_derivatives(self, pts):
        """Derivatives with respect to the arc-length angle, shape (..., size)."""
        t = self._angles(pts)
        out = np.zeros(t.shape + (self.size,))
        s = 1.0 / math.sqrt(math.pi)
        for l in range(1, self.L + 1):
            out[..., 2 * l - 1] = s * l * np.cos(l * t)
            out[..., 2 * l] = -s * l * np.sin(l * t)
        return out

    def tangent_gradients(self, pts):
        pts = np.asarray(pts, dtype=float)
        t = self._angles(pts)
        tangent = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        return self.angular_derivatives(pts)[..., None] * tangent[..., None, :]


@lru_cache(maxsize=None)
def harmonic_basis(d, L):
    """Cached orthonormal harmonic basis of degree <= L on S^d (d = 1, 2, 3)."""
    if d == 1:
        return _CircleHarmonics(L)
    if d == 2:
        return _S2Harmonics(L)
    if d == 3:
        return _PolyHarmonics(d, L)
    raise ValueError(f"unsupported sphere dimension {d}")


# ---------------------------------------------------------------------------
# Quadrature

@lru_cache(maxsize=None)
def _product_rule(d, nlat, nlon):
    """Product rule on S^d with nlat Gauss nodes per recursion level."""
    if d == 1:
        t = 2 * math.pi * np.arange(nlon) / nlon
        pts = np.stack([np.cos(t), np.sin(t)], axis=1)
        return pts, np.full(nlon, 2 * math.pi / nlon)
    if d == 2:
        z, wz = roots_legendre(nlat)
    else:
        z, wz = roots_gegenbauer(nlat, (d - 1) / 2.0)
    low_pts, low_w = _product_rule(d - 1, nlat, nlon)
    s = np.sqrt(1.0 - z * z)
    pts = np.concatenate(
        [np.concatenate([s[i] * low_pts, np.full((len(low_pts), 1), z[i])], axis=1) for i in range(nlat)]
    )
    wts = np.concatenate([wz[i] * low_w for i in range(nlat)])
    return pts, wts


def _rule_sizes(L, even=False):
    nlat = L + 1
    if even and nlat % 2:
        nlat += 1
    nlon = 2 * L + 2
    return nlat, nlon


def sphere_quadrature(d, L):
    """Product quadrature on S^d exact for polynomials of degree <= 2L + 1.

    Returns
    -------
    points : ndarray, shape (N, d+1)
    weights : ndarray, shape (N,)
    """
    nlat, nlon = _rule_sizes(L)
    return _product_rule(d, nlat, nlon)


@dataclass(frozen=True)
class SphereGrid:
    """Full-sphere sampling grid resolving harmonics up to degree ``band``."""

    n: int
    band: int
    points: np.ndarray
    weights: np.ndarray


def sphere_grid(n, band):
    pts, wts = sphere_quadrature(n, band)
    return SphereGrid(n, band, pts, wts)


# ---------------------------------------------------------------------------
# Directions

@dataclass(frozen=True)
class DirectionGrid:
    """One representative per antipodal pair of a product grid on S^n.

    Attributes
    ----------
    n : int
        Sphere dimension.
    band_limit : int
        Even polynomials of degree <= 2 * band_limit are integrated exactly.
    reps : ndarray, shape (R, n+1)
        Representatives, all with positive last coordinate.
    weights : ndarray, shape (R,)
        Weights summing to the volume of RP^n.
    """

    n: int
    band_limit: int
    reps: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.reps)

    def integrate(self, values):
        """Integral over RP^n of a function sampled at the representatives."""
        return float(np.dot(self.weights, values))

    def even_basis(self, L):
        """Even harmonics of degree <= L evaluated at the representatives."""
        basis = harmonic_basis(self.n, L)
        mask = basis.degrees % 2 == 0
        return basis.values(self.reps)[:, mask], mask

    def project_even(self, values, L):
        """Even harmonic coefficients (full-sphere normalization) of sampled data."""
        if L > 2 * self.band_limit:
            raise AliasingError("direction grid too coarse for requested degree")
        Y, mask = self.even_basis(L)
        coeffs = np.zeros(len(mask))
        coeffs[mask] = 2.0 * (Y.T @ (self.weights * np.asarray(values)))
        return HarmonicField(self.n, L, coeffs, "even")

    def to_json(self):
        return {
            "schema": "zollsphere.direction_grid/1",
            "n": self.n,
            "band_limit": self.band_limit,
            "reps": self.reps.tolist(),
            "weights": self.weights.tolist(),
        }


@lru_cache(maxsize=None)
def make_direction_grid(n, L_g):
    """Direction grid on RP^n folded from a product rule on S^n.

    Parameters
    ----------
    n : int
        2 or 3.
    L_g : int
        Band limit, at least 4.
    """
    if n not in (2, 3):
        raise ValueError(f"unsupported dimension n={n}")
    if L_g < 4:
        raise ValueError("direction grid band limit must be >= 4")
    nlat, nlon = _rule_sizes(L_g, even=True)
    pts, wts = _product_rule(n, nlat, nlon)
    keep = pts[:, -1] > 0
    reps = np.ascontiguousarray(pts[keep])
    weights = np.ascontiguousarray(wts[keep])
    reps.setflags(write=False)
    weights.setflags(write=False)
    return DirectionGrid(n, L_g, reps, weights)


def frame_for(v):
    """Orthonormal basis of the hyperplane orthogonal to v, shape (n, n+1).

    Gram-Schmidt against the coordinate axes, picking at each step the axis
    with the largest residual (ties broken by axis index). Not continuous in v.
    """
    v = np.asarray(v, dtype=float)
    dim = len(v)
    basis = [v / np.linalg.norm(v)]
    axes = np.eye(dim)
    out = []
    while len(out) < dim - 1:
        best, best_norm = None, -1.0
        for a in axes:
            w = a - sum(np.dot(a, b) * b for b in basis)
            nw = np.linalg.norm(w)
            if nw > best_norm + 1e-12:
                best, best_norm = w, nw
        e = best / best_norm
        e = e - sum(np.dot(e, b) * b for b in basis)
        e /= np.linalg.norm(e)
        basis.append(e)
        out.append(e)
    return np.array(out)


def _local_rule(n, Q):
    """Quadrature on S^{n-1} used for equator charts."""
    if n == 2:
        return _product_rule(1, 0, Q)
    nlat = Q // 2
    if nlat % 2:
        nlat += 1
    return _product_rule(2, nlat, Q)


def _chart_band(n, Q):
    """Largest band whose pairwise products the chart integrates exactly."""
    if n == 2:
        return (Q - 1) // 2
    nlat = Q // 2 + (Q // 2) % 2
    return min(nlat - 1, (Q - 1) // 2)


@dataclass(frozen=True)
class ChartFamily:
    """Equator charts sharing one local quadrature rule.

    Attributes
    ----------
    vs : ndarray, shape (R, n+1)
        Equator normals.
    frames : ndarray, shape (R, n, n+1)
        Orthonormal frames of the equators.
    local : ndarray, shape (Q', n)
        Quadrature nodes on the model sphere S^{n-1}.
    weights : ndarray, shape (Q',)
        Quadrature weights, summing to the area of S^{n-1}.
    """

    vs: np.ndarray
    frames: np.ndarray
    local: np.ndarray
    weights: np.ndarray
    Q: int

    @property
    def n(self):
        return self.vs.shape[1] - 1

    @property
    def size(self):
        return len(self.vs)

    @property
    def max_band(self):
        return _chart_band(self.n, self.Q)

    @property
    def nodes(self):
        """Ambient chart nodes, shape (R, Q', n+1)."""
        return np.einsum("qa,rab->rqb", self.local, self.frames)

    def basis(self, L):
        return harmonic_basis(self.n - 1, L)

    def basis_values(self, L):
        """Basis values at the local nodes, shape (Q', size)."""
        return _chart_basis_cache(self.n, self.Q, L, self.local.tobytes())[0]

    def basis_local_gradients(self, L):
        """Local tangential gradients of the basis, shape (Q', size, n)."""
        return _chart_basis_cache(self.n, self.Q, L, self.local.tobytes())[1]

    def basis_gradients(self, L):
        """Ambient tangential gradients, shape (R, Q', size, n+1)."""
        return np.einsum("qka,rab->rqkb", self.basis_local_gradients(L), self.frames)

    def local_coords(self, points, r=None):
        """Coordinates of ambient points in the chart frames."""
        frames = self.frames if r is None else self.frames[r]
        return np.einsum("...b,...ab->...a", points, frames)

    def integrate(self, values):
        """Integrate per-chart node values, shape (R, Q') -> (R,)."""
        return np.asarray(values) @ self.weights

    def project(self, values, L):
        """Chart-basis coefficients of node values, shape (R, Q') -> (R, size)."""
        if L > self.max_band:
            raise AliasingError(f"chart with Q={self.Q} cannot resolve band {L}")
        return (np.asarray(values) * self.weights) @ self.basis_values(L)

    def subset(self, idx):
        idx = np.atleast_1d(idx)
        return ChartFamily(self.vs[idx], self.frames[idx], self.local, self.weights, self.Q)


@lru_cache(maxsize=64)
def _chart_basis_cache(n, Q, L, _key):
    local, _ = _local_rule(n, Q)
    basis = harmonic_basis(n - 1, L)
    return basis.values(local), basis.tangent_gradients(local)


def chart_family(vs, Q, L=None):
    """Build charts for several equators at once.

    Parameters
    ----------
    vs : array_like, shape (R, n+1)
    Q : int
        Node count on the circle (n = 2), or longitude count (n = 3).
    L : int, optional
        Band limit that must be resolved; requires Q >= 4L + 2.
    """
    vs = np.atleast_2d(np.asarray(vs, dtype=float))
    n = vs.shape[1] - 1
    if n not in (2, 3):
        raise ValueError(f"unsupported dimension n={n}")
    if L is not None and Q < 4 * L + 2:
        raise AliasingError(f"Q={Q} too small for band {L}; need Q >= {4 * L + 2}")
    if Q < 4:
        raise AliasingError("Q must be at least 4")
    frames = np.array([frame_for(v) for v in vs])
    local, weights = _local_rule(n, Q)
    return ChartFamily(vs, frames, local, weights, Q)


@dataclass(frozen=True)
class EquatorChart:
    """Quadrature chart on a single equator Sigma_v."""

    v: np.ndarray
    frame: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    family: ChartFamily = field(repr=False)


def equator_chart(v, Q, L=None):
    """Chart on the equator orthogonal to v.

    For n = 2 the nodes are Q equispaced points with weights 2 pi / Q; for
    n = 3 they form a Gauss product grid on the equatorial 2-sphere.
    """
    fam = chart_family(np.asarray(v, dtype=float)[None, :], Q, L)
    return EquatorChart(fam.vs[0], fam.frames[0], fam.nodes[0], fam.weights, fam)


# ---------------------------------------------------------------------------
# Fields

_PARITIES = ("any", "even", "odd")


@dataclass(frozen=True)
class HarmonicField:
    """Band-limited scalar field on S^n given by harmonic coefficients.

    Parameters
    ----------
    n : int
        Sphere dimension (2 or 3).
    L : int
        Band limit.
    coeffs : ndarray
        Coefficients in the package ordering (see module docstring).
    parity : {"any", "even", "odd"}
        Declared parity; coefficients of the other parity must vanish.
    """

    n: int
    L: int
    coeffs: np.ndarray
    parity: str = "any"

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (harmonic_count(self.n, self.L),):
            raise ValueError("coefficient array has the wrong length")
        if self.parity not in _PARITIES:
            raise ValueError(f"parity must be one of {_PARITIES}")
        if self.parity != "any":
            deg = self.degrees
            bad = deg % 2 == (1 if self.parity == "even" else 0)
            scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
            if np.any(np.abs(c[bad]) > 1e-10 * scale):
                raise ValueError(f"coefficients violate declared parity {self.parity}")
            c = c.copy()
            c[bad] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, n, L, parity="any"):
        return cls(n, L, np.zeros(harmonic_count(n, L)), parity)

    @classmethod
    def from_function(cls, n, L, func, parity=None):
        """Project a callable f(points) onto degree <= L."""
        grid = sphere_grid(n, L + 2)
        return field_project(func(grid.points), grid, L, parity=parity)

    @property
    def basis(self):
        return harmonic_basis(self.n, self.L)

    @property
    def degrees(self):
        return harmonic_basis(self.n, self.L).degrees

    def __call__(self, points):
        return self.evaluate(points)

    def evaluate(self, points):
        if hasattr(self.basis, "contract"):
            return self.basis.contract(points, self.coeffs, 0)
        return self.basis.values(points) @ self.coeffs

    def ambient_gradient(self, points):
        if hasattr(self.basis, "contract"):
            return self.basis.contract(points, self.coeffs, 1)
        return np.einsum("...ka,k->...a", self.basis.ambient_gradients(points), self.coeffs)

    def ambient_hessian(self, points):
        if hasattr(self.basis, "contract"):
            return self.basis.contract(points, self.coeffs, 2)
        return np.einsum("...kab,k->...ab", self.basis.ambient_hessians(points), self.coeffs)

    def gradient(self, points):
        """Tangential gradient on the unit sphere."""
        points = np.asarray(points)
        g = self.ambient_gradient(points)
        return g - np.sum(g * points, axis=-1)[..., None] * points

    def with_L(self, L):
        """Zero-padded or truncated copy with band limit L."""
        out = np.zeros(harmonic_count(self.n, L))
        m = min(len(out), len(self.coeffs))
        out[:m] = self.coeffs[:m]
        return HarmonicField(self.n, L, out, self.parity)

    def degree_part(self, l):
        c = np.where(self.degrees == l, self.coeffs, 0.0)
        return HarmonicField(self.n, self.L, c, "any")

    def even_part(self):
        return HarmonicField(self.n, self.L, np.where(self.degrees % 2 == 0, self.coeffs, 0.0), "even")

    def odd_part(self):
        return HarmonicField(self.n, self.L, np.where(self.degrees % 2 == 1, self.coeffs, 0.0), "odd")

    def detected_parity(self, tol=1e-10):
        c = self.coeffs
        scale = max(float(np.max(np.abs(c))), 1e-300) if c.size else 1.0
        odd = np.max(np.abs(c[self.degrees % 2 == 1]), initial=0.0) <= tol * scale
        even = np.max(np.abs(c[self.degrees % 2 == 0]), initial=0.0) <= tol * scale
        if odd and not even:
            return "even"
        if even and not odd:
            return "odd"
        return "any"

    def norm(self):
        """L2 norm on S^n."""
        return float(np.linalg.norm(self.coeffs))

    def _combine(self, other, a, b):
        if not isinstance(other, HarmonicField) or other.n != self.n:
            return NotImplemented
        L = max(self.L, other.L)
        x, y = self.with_L(L), other.with_L(L)
        parity = self.parity if self.parity == other.parity else "any"
        return HarmonicField(self.n, L, a * x.coeffs + b * y.coeffs, parity)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, s):
        return HarmonicField(self.n, self.L, float(s) * self.coeffs, self.parity)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_json(self):
        return {
            "schema": "zollsphere.harmonic_field/1",
            "n": self.n,
            "L": self.L,
            "parity": self.parity,
            "order": "(l,m) m=-l..l" if self.n == 2 else "(l,k,m) k=0..l, m=-k..k",
            "coeffs": [float(c) for c in self.coeffs],
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        for key in ("n", "L", "coeffs"):
            if key not in data:
                raise ValueError(f"harmonic field JSON lacks field '{key}'")
        return cls(int(data["n"]), int(data["L"]), np.asarray(data["coeffs"], dtype=float),
                   data.get("parity", "any"))


def field_project(samples, grid, L, parity=None):
    """Project samples on a :class:`SphereGrid` to a :class:`HarmonicField`.

    Raises
    ------
    AliasingError
        If the grid does not resolve degree L.
    """
    if grid.band < L:
        raise AliasingError(f"grid band {grid.band} cannot resolve degree {L}")
    Y = harmonic_basis(grid.n, L).values(grid.points)
    coeffs = Y.T @ (grid.weights * np.asarray(samples, dtype=float))
    f = HarmonicField(grid.n, L, coeffs, "any")
    if parity is None:
        parity = f.detected_parity()
    return HarmonicField(grid.n, L, coeffs, parity) if parity == "any" else _with_parity(f, parity)


def _with_parity(f, parity):
    return f.even_part() if parity == "even" else f.odd_part()


def field_eval(f, point):
    """Value of a harmonic field at one point."""
    return float(f.evaluate(np.asarray(point, dtype=float)[None, :])[0])


def sphere_gradient(f, p):
    """Tangential gradient of f at p, an ambient vector orthogonal to p."""
    return f.gradient(np.asarray(p, dtype=float)[None, :])[0]


def helmholtz_solve(g, c, project_resonant=False, tol=1e-10):
    """Solve Delta f + c f = g degree by degree.

    The sphere Laplacian acts on degree l by -l(l+n-1). Components of g in a
    resonant degree (where c equals l(l+n-1)) are dropped when
    ``project_resonant`` is set; otherwise they must vanish.

    Raises
    ------
    ResonanceError
        If g has a resonant component above ``tol`` and no projection is requested.
    """
    lam = c - g.degrees * (g.degrees + g.n - 1.0)
    res = np.abs(lam) < 1e-12
    scale = max(1.0, float(np.max(np.abs(g.coeffs))))
    if np.any(res) and not project_resonant:
        if np.any(np.abs(g.coeffs[res]) > tol * scale):
            raise ResonanceError("right-hand side has a component in a resonant eigenspace")
    out = np.where(res, 0.0, g.coeffs / np.where(res, 1.0, lam))
    parity = g.parity
    return HarmonicField(g.n, g.L, out, parity)
