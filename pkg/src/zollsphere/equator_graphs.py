"""Graphs over equators, the generalized Gauss map and graph intersections.

A graph field assigns to each equator normal v a function Phi_v on the
equator Sigma_v; the perturbed equator is the set of points
cos(Phi_v(x)) x + sin(Phi_v(x)) v. Fields are odd in v, so Sigma_{-v} and
Sigma_v describe the same hypersurface.

Two representations are provided. :class:`GridGraphField` stores harmonic
modes per representative of a direction grid (the solver's representation);
it can only be evaluated on those representatives. :class:`AnalyticGraphField`
is a polynomial in (x, v), defined on all of the unit tangent bundle and
differentiable in every direction, including complex-step derivatives.
"""

import math

import numpy as np

from .sphere_core import ChartFamily, chart_family, harmonic_basis, harmonic_count

__all__ = [
    "EPS_GRAPH",
    "GaussInverseError",
    "IntersectionError",
    "GraphField",
    "GridGraphField",
    "AnalyticGraphField",
    "zero_field",
    "graph_point",
    "graph_normal",
    "graph_jacobian",
    "graph_tangent",
    "point_from",
    "normal_from",
    "jacobian_from",
    "gauss_map",
    "gauss_map_inverse",
    "level_value",
    "intersect_graphs",
    "dual_frame",
    "dual_normal",
    "complement_basis",
]

EPS_GRAPH = 0.3


class GaussInverseError(RuntimeError):
    """Newton iteration for the inverse Gauss map did not converge."""


class IntersectionError(RuntimeError):
    """Two graphs did not intersect in the expected number of points."""


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def complement_basis(*vectors):
    """Orthonormal basis of the complement of orthonormal vectors.

    Returns an array of shape (..., k, n+1) where k = n+1 - len(vectors).
    """
    dim = vectors[0].shape[-1]
    P = np.broadcast_to(np.eye(dim), vectors[0].shape[:-1] + (dim, dim)).copy()
    for a in vectors:
        P = P - a[..., :, None] * a[..., None, :]
    w, V = np.linalg.eigh(P)
    k = dim - len(vectors)
    return np.swapaxes(V[..., :, dim - k:], -1, -2)


# ---------------------------------------------------------------------------
# Pointwise graph geometry on arrays

def point_from(phi, x, v):
    """cos(phi) x + sin(phi) v."""
    return np.cos(phi)[..., None] * x + np.sin(phi)[..., None] * v


def normal_from(phi, grad, x, v):
    """Unit normal of the graph, pointing toward v when phi is small."""
    c, s = np.cos(phi), np.sin(phi)
    sperp = -s[..., None] * x + c[..., None] * v
    num = c[..., None] * sperp - grad
    return num / np.sqrt(c * c + _dot(grad, grad))[..., None]


def jacobian_from(phi, grad, n):
    """cos^{n-2}(phi) sqrt(cos^2 phi + |grad phi|^2)."""
    c = np.cos(phi)
    return c ** (n - 2) * np.sqrt(c * c + _dot(grad, grad))


# ---------------------------------------------------------------------------
# Graph fields

class GraphField:
    """Common interface of graph fields.

    Subclasses implement :meth:`evaluate` returning the value and the
    tangential gradient on Sigma_v, and :meth:`chart_data` returning the same
    on the nodes of a :class:`ChartFamily`.
    """

    n = None
    is_global = False

    def evaluate(self, x, v):
        raise NotImplementedError

    def chart_data(self, fam):
        nodes = fam.nodes
        vs = np.broadcast_to(fam.vs[:, None, :], nodes.shape)
        return self.evaluate(nodes, vs)

    def derivative(self, x, v, xi, zeta):
        """D Phi at (x, v) applied to the tangent vector (xi, zeta)."""
        raise NotImplementedError


class AnalyticGraphField(GraphField):
    """Phi(x, v) = sum_{a,b} C[a, b] Y_a(x) Z_b(v) with Z_b odd harmonics.

    Parameters
    ----------
    n : int
        Sphere dimension.
    Lx, Lv : int
        Band limits in x and v.
    coeffs : ndarray, shape (harmonic_count(n, Lx), number of odd harmonics <= Lv)
    """

    is_global = True

    def __init__(self, n, Lx, Lv, coeffs):
        self.n, self.Lx, self.Lv = n, Lx, Lv
        self.bx = harmonic_basis(n, Lx)
        self.bv = harmonic_basis(n, Lv)
        self.vmask = self.bv.degrees % 2 == 1
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.bx.size, int(self.vmask.sum())):
            raise ValueError("coefficient matrix has the wrong shape")
        self.coeffs = coeffs

    @classmethod
    def random(cls, n, Lx, Lv, amplitude, rng):
        """Random field with sup-norm roughly ``amplitude``."""
        bv = harmonic_basis(n, Lv)
        nv = int((bv.degrees % 2 == 1).sum())
        C = rng.standard_normal((harmonic_count(n, Lx), nv))
        f = cls(n, Lx, Lv, C)
        from .sphere_core import make_direction_grid
        grid = make_direction_grid(n, max(4, Lv + 1))
        fam = chart_family(grid.reps, 4 * max(Lx, 2) + 6)
        phi, grad = f.chart_data(fam)
        scale = max(np.max(np.abs(phi)), np.max(np.sqrt(_dot(grad, grad))))
        return cls(n, Lx, Lv, C * (amplitude / scale))

    def scaled(self, s):
        return AnalyticGraphField(self.n, self.Lx, self.Lv, s * self.coeffs)

    def _parts(self, x, v):
        Yx = self.bx.values(x)
        Yv = self.bv.values(v)[..., self.vmask]
        return Yx, Yv

    def value(self, x, v):
        Yx, Yv = self._parts(x, v)
        return np.sum(Yx * (Yv @ self.coeffs.T), axis=-1)

    def ambient_gradients(self, x, v):
        """Ambient x- and v-gradients of the polynomial extension."""
        Yx, Yv = self._parts(x, v)
        Gx = self.bx.ambient_gradients(x)
        Gv = self.bv.ambient_gradients(v)[..., self.vmask, :]
        dx = np.einsum("...ai,...a->...i", Gx, Yv @ self.coeffs.T)
        dv = np.einsum("...bi,...b->...i", Gv, Yx @ self.coeffs)
        return dx, dv

    def evaluate(self, x, v):
        x = np.asarray(x)
        v = np.broadcast_to(np.asarray(v), x.shape)
        phi = self.value(x, v)
        dx, _ = self.ambient_gradients(x, v)
        grad = dx - _dot(dx, x)[..., None] * x - _dot(dx, v)[..., None] * v
        return phi, grad

    def derivative(self, x, v, xi, zeta):
        dx, dv = self.ambient_gradients(x, v)
        return _dot(dx, xi) + _dot(dv, zeta)


def zero_field(n):
    """The zero graph field (all equators unperturbed)."""
    nv = int((harmonic_basis(n, 1).degrees % 2 == 1).sum())
    return AnalyticGraphField(n, 0, 1, np.zeros((1, nv)))


class GridGraphField(GraphField):
    """Per-representative harmonic modes on the charts of a :class:`ChartFamily`.

    Parameters
    ----------
    vs : ndarray, shape (R, n+1)
        Representatives (equator normals).
    frames : ndarray, shape (R, n, n+1)
        Chart frames used for the modes.
    L : int
        Band limit of each Phi_v.
    modes : ndarray, shape (R, harmonic_count(n-1, L))
    subspace : {"star_odd", "zero_odd"}
        ``zero_odd`` requires vanishing degree-1 modes.
    """

    def __init__(self, vs, frames, L, modes, subspace="star_odd"):
        self.vs = np.asarray(vs, dtype=float)
        self.frames = np.asarray(frames, dtype=float)
        self.n = self.vs.shape[1] - 1
        self.L = L
        self.basis = harmonic_basis(self.n - 1, L)
        modes = np.asarray(modes, dtype=float)
        if modes.shape != (len(self.vs), self.basis.size):
            raise ValueError("mode array has the wrong shape")
        if subspace not in ("star_odd", "zero_odd"):
            raise ValueError("subspace must be 'star_odd' or 'zero_odd'")
        lin = self.basis.degrees == 1
        if subspace == "zero_odd":
            scale = max(1.0, float(np.max(np.abs(modes))) if modes.size else 1.0)
            if np.any(np.abs(modes[:, lin]) > 1e-12 * scale):
                raise ValueError("zero_odd field has degree-1 components")
            modes = modes.copy()
            modes[:, lin] = 0.0
        self.modes = modes
        self.subspace = subspace

    @classmethod
    def zeros(cls, fam, L, subspace="zero_odd"):
        return cls(fam.vs, fam.frames, L, np.zeros((fam.size, harmonic_count(fam.n - 1, L))), subspace)

    @classmethod
    def from_family(cls, fam, L, modes, subspace="star_odd"):
        return cls(fam.vs, fam.frames, L, modes, subspace)

    def like(self, modes, subspace=None):
        return GridGraphField(self.vs, self.frames, self.L, modes, subspace or self.subspace)

    def linear_modes_mask(self):
        return self.basis.degrees == 1

    def recentered(self):
        """Copy with the degree-1 modes removed."""
        m = self.modes.copy()
        m[:, self.linear_modes_mask()] = 0.0
        return self.like(m, "zero_odd")

    def with_L(self, L):
        nb = harmonic_count(self.n - 1, L)
        m = np.zeros((len(self.vs), nb))
        k = min(nb, self.modes.shape[1])
        m[:, :k] = self.modes[:, :k]
        return GridGraphField(self.vs, self.frames, L, m, self.subspace)

    def __add__(self, other):
        return self.like(self.modes + other.modes, _join(self, other))

    def __sub__(self, other):
        return self.like(self.modes - other.modes, _join(self, other))

    def __mul__(self, s):
        return self.like(float(s) * self.modes)

    __rmul__ = __mul__

    def sup_norm(self, Q=None):
        fam = ChartFamily(self.vs, self.frames, *_local(self.n, Q or 4 * self.L + 6))
        phi, grad = self.chart_data(fam)
        return float(max(np.max(np.abs(phi)), np.max(np.sqrt(_dot(grad, grad)))))

    def chart_data(self, fam):
        if fam.vs.shape != self.vs.shape or not np.array_equal(fam.frames, self.frames):
            return super().chart_data(fam)
        B = fam.basis_values(self.L)
        G = fam.basis_local_gradients(self.L)
        phi = self.modes @ B.T
        gloc = np.einsum("rk,qka->rqa", self.modes, G)
        grad = np.einsum("rqa,rab->rqb", gloc, self.frames)
        return phi, grad

    def rep_index(self, v):
        """Index of the representative equal to +-v and the sign."""
        v = np.asarray(v, dtype=float)
        d = v @ self.vs.T
        idx = np.argmax(np.abs(d), axis=-1)
        dd = np.take_along_axis(d, idx[..., None], axis=-1)[..., 0]
        if np.any(np.abs(np.abs(dd) - 1.0) > 1e-12):
            raise ValueError("grid graph field is only defined on its representatives")
        return idx, np.sign(dd)

    def evaluate(self, x, v, rep=None):
        x = np.asarray(x, dtype=float)
        if rep is None:
            rep, sign = self.rep_index(np.broadcast_to(v, x.shape))
        else:
            sign = np.ones(np.shape(rep))
        rep = np.broadcast_to(rep, x.shape[:-1])
        sign = np.broadcast_to(sign, x.shape[:-1])
        fr = self.frames[rep]
        coords = np.einsum("...ab,...b->...a", fr, x)
        B = self.basis.values(coords)
        md = self.modes[rep]
        phi = sign * np.sum(B * md, axis=-1)
        G = self.basis.tangent_gradients(coords)
        gloc = np.einsum("...ka,...k->...a", G, md)
        grad = sign[..., None] * np.einsum("...a,...ab->...b", gloc, fr)
        return phi, grad

    def to_json(self, grid_ref=None):
        return {
            "schema": "zollsphere.graph_field/1",
            "grid_ref": grid_ref,
            "n": self.n,
            "L": self.L,
            "subspace": self.subspace,
            "per_rep_modes": self.modes.tolist(),
        }


def _join(a, b):
    return "zero_odd" if a.subspace == b.subspace == "zero_odd" else "star_odd"


def _local(n, Q):
    from .sphere_core import _local_rule
    local, weights = _local_rule(n, Q)
    return local, weights, Q


# ---------------------------------------------------------------------------
# Public pointwise operations

def graph_point(field, x, v):
    """Point of Sigma_v(Phi) over x in Sigma_v."""
    phi, _ = field.evaluate(x, v)
    return point_from(phi, np.asarray(x), np.asarray(v))


def graph_normal(field, x, v):
    """Unit normal of Sigma_v(Phi) at the point over x."""
    phi, grad = field.evaluate(x, v)
    return normal_from(phi, grad, np.asarray(x), np.asarray(v))


def graph_jacobian(field, x, v):
    """Jacobian determinant of x -> Sigma_v(Phi)(x)."""
    phi, grad = field.evaluate(x, v)
    return jacobian_from(phi, grad, np.asarray(x).shape[-1] - 1)


def graph_tangent(field, x, v, u):
    """Image of a tangent vector u of Sigma_v at x under the graph map."""
    phi, grad = field.evaluate(x, v)
    x, v, u = np.asarray(x), np.asarray(v), np.asarray(u)
    sperp = -np.sin(phi)[..., None] * x + np.cos(phi)[..., None] * v
    return np.cos(phi)[..., None] * u + _dot(grad, u)[..., None] * sperp


def gauss_map(field, x, v):
    """(x, v) -> (graph point, unit normal)."""
    phi, grad = field.evaluate(x, v)
    x, v = np.asarray(x), np.asarray(v)
    return point_from(phi, x, v), normal_from(phi, grad, x, v)


def _tangent_directions(x, v):
    """Tangent directions of the unit tangent bundle at (x, v).

    Returns (xi, zeta) arrays of shape (..., 2n-1, n+1).
    """
    C = complement_basis(x, v)
    k = C.shape[-2]
    zeros = np.zeros_like(C)
    xi = np.concatenate([C, zeros, v[..., None, :]], axis=-2)
    zeta = np.concatenate([zeros, C, -x[..., None, :]], axis=-2)
    return xi, zeta, k


def _curve(x, v, xi, zeta, s):
    """Great-circle curves through (x, v) in the directions (xi, zeta)."""
    c, sn = np.cos(s), np.sin(s)
    return c * x + sn * xi, c * v + sn * zeta


def _gauss_jacobian(field, x, v):
    """Differential of the Gauss map in the bundle directions.

    Returns (J, xi, zeta) with J of shape (..., 2n+2, 2n-1).
    """
    xi, zeta, _ = _tangent_directions(x, v)
    m = xi.shape[-2]
    cols = []
    for i in range(m):
        a, b = xi[..., i, :], zeta[..., i, :]
        # the rotation direction (v, -x) is a unit-speed curve of the same form
        if field.is_global and isinstance(field, AnalyticGraphField):
            h = 1e-20
            xs, vs = _curve(x + 0j, v + 0j, a, b, 1j * h)
            y, N = gauss_map(field, xs, vs)
            col = np.concatenate([y.imag, N.imag], axis=-1) / h
        else:
            h = 1e-6
            y1, N1 = gauss_map(field, *_curve(x, v, a, b, h))
            y0, N0 = gauss_map(field, *_curve(x, v, a, b, -h))
            col = np.concatenate([y1 - y0, N1 - N0], axis=-1) / (2 * h)
        cols.append(col)
    return np.stack(cols, axis=-1), xi, zeta


def gauss_map_inverse(field, q, w, tol=1e-12, max_iter=50):
    """Solve gauss_map(field, x, v) = (q, w) for (x, v) by Newton iteration.

    Returns
    -------
    x, v : ndarray
        Arrays of the same shape as q; x is Upsilon_q(w) and v is Xi_q(w).

    Raises
    ------
    GaussInverseError
        If the iteration fails to converge (Phi too large).
    """
    if not field.is_global:
        raise TypeError("the inverse Gauss map needs a field defined off the grid")
    q = np.asarray(q, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), q.shape)
    x, v = q.copy(), w.copy()
    for _ in range(max_iter):
        y, N = gauss_map(field, x, v)
        r = np.concatenate([y - q, N - w], axis=-1)
        err = np.max(np.abs(r)) if r.size else 0.0
        if err < tol:
            return x, v
        J, xi, zeta = _gauss_jacobian(field, x, v)
        a = _lstsq(J, -r)
        dx = np.einsum("...i,...ia->...a", a, xi)
        dv = np.einsum("...i,...ia->...a", a, zeta)
        x, v = _retract(x + dx, v + dv)
    y, N = gauss_map(field, x, v)
    r = np.concatenate([y - q, N - w], axis=-1)
    if np.max(np.abs(r)) < 10 * tol:
        return x, v
    raise GaussInverseError(f"inverse Gauss map did not converge (residual {np.max(np.abs(r)):.2e})")


def _lstsq(J, b):
    JT = np.swapaxes(J, -1, -2)
    return np.linalg.solve(JT @ J, np.einsum("...ji,...j->...i", J, b)[..., None])[..., 0]


def _retract(x, v):
    x = x / np.sqrt(_dot(x, x))[..., None]
    v = v - _dot(v, x)[..., None] * x
    return x, v / np.sqrt(_dot(v, v))[..., None]


def dual_frame(field, q, w):
    """Inverse Gauss map data along the dual hypersurface through q.

    Returns
    -------
    x, v : ndarray
        (x, v) with gauss_map(x, v) = (q, w), so v = Xi_q(w).
    nstar : ndarray
        Unit normal of w -> Xi_q(w) at v, tangent to S^n, with <nstar, q> > 0.
    jac : ndarray
        Jacobian of w -> Xi_q(w) restricted to Sigma_q.
    """
    q = np.asarray(q, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), q.shape)
    x, v = gauss_map_inverse(field, q, w)
    J, xi, zeta = _gauss_jacobian(field, x, v)
    T = complement_basis(q, w)
    k = T.shape[-2]
    dvs = []
    for j in range(k):
        rhs = np.concatenate([np.zeros_like(q), T[..., j, :]], axis=-1)
        a = _lstsq(J, rhs)
        dvs.append(np.einsum("...i,...ia->...a", a, zeta))
    dv = np.stack(dvs, axis=-2)
    gram = np.einsum("...ia,...ja->...ij", dv, dv)
    jac = np.sqrt(np.linalg.det(gram))
    M = np.concatenate([v[..., None, :], dv], axis=-2)
    _, _, Vt = np.linalg.svd(M)
    nstar = Vt[..., -1, :]
    sgn = np.sign(_dot(nstar, q))
    nstar = nstar * np.where(sgn == 0, 1.0, sgn)[..., None]
    return x, v, nstar, jac


def dual_normal(field, q, w):
    """N*_q(Phi)(w): unit normal along the dual hypersurface, <N*, q> > 0."""
    return dual_frame(field, q, w)[2]


def _phi_only(field, x, v, rep=None):
    if rep is None and hasattr(field, "value"):
        return field.value(x, v)
    if rep is None:
        return field.evaluate(x, v)[0]
    return field.evaluate(x, v, rep=rep)[0]


def level_value(field, v, p, rep=None, strict=True):
    """Graph-coordinate level function sin(t - Phi_v(x)) for p = cos t x + sin t v.

    Vanishes exactly on Sigma_v(Phi) (for |t| < pi/2), is positive on the v
    side and changes sign with v. With ``strict=False`` points at +-v get the
    value +-1 instead of raising.
    """
    p = np.asarray(p, dtype=float)
    v = np.broadcast_to(np.asarray(v, dtype=float), p.shape)
    pole = np.minimum(np.linalg.norm(p - v, axis=-1), np.linalg.norm(p + v, axis=-1)) < 1e-8
    if strict and np.any(pole):
        raise ValueError("level function undefined at +-v")
    s = _dot(p, v)
    xp = p - s[..., None] * v
    if np.any(pole):
        xp = np.where(pole[..., None], complement_basis(v)[..., 0, :], xp)
    xp = xp / np.linalg.norm(xp, axis=-1)[..., None]
    t = np.arcsin(np.clip(s, -1.0, 1.0))
    phi = _phi_only(field, xp, v, rep)
    return np.where(pole, np.sign(s), np.sin(t - phi))


def _level_on_graph(field, sigma, tau, frame, rs, rt, th):
    """Level function of tau along Sigma_sigma(Phi) at angles th, shape (..., k)."""
    k = th.shape[-1]
    batch = sigma.shape[:-1]
    sg = np.broadcast_to(sigma[..., None, :], batch + (k, 3))
    fr = frame[..., None, :, :]
    x = np.cos(th)[..., None] * fr[..., 0, :] + np.sin(th)[..., None] * fr[..., 1, :]
    phi = _phi_only(field, x, sg, None if rs is None else np.broadcast_to(rs[..., None], batch + (k,)))
    y = point_from(phi, x, sg)
    tb = np.broadcast_to(tau[..., None, :], y.shape)
    return level_value(field, tb, y, strict=False,
                       rep=None if rt is None else np.broadcast_to(rt[..., None], batch + (k,)))


def _bracket(field, sigma, tau, frame, rs, rt, M):
    theta = 2 * math.pi * np.arange(M) / M
    vals = _level_on_graph(field, sigma, tau, frame, rs, rt,
                           np.broadcast_to(theta, sigma.shape[:-1] + (M,)))
    change = np.signbit(vals) != np.signbit(np.roll(vals, -1, axis=-1))
    idx = np.sort(np.argsort(~change, axis=-1, kind="stable")[..., :2], axis=-1)
    return (change.sum(axis=-1), theta[idx], np.take_along_axis(vals, idx, axis=-1),
            np.take_along_axis(vals, (idx + 1) % M, axis=-1))


def intersect_graphs(field, sigma, tau, Q=64, rep_sigma=None, rep_tau=None, with_normals=False):
    """Intersection points of Sigma_sigma(Phi) and Sigma_tau(Phi) for n = 2.

    The level function of tau is sampled at 32 points of Sigma_sigma(Phi),
    and at 2Q points for pairs without exactly two sign changes; each root
    is then refined by the Illinois variant of regula falsi.

    Parameters
    ----------
    sigma, tau : array_like
        Equator normals, shape (n+1,) or batched (..., n+1); the batch
        shapes must broadcast.
    rep_sigma, rep_tau : int or array, optional
        Representative indices for :class:`GridGraphField` inputs.
    with_normals : bool
        Also return the unit normals of both graphs at the points.

    Returns
    -------
    points : ndarray, shape (..., 2, 3)
    """
    sigma = np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if sigma.shape[-1] != 3 or tau.shape[-1] != 3:
        raise NotImplementedError("intersections are implemented for n = 2")
    batch = np.broadcast_shapes(sigma.shape[:-1], tau.shape[:-1])
    if batch == ():
        out = intersect_graphs(field, sigma[None], tau[None], Q,
                               None if rep_sigma is None else np.atleast_1d(rep_sigma),
                               None if rep_tau is None else np.atleast_1d(rep_tau), with_normals)
        return out[0] if not with_normals else tuple(a[0] for a in out)
    sigma = np.broadcast_to(sigma, batch + (3,))
    tau = np.broadcast_to(tau, batch + (3,))
    if np.any(np.abs(np.abs(_dot(sigma, tau)) - 1.0) < 1e-12):
        raise ValueError("sigma and tau must be distinct directions")
    from .sphere_core import frame_for
    flat = sigma.reshape(-1, 3)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    frame = np.array([frame_for(u) for u in uniq])[np.ravel(inv)].reshape(batch + (2, 3))
    rs = None if rep_sigma is None else np.broadcast_to(rep_sigma, batch)
    rt = None if rep_tau is None else np.broadcast_to(rep_tau, batch)

    M = max(2 * Q, 32)
    counts, lo, flo, fhi = _bracket(field, sigma, tau, frame, rs, rt, 32)
    step = np.full(batch + (1,), 2 * math.pi / 32)
    bad = counts != 2
    if np.any(bad):
        sub = np.nonzero(bad)
        c2, l2, f2, h2 = _bracket(field, sigma[sub], tau[sub], frame[sub],
                                  None if rs is None else rs[sub], None if rt is None else rt[sub], M)
        counts[sub], lo[sub], flo[sub], fhi[sub] = c2, l2, f2, h2
        step[sub] = 2 * math.pi / M
    if np.any(counts != 2):
        raise IntersectionError("expected exactly two intersection points")
    hi = lo + step

    def F(th):
        return _level_on_graph(field, sigma, tau, frame, rs, rt, th)

    # Illinois regula falsi: the bracket is kept and the stale end halved
    side = np.zeros(lo.shape, dtype=int)
    for _ in range(14):
        den = fhi - flo
        mid = np.where(den != 0, (lo * fhi - hi * flo) / np.where(den != 0, den, 1.0), 0.5 * (lo + hi))
        mid = np.clip(mid, lo, hi)
        fm = F(mid)
        same = np.signbit(fm) == np.signbit(flo)
        lo_new = np.where(same, mid, lo)
        hi_new = np.where(same, hi, mid)
        flo_new = np.where(same, fm, flo)
        fhi_new = np.where(same, fhi, fm)
        flo_new = np.where(~same & (side == -1), 0.5 * flo_new, flo_new)
        fhi_new = np.where(same & (side == 1), 0.5 * fhi_new, fhi_new)
        side = np.where(same, 1, -1)
        lo, hi, flo, fhi = lo_new, hi_new, flo_new, fhi_new
    root = np.where(np.abs(flo) < np.abs(fhi), lo, hi)
    sg = np.broadcast_to(sigma[..., None, :], batch + (2, 3))
    fr = frame[..., None, :, :]
    x = np.cos(root)[..., None] * fr[..., 0, :] + np.sin(root)[..., None] * fr[..., 1, :]
    if rs is None:
        phi, grad = field.evaluate(x, sg)
    else:
        phi, grad = field.evaluate(x, sg, rep=np.broadcast_to(rs[..., None], batch + (2,)))
    pts = point_from(phi, x, sg)
    if not with_normals:
        return pts
    n_sigma = normal_from(phi, grad, x, sg)
    tb = np.broadcast_to(tau[..., None, :], pts.shape)
    s = _dot(pts, tb)
    xp = pts - s[..., None] * tb
    xp = xp / np.linalg.norm(xp, axis=-1)[..., None]
    if rt is None:
        ph2, gr2 = field.evaluate(xp, tb)
    else:
        ph2, gr2 = field.evaluate(xp, tb, rep=np.broadcast_to(rt[..., None], batch + (2,)))
    n_tau = normal_from(ph2, gr2, xp, tb)
    return pts, n_sigma, n_tau
