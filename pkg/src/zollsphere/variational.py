"""Area functional, Euler-Lagrange operator, Jacobi operators and constraints.

For a conformal factor rho and a graph field Phi the area of Sigma_v(Phi)
in e^{2 rho} can is the integral over Sigma_v of

    A = e^{(n-1) rho(cos U x + sin U v)} cos^{n-2}(U) sqrt(cos^2 U + |L|^2)

evaluated at U = Phi_v(x), L = grad Phi_v(x). The Euler-Lagrange operator
H = -div(dA/dL) + dA/dU is computed in weak form: its coefficients against
the chart basis b_k are the integrals of dA/dU b_k + dA/dL . grad b_k, which
are exactly the derivatives of the discrete area. Jacobi matrices are the
corresponding Hessians and are symmetric by construction.

Sign convention: on the latitude graph Phi = c of the round sphere,
H = -(n-1) cos^{n-2}(c) sin(c).
"""

from dataclasses import dataclass

import numpy as np

from .equator_graphs import GridGraphField, normal_from, point_from
from .sphere_core import ChartFamily, chart_family, harmonic_basis, sphere_area

__all__ = [
    "SingularOperatorError",
    "EvenOneForm",
    "AreaProfile",
    "alpha",
    "integrand",
    "area",
    "area_profile",
    "el_operator",
    "el_values",
    "d1h",
    "d1h_weak",
    "jacobi_assemble",
    "projected_jacobi",
    "solution_map",
    "center_map",
    "j_embed",
    "eta",
    "eta_vector",
    "constraint_map",
    "area_differential",
    "verify_constraint",
]


class SingularOperatorError(RuntimeError):
    """The projected Jacobi operator is numerically singular."""


def alpha(n):
    """Constant alpha_n = n / area(S^{n-1}) making j a right-inverse of C."""
    return n / sphere_area(n - 1)


@dataclass(frozen=True)
class EvenOneForm:
    """One-form omega_v(u) = <X(v), u> stored at representatives.

    Extended to -v by X(-v) = -X(v).
    """

    vs: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        X = X - np.sum(X * self.vs, axis=-1)[:, None] * self.vs
        object.__setattr__(self, "X", X)

    def __call__(self, u):
        return np.sum(self.X * u, axis=-1)

    def norm_inf(self):
        return float(np.max(np.linalg.norm(self.X, axis=-1))) if len(self.X) else 0.0


@dataclass(frozen=True)
class AreaProfile:
    """Areas of all graphs of a field, one value per representative."""

    values: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.values))

    @property
    def spread(self):
        return float(np.max(self.values) - np.min(self.values))


# ---------------------------------------------------------------------------
# The integrand and its derivatives

def integrand(rho, phi, grad, x, v, order=1):
    """Integrand A and its derivatives at arrays of chart data.

    Parameters
    ----------
    rho : HarmonicField
    phi, grad : ndarray
        Graph values (...,) and tangential gradients (..., n+1).
    x, v : ndarray
        Chart nodes and equator normals, broadcast to (..., n+1).
    order : int
        0 for A only, 1 adds first derivatives, 2 adds second derivatives.

    Returns
    -------
    dict
        Keys among E, A, A_U, A_L, A_UU, A_UL, A_LL, y, yp.
    """
    n = x.shape[-1] - 1
    c, s = np.cos(phi), np.sin(phi)
    y = c[..., None] * x + s[..., None] * v
    yp = -s[..., None] * x + c[..., None] * v
    LL = np.sum(grad * grad, axis=-1)
    S = np.sqrt(c * c + LL)
    cp = c ** (n - 2)
    E = np.exp((n - 1) * rho.evaluate(y))
    out = {"E": E, "A": E * cp * S, "y": y, "yp": yp}
    if order < 1:
        return out
    g = rho.ambient_gradient(y)
    r1 = np.sum(g * yp, axis=-1)
    E1 = (n - 1) * r1 * E
    c1 = -(n - 2) * c ** max(n - 3, 0) * s if n > 2 else np.zeros_like(c)
    S_U = -c * s / S
    out["A_U"] = E1 * cp * S + E * c1 * S + E * cp * S_U
    out["A_L"] = (E * cp / S)[..., None] * grad
    out["r1"], out["E1"], out["S"], out["S_U"], out["cp"], out["c1"] = r1, E1, S, S_U, cp, c1
    if order < 2:
        return out
    H = rho.ambient_hessian(y)
    r2 = np.einsum("...a,...ab,...b->...", yp, H, yp) - np.sum(g * y, axis=-1)
    E2 = E * ((n - 1) * r2 + (n - 1) ** 2 * r1 * r1)
    if n > 2:
        c2 = (n - 2) * (n - 3) * c ** max(n - 4, 0) * s * s - (n - 2) * cp
    else:
        c2 = np.zeros_like(c)
    S_UU = -(c * c - s * s) / S - (c * s) ** 2 / S ** 3
    out["A_UU"] = (E2 * cp * S + E * c2 * S + E * cp * S_UU
                   + 2 * E1 * c1 * S + 2 * E1 * cp * S_U + 2 * E * c1 * S_U)
    out["A_UL"] = ((E1 * cp + E * c1) / S - E * cp * S_U / S ** 2)[..., None] * grad
    dim = x.shape[-1]
    eye = np.eye(dim)
    out["A_LL"] = (E * cp / S)[..., None, None] * eye - (E * cp / S ** 3)[..., None, None] * (
        grad[..., :, None] * grad[..., None, :])
    return out


def _chart_inputs(rho, field, fam):
    phi, grad = field.chart_data(fam)
    x = fam.nodes
    v = np.broadcast_to(fam.vs[:, None, :], x.shape)
    return phi, grad, x, v


def _to_local(vec, fam):
    """Ambient tangent vectors on charts, (R, Q, n+1) -> local (R, Q, n)."""
    return np.einsum("rqb,rab->rqa", vec, fam.frames)


# ---------------------------------------------------------------------------
# Area

def area(rho, field, fam):
    """Areas of the graphs over the equators of ``fam`` in e^{2 rho} can.

    Returns
    -------
    ndarray, shape (R,)
    """
    phi, grad, x, v = _chart_inputs(rho, field, fam)
    return fam.integrate(integrand(rho, phi, grad, x, v, order=0)["A"])


def area_profile(rho, field, grid, Q):
    """:class:`AreaProfile` over the representatives of a direction grid."""
    fam = _family_for(field, grid, Q)
    return AreaProfile(area(rho, field, fam))


def _family_for(field, grid, Q):
    if isinstance(field, GridGraphField) and len(field.vs) == grid.size:
        from .sphere_core import _local_rule
        local, weights = _local_rule(grid.n, Q)
        return ChartFamily(field.vs, field.frames, local, weights, Q)
    return chart_family(grid.reps, Q)


# ---------------------------------------------------------------------------
# Euler-Lagrange operator

def el_operator(rho, field, fam, L):
    """Weak-form coefficients of H(rho, Phi) in the chart basis up to band L.

    Returns
    -------
    ndarray, shape (R, K)
        Coefficient k is the integral of H b_k over Sigma_v.
    """
    phi, grad, x, v = _chart_inputs(rho, field, fam)
    d = integrand(rho, phi, grad, x, v, order=1)
    return _weak(d["A_U"], d["A_L"], fam, L)


def _weak(a_u, a_l, fam, L):
    B = fam.basis_values(L)
    G = fam.basis_local_gradients(L)
    w = fam.weights
    al = _to_local(a_l, fam)
    return (a_u * w) @ B + np.einsum("rqa,q,qka->rk", al, w, G)


def el_values(rho, field, fam, band=None):
    """Pointwise H(rho, Phi) at the chart nodes, shape (R, Q').

    Uses the weak form with the largest band the chart resolves.
    """
    band = fam.max_band if band is None else band
    h = el_operator(rho, field, fam, band)
    return h @ fam.basis_values(band).T


def d1h(rho, field, f, fam, L):
    """D_1 H(rho, Phi) f in the chart basis up to band L, closed form.

    (n-1) f(y) H + (n-1) cos^{n-1}(Phi) <grad f(y), N> e^{(n-1) rho(y)} at
    the graph point y, projected onto the chart basis.
    """
    n = fam.n
    phi, grad, x, v = _chart_inputs(rho, field, fam)
    y = point_from(phi, x, v)
    N = normal_from(phi, grad, x, v)
    H = el_values(rho, field, fam)
    E = np.exp((n - 1) * rho.evaluate(y))
    gf = f.gradient(y)
    vals = (n - 1) * f.evaluate(y) * H + (n - 1) * np.cos(phi) ** (n - 1) * np.sum(gf * N, axis=-1) * E
    return fam.project(vals, L)


def d1h_weak(rho, field, f, fam, L):
    """Exact derivative in rho of the weak-form coefficients of H."""
    n = fam.n
    phi, grad, x, v = _chart_inputs(rho, field, fam)
    d = integrand(rho, phi, grad, x, v, order=1)
    fy = f.evaluate(d["y"])
    dfy = np.sum(f.ambient_gradient(d["y"]) * d["yp"], axis=-1)
    a_u = (n - 1) * fy * d["A_U"] + (n - 1) * d["E"] * dfy * d["cp"] * d["S"]
    a_l = ((n - 1) * fy)[..., None] * d["A_L"]
    return _weak(a_u, a_l, fam, L)


# ---------------------------------------------------------------------------
# Jacobi operators

def jacobi_assemble(rho, field, fam, L):
    """Jacobi matrices (second variation of area) on the band-L chart basis.

    Returns
    -------
    ndarray, shape (R, K, K)
        Symmetric matrices; at the round equator the eigenvalue on degree l
        is l(l+n-2) - (n-1).
    """
    phi, grad, x, v = _chart_inputs(rho, field, fam)
    d = integrand(rho, phi, grad, x, v, order=2)
    B = fam.basis_values(L)
    G = fam.basis_local_gradients(L)
    w = fam.weights
    aul = _to_local(d["A_UL"], fam)
    all_ = np.einsum("rqab,ria,rjb->rqij", d["A_LL"], fam.frames, fam.frames)
    Bt = B.T
    J = Bt @ ((d["A_UU"] * w)[..., None] * B)
    cross = Bt @ (w[:, None] * np.einsum("rqa,qka->rqk", aul, G))
    J += cross + np.swapaxes(cross, -1, -2)
    R, Qn, K, m = all_.shape[0], G.shape[0], G.shape[1], G.shape[2]
    D = np.einsum("rqab,qkb->rqak", all_, G).reshape(R, Qn * m, K)
    Gw = (w[:, None, None] * G).transpose(1, 0, 2).reshape(K, Qn * m)
    J += Gw @ D
    return J


def projected_jacobi(J, L, n):
    """Restriction of Jacobi matrices to the complement of degree-1 modes."""
    keep = harmonic_basis(n - 1, L).degrees != 1
    return J[:, keep][:, :, keep], keep


def solution_map(rho, field, psi, fam, L, J=None, tol=1e-8):
    """Solve the projected Jacobi equation per equator.

    Parameters
    ----------
    psi : ndarray, shape (R, K)
        Right-hand side modes; degree-1 modes are ignored.
    J : ndarray, optional
        Precomputed Jacobi matrices.

    Returns
    -------
    ndarray, shape (R, K)
        Modes with zero degree-1 part.

    Raises
    ------
    SingularOperatorError
        If any projected operator has an eigenvalue below ``tol`` in modulus.
    """
    n = fam.n
    if J is None:
        J = jacobi_assemble(rho, field, fam, L)
    P, keep = projected_jacobi(J, L, n)
    ev = np.linalg.eigvalsh(0.5 * (P + np.swapaxes(P, -1, -2)))
    if np.min(np.abs(ev)) < tol:
        raise SingularOperatorError("projected Jacobi operator is numerically singular")
    out = np.zeros_like(psi)
    out[:, keep] = np.linalg.solve(P, psi[:, keep][..., None])[..., 0]
    return out


# ---------------------------------------------------------------------------
# Center map, embedding and constraint

def center_map(values, fam):
    """C(Psi)_v(u) = integral of Psi(x, v) <x, u> over Sigma_v.

    Parameters
    ----------
    values : ndarray, shape (R, Q')
        Psi at the chart nodes.
    """
    X = np.einsum("rq,q,rqa->ra", values, fam.weights, fam.nodes)
    return EvenOneForm(fam.vs, X)


def j_embed(omega, fam, L):
    """Modes of (j omega)(x, v) = alpha_n <X(v), x> in the chart basis."""
    vals = alpha(fam.n) * np.einsum("ra,rqa->rq", omega.X, fam.nodes)
    return fam.project(vals, L)


def eta_vector(field, x, v):
    """Vector g with eta(Phi)(x, v, u) = <g, u> for u tangent at v."""
    phi, grad = field.evaluate(x, v)
    dx, dv = field.ambient_gradients(x, v)
    g = -x - np.sum(dx * v, axis=-1)[..., None] * x + dv - np.tan(phi)[..., None] * grad
    return g - np.sum(g * v, axis=-1)[..., None] * v


def eta(field, x, v, u):
    """eta(Phi)(x, v, u) = -<x,u> + D Phi(-<x,u> v, u) - tan(Phi) <grad Phi, u>."""
    phi, grad = field.evaluate(x, v)
    xu = np.sum(x * u, axis=-1)
    dphi = field.derivative(x, v, -xu[..., None] * v, u)
    return -xu + dphi - np.tan(phi) * np.sum(grad * u, axis=-1)


def constraint_map(field, values, fam):
    """K(Phi, Psi)_v(u) = integral of Psi(x, v) eta(Phi)(x, v, u) over Sigma_v."""
    x = fam.nodes
    v = np.broadcast_to(fam.vs[:, None, :], x.shape)
    g = eta_vector(field, x, v)
    X = np.einsum("rq,q,rqa->ra", values, fam.weights, g)
    return EvenOneForm(fam.vs, X)


def area_differential(profile_values, grid, La):
    """Tangential gradient of the even expansion of an area profile at the reps."""
    f = grid.project_even(profile_values, La)
    return f.gradient(grid.reps)


def verify_constraint(rho, field, grid, Q, La=None):
    """Sup-norm defect of K(Phi, H(rho, Phi)) - dA(rho, Phi) over the grid.

    Returns
    -------
    residual : float
    dA_norm : float
        Sup norm of the area differential.
    """
    La = grid.band_limit if La is None else La
    fam = chart_family(grid.reps, Q)
    H = el_values(rho, field, fam)
    K = constraint_map(field, H, fam)
    prof = area(rho, field, fam)
    dA = area_differential(prof, grid, La)
    res = np.linalg.norm(K.X - dA, axis=-1)
    return float(np.max(res)), float(np.max(np.linalg.norm(dA, axis=-1)))
