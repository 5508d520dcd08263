"""Generalized Funk transform, its dual, the kernel of F F*, and a right-inverse.

The transform of f on S^n integrates f e^{(n-1) rho} over every graph
Sigma_sigma(Phi), with the round area element of the graph. On a direction
grid it is a matrix from harmonic coefficients of f to values at the
representatives; projecting those values onto even harmonics gives an
operator between coefficient spaces. The adjoint dual is the transpose of the
forward matrix against the grid weights, so the duality pairing holds
exactly for band-limited inputs. The geometric dual integrates over the dual
hypersurfaces through the inverse Gauss map.

The composition F F* is an integral operator with a kernel K that blows up
like 1/d on the diagonal. Each row of its matrix integrates the kernel
against the band-limited interpolant of the input with a polar rule centered
at sigma, in which the 1/sin d singularity cancels against the area element.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import roots_legendre

from .equator_graphs import (
    dual_frame,
    intersect_graphs,
)
from .sphere_core import (
    HarmonicField,
    chart_family,
    frame_for,
    harmonic_basis,
)
from .variational import area, eta, integrand

__all__ = [
    "SingularKernelError",
    "KernelMatrix",
    "funk_matrix",
    "funk_forward",
    "funk_operator",
    "funk_is_d1area",
    "funk_dual",
    "funk_dual_adjoint",
    "funk_dual_geometric",
    "kernel_value",
    "kernel_diagonal",
    "polar_rule",
    "assemble_L",
    "composed_L",
    "invert_L",
    "right_inverse",
    "round_funk_spectrum",
    "tensor_funk",
    "lie_derivative_can",
    "transverse_traceless_samples",
]


class SingularKernelError(RuntimeError):
    """The kernel operator is numerically singular."""


# ---------------------------------------------------------------------------
# Forward transform

def funk_matrix(rho, field, fam, L):
    """Matrix of the transform on harmonics of degree <= L.

    Returns
    -------
    ndarray, shape (R, K)
        Entry (i, k) is the transform of the k-th harmonic at equator i.
    """
    phi, grad = field.chart_data(fam)
    x = fam.nodes
    v = np.broadcast_to(fam.vs[:, None, :], x.shape)
    d = integrand(rho, phi, grad, x, v, order=0)
    Y = harmonic_basis(fam.n, L).values(d["y"])
    return np.einsum("rq,q,rqk->rk", d["A"], fam.weights, Y)


def funk_forward(rho, field, f, grid, Q=64):
    """Transform of f at the representatives of ``grid``.

    Parameters
    ----------
    f : HarmonicField or callable
        A callable is evaluated at ambient points of shape (..., n+1).

    Returns
    -------
    ndarray, shape (R,)
    """
    fam = chart_family(grid.reps, Q)
    return _funk_values(rho, field, f, fam)


def _funk_values(rho, field, f, fam):
    phi, grad = field.chart_data(fam)
    x = fam.nodes
    v = np.broadcast_to(fam.vs[:, None, :], x.shape)
    d = integrand(rho, phi, grad, x, v, order=0)
    fy = f.evaluate(d["y"]) if isinstance(f, HarmonicField) else f(d["y"])
    return fam.integrate(d["A"] * fy)


def funk_operator(rho, field, grid, Q, L, Lout=None):
    """Coefficient-space transform: degree <= L to even degree <= Lout.

    Returns
    -------
    ndarray, shape (K_out, K)
        Rows of odd degree vanish.
    """
    Lout = L if Lout is None else Lout
    F = funk_matrix(rho, field, chart_family(grid.reps, Q), L)
    Y, mask = grid.even_basis(Lout)
    out = np.zeros((len(mask), F.shape[1]))
    out[mask] = 2.0 * (Y * grid.weights[:, None]).T @ F
    return out


def funk_is_d1area(rho, field, f, grid, Q=64, t=1e-5):
    """Relative defect between the transform and the rho-derivative of area.

    Returns
    -------
    float
        max |F(f) - (A(rho + t f) - A(rho - t f)) / (2 t (n-1))| / max |F(f)|.
    """
    n = grid.n
    fam = chart_family(grid.reps, Q)
    fw = _funk_values(rho, field, f, fam)
    fd = (area(rho + f * t, field, fam) - area(rho - f * t, field, fam)) / (2 * t * (n - 1))
    return float(np.max(np.abs(fw - fd)) / max(np.max(np.abs(fw)), 1e-300))


# ---------------------------------------------------------------------------
# Dual transform

def funk_dual_adjoint(rho, field, g, grid, Q, L):
    """Adjoint dual against the grid weights, as a harmonic field of degree L.

    Parameters
    ----------
    g : ndarray, shape (R,)
        Values of an even function at the representatives.
    """
    F = funk_matrix(rho, field, chart_family(grid.reps, Q), L)
    coeffs = F.T @ (grid.weights * np.asarray(g, dtype=float))
    return HarmonicField(grid.n, L, coeffs)


def funk_dual_geometric(rho, field, g, points, Q=64):
    """Dual transform by integration over the dual hypersurfaces.

    Parameters
    ----------
    field : AnalyticGraphField
        A globally defined field (the inverse Gauss map needs Phi off grid).
    g : callable or HarmonicField
        Even function on S^n.
    points : ndarray, shape (P, n+1)

    Returns
    -------
    ndarray, shape (P,)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    fam = chart_family(points, Q)
    w = fam.nodes
    q = np.broadcast_to(points[:, None, :], w.shape)
    x, v, nstar, jac = dual_frame(field, q, w)
    phi, grad = field.evaluate(x, v)
    U = np.sqrt(np.cos(phi) ** 2 + np.sum(grad * grad, axis=-1)) / (
        np.abs(eta(field, x, v, nstar)) * np.cos(phi))
    gv = g.evaluate(v) if isinstance(g, HarmonicField) else g(v)
    n = points.shape[1] - 1
    # w -> [Xi_q(w)] covers the dual hypersurface twice
    return np.exp((n - 1) * rho.evaluate(points)) * 0.5 * fam.integrate(gv * U * jac)


def funk_dual(rho, field, g, grid, Q=64, L=None, method="adjoint", points=None):
    """Dual transform by the adjoint or the geometric route.

    ``method="adjoint"`` takes grid values ``g`` and returns a HarmonicField
    of degree ``L``; ``method="geometric"`` takes a function ``g`` and returns
    values at ``points``.
    """
    if method == "adjoint":
        return funk_dual_adjoint(rho, field, g, grid, Q, grid.band_limit if L is None else L)
    if method == "geometric":
        return funk_dual_geometric(rho, field, g, grid.reps if points is None else points, Q)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Kernel of F F*

def kernel_value(rho, field, sigma, tau, Q=64):
    """K(rho, Phi)(sigma, tau) for n = 2, batched over broadcast sigma and tau.

    Sum over the two intersection points y of
    e^{2(n-1) rho(y)} / sqrt(1 - <N_sigma(y), N_tau(y)>^2).
    """
    n = np.shape(sigma)[-1] - 1
    pts, ns, nt = intersect_graphs(field, sigma, tau, Q=Q, with_normals=True)
    c = np.sum(ns * nt, axis=-1)
    dens = np.exp(2 * (n - 1) * rho.evaluate(pts)) / np.sqrt(1.0 - c * c)
    return dens.sum(axis=-1)


def kernel_diagonal(rho, field, sigma, Q=64, h=0.2, with_gradient=False):
    """Limit of sin(d) K at the diagonal, averaged over directions.

    The limit depends on the direction of approach unless (rho, Phi) = (0, 0);
    the value returned is the mean over the directions +-e_a. Along each of
    the directions +-e_a of a tangent frame, sin(d) K at
    d = h, h/2, h/4, h/8 is split into even and odd parts in d; Neville
    extrapolation in d^2 gives the value and the first derivative at d = 0.

    Parameters
    ----------
    sigma : ndarray, shape (n+1,) or (R, n+1)
    with_gradient : bool
        Also return the tangential gradient of k(sigma, .) at sigma.
    """
    sigma = np.asarray(sigma, dtype=float)
    single = sigma.ndim == 1
    sigma = np.atleast_2d(sigma)
    frames = np.array([frame_for(s) for s in sigma])
    ds = h / 2.0 ** np.arange(4)
    dirs = np.concatenate([frames, -frames], axis=1)
    m = dirs.shape[1]
    taus = (np.cos(ds)[None, None, :, None] * sigma[:, None, None, :]
            + np.sin(ds)[None, None, :, None] * dirs[:, :, None, :])
    vals = kernel_value(rho, field, sigma[:, None, None, :], taus, Q) * np.sin(ds)
    k = m // 2
    even = 0.5 * (vals[:, :k] + vals[:, k:])
    odd = 0.5 * (vals[:, :k] - vals[:, k:]) / ds
    k0 = np.mean(_neville0(ds ** 2, even), axis=1)
    grad = np.einsum("ra,rab->rb", _neville0(ds ** 2, odd), frames)
    if single:
        k0, grad = float(k0[0]), grad[0]
    return (k0, grad) if with_gradient else k0


def _neville0(x, y):
    """Value at 0 of the interpolating polynomial, batched over leading axes."""
    p = np.array(y, dtype=float)
    m = len(x)
    for k in range(1, m):
        p[..., : m - k] = (x[k:] * p[..., : m - k] - x[: m - k] * p[..., 1: m - k + 1]) / (x[k:] - x[: m - k])
    return p[..., 0]


def polar_rule(sigma, n_radial, n_angle):
    """Nodes and weights for integrals of f / sin d over RP^2 centered at sigma.

    In polar coordinates about sigma the area element is sin d dd dtheta, so
    the rule integrates f with weights from Gauss-Legendre on [0, pi/2] and
    the trapezoid rule in theta; f must be even.
    """
    t, wt = roots_legendre(n_radial)
    d = (t + 1) * np.pi / 4
    wd = wt * np.pi / 4
    th = 2 * np.pi * np.arange(n_angle) / n_angle
    fr = frame_for(sigma)
    dirs = np.cos(th)[:, None] * fr[0] + np.sin(th)[:, None] * fr[1]
    pts = np.cos(d)[:, None, None] * sigma + np.sin(d)[:, None, None] * dirs[None]
    w = np.repeat(wd, n_angle) * (2 * np.pi / n_angle)
    return pts.reshape(-1, 3), w


@dataclass
class KernelMatrix:
    """Dense discretization of the kernel operator on a direction grid.

    Attributes
    ----------
    grid : DirectionGrid
    entries : ndarray, shape (R, R) or None
        K(sigma_i, tau_j) off the diagonal; the diagonal holds the
        direction-averaged limit of sin(d) K.
    matrix : ndarray, shape (R, R)
        Operator acting on grid values.
    diag_k : ndarray, shape (R,)
        Extrapolated k(sigma, sigma).
    La : int or None
        Band of the even interpolant the matrix acts through; the matrix has
        rank at most the number of even harmonics of degree <= La.
    """

    grid: object
    entries: np.ndarray
    matrix: np.ndarray
    diag_k: np.ndarray = dc_field(default=None)
    La: int = None

    def apply(self, values):
        return self.matrix @ np.asarray(values, dtype=float)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        R = self.entries.shape[0]
        for i in range(R):
            for j in range(R):
                w.writerow([i, j, repr(float(self.entries[i, j]))])
        return buf.getvalue()


def _even_interpolation(grid, La):
    basis = harmonic_basis(grid.n, La)
    mask = basis.degrees % 2 == 0
    Y = basis.values(grid.reps)[:, mask]
    return basis, mask, 2.0 * (Y * grid.weights[:, None]).T


def _kernel_batches(rho, field, sig, tau, Q, chunk, workers):
    """Kernel values over pairs, evaluated in independent chunks."""
    starts = range(0, len(sig), chunk)

    def run(start):
        return kernel_value(rho, field, sig[start:start + chunk], tau[start:start + chunk], Q)

    if workers is None or workers <= 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    return np.concatenate(parts) if parts else np.zeros(0)


def assemble_L(rho, field, grid, Q=64, La=None, chunk=4096, with_entries=True, workers=None):
    """Assemble the kernel operator L = F F* on grid values (n = 2).

    The function k = sin(d) K is smooth in polar coordinates (d, theta)
    about sigma, where the area element sin d dd dtheta cancels the
    singularity. Row i integrates k(sigma_i, .) times the even interpolant of
    the input with :func:`polar_rule` centered at sigma_i.

    Parameters
    ----------
    La : int, optional
        Degree of the even interpolant, defaults to the grid band limit.
    chunk : int
        Number of kernel entries evaluated per batch; does not affect values.
    workers : int, optional
        Threads evaluating batches concurrently; does not affect values.
    with_entries : bool
        Also tabulate K(sigma_i, tau_j) on the grid, with the extrapolated
        k(sigma_i, sigma_i) on the diagonal.
    """
    if grid.n != 2:
        raise NotImplementedError("kernel assembly is implemented for n = 2")
    La = grid.band_limit if La is None else La
    R = grid.reps
    N = len(R)
    basis, mask, proj = _even_interpolation(grid, La)
    nr, na = La // 2 + 6, La + 2
    rules = [polar_rule(r, nr, na) for r in R]
    pts = np.array([p for p, _ in rules])
    w = rules[0][1]
    P = pts.shape[1]
    sig = np.repeat(R, P, axis=0)
    tau = pts.reshape(-1, 3)
    kv = _kernel_batches(rho, field, sig, tau, Q, chunk, workers)
    sind = np.sqrt(np.clip(1.0 - np.sum(sig * tau, axis=-1) ** 2, 0.0, None))
    kk = (kv * sind).reshape(N, P)
    Yp = basis.values(pts)[..., mask]
    M = np.einsum("p,rp,rpk->rk", w, kk, Yp) @ proj
    entries, diag = None, None
    if with_entries:
        entries = np.zeros((N, N))
        iu, ju = np.triu_indices(N, 1)
        entries[iu, ju] = _kernel_batches(rho, field, R[iu], R[ju], Q, chunk, workers)
        entries = entries + entries.T
        diag = kernel_diagonal(rho, field, R, Q)
        entries[np.diag_indices(N)] = diag
    return KernelMatrix(grid, entries, M, diag, La)


def composed_L(rho, field, grid, Q, L):
    """Operator F F* on grid values composed from the discrete matrices."""
    F = funk_matrix(rho, field, chart_family(grid.reps, Q), L)
    M = F @ F.T * grid.weights[None, :]
    return KernelMatrix(grid, M.copy(), M, La=L)


def invert_L(M, b, cond_max=1e8, tol=1e-9):
    """Solve L u = b by dense LU.

    For a :class:`KernelMatrix` with an interpolation band the solve runs on
    even harmonics of degree <= La: b is replaced by its band-limited part
    and u is band-limited. A plain array is solved as it is.

    Raises
    ------
    SingularKernelError
        If the condition number exceeds ``cond_max`` or the residual exceeds
        ``tol`` relative to b.
    """
    b = np.asarray(b, dtype=float)
    if isinstance(M, KernelMatrix) and M.La is not None:
        basis, mask, proj = _even_interpolation(M.grid, M.La)
        Y = basis.values(M.grid.reps)[:, mask]
        A = proj @ M.matrix @ Y
        c = _lu_solve(A, proj @ b, cond_max)
        u, target = Y @ c, Y @ (proj @ b)
        res = np.linalg.norm(M.matrix @ u - target)
    else:
        A = M.matrix if isinstance(M, KernelMatrix) else np.asarray(M)
        u = _lu_solve(A, b, cond_max)
        res = np.linalg.norm(A @ u - b)
    if res > tol * max(np.linalg.norm(b), 1.0):
        raise SingularKernelError("kernel solve residual too large")
    return u


def _lu_solve(A, b, cond_max):
    if np.linalg.cond(A) > cond_max:
        raise SingularKernelError("kernel operator is numerically singular")
    return np.linalg.solve(A, b)


def right_inverse(rho, field, b, grid, Q=64, L=None):
    """Right-inverse of the coefficient-space transform.

    Returns f = F*(F F*)^{-1} b with F the transform from degree <= L to even
    degree <= L and F* = F^T / 2 its adjoint, so the even part of F(f) up to
    degree L equals b.

    Parameters
    ----------
    b : HarmonicField
        Even field of degree <= L.

    Returns
    -------
    HarmonicField
        Degree-L field.
    """
    L = b.L if L is None else L
    Fc = funk_operator(rho, field, grid, Q, L)
    mask = harmonic_basis(grid.n, L).degrees % 2 == 0
    Fe = Fc[mask]
    G = 0.5 * Fe @ Fe.T
    if np.linalg.cond(G) > 1e8:
        raise SingularKernelError("transform is not invertible on even fields")
    rhs = b.with_L(L).coeffs[mask]
    return HarmonicField(grid.n, L, 0.5 * Fe.T @ np.linalg.solve(G, rhs))


def round_funk_spectrum(L, Q=None):
    """Eigenvalues of the round transform on degree-l harmonics of S^2.

    Integrates the zonal harmonic of degree l over the equator of e3 and
    divides by its value at e3.

    Returns
    -------
    dict
        Degree l -> eigenvalue, for 0 <= l <= L.
    """
    Q = 4 * L + 4 if Q is None else Q
    basis = harmonic_basis(2, L)
    fam = chart_family(np.array([[0.0, 0.0, 1.0]]), Q)
    Yq = basis.values(fam.nodes[0])
    Yp = basis.values(np.array([0.0, 0.0, 1.0]))
    out = {}
    for l in range(L + 1):
        k = int(np.flatnonzero((basis.degrees == l) & (np.array([lab[-1] for lab in basis.labels]) == 0))[0])
        out[l] = float(fam.weights @ Yq[:, k] / Yp[k])
    return out


# ---------------------------------------------------------------------------
# Tensor transform at the round metric

def tensor_funk(h, vs, Q=64):
    """Half the integral over Sigma_sigma of the trace of h along Sigma_sigma.

    Parameters
    ----------
    h : callable
        Maps points (..., n+1) to ambient symmetric matrices (..., n+1, n+1)
        representing a two-tensor on tangent vectors.
    vs : ndarray, shape (R, n+1)

    Returns
    -------
    ndarray, shape (R,)
    """
    fam = chart_family(vs, Q)
    x = fam.nodes
    H = h(x)
    v = np.broadcast_to(fam.vs[:, None, :], x.shape)
    tr = (np.einsum("...aa->...", H) - np.einsum("...a,...ab,...b->...", x, H, x)
          - np.einsum("...a,...ab,...b->...", v, H, v))
    return 0.5 * fam.integrate(tr)


def lie_derivative_can(Z, DZ):
    """Lie derivative of the round metric along the tangent part of Z.

    Parameters
    ----------
    Z, DZ : callable
        Ambient vector field and its Jacobian on R^{n+1}.

    Returns
    -------
    callable
        Points -> P (DZ + DZ^T - 2 <Z, p> I) P with P the tangent projector.
    """
    def h(p):
        z = Z(p)
        D = DZ(p)
        dim = p.shape[-1]
        P = np.eye(dim) - p[..., :, None] * p[..., None, :]
        S = D + np.swapaxes(D, -1, -2) - 2 * np.sum(z * p, axis=-1)[..., None, None] * np.eye(dim)
        return P @ S @ P
    return h


def transverse_traceless_samples():
    """Trace-free, divergence-free two-tensors on S^3 from Killing products.

    Returns
    -------
    list of callable
        X_p . X_q for p != q and X_p . X_p - X_q . X_q, likewise for Y.
    """
    from .killing_metrics import quaternion_frame

    W = quaternion_frame()

    def sym(A, B):
        def h(p):
            a = p @ A.T
            b = p @ B.T
            return 0.5 * (a[..., :, None] * b[..., None, :] + b[..., :, None] * a[..., None, :])
        return h

    def diff(h1, h2):
        return lambda p: h1(p) - h2(p)

    out = []
    for fam in (W[:3], W[3:]):
        for p in range(3):
            for q in range(p + 1, 3):
                out.append(sym(fam[p], fam[q]))
                out.append(diff(sym(fam[p], fam[p]), sym(fam[q], fam[q])))
    return out
