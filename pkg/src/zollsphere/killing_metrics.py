"""Killing two-tensors of the round sphere and metrics with minimal equators.

Killing fields of S^n are the linear fields p -> A p with A skew. A symmetric
product of two of them is (A . B)_p(u, w) = <Ap, u><Bp, w> + <Bp, u><Ap, w>.
Tensors are stored as ambient (n+1) x (n+1) matrices that annihilate p, so
for tangent u, w, z the round covariant derivative is u^T (D_z k) w.

A positive definite Killing tensor k gives the metric g_k = k / D_k with
D_k = det(k)^{2/(n-1)} in a round orthonormal frame; conversely
k_g = g / F_g with F_g = det(g)^{2/(n+1)}.
"""

import json
from dataclasses import dataclass

import numpy as np

from .equator_graphs import complement_basis

__all__ = [
    "DefinitenessError",
    "quaternion_frame",
    "KillingTwoTensor",
    "killing_product",
    "diag_tensor",
    "can_tensor",
    "MetricField",
    "metric_from_killing",
    "killing_from_metric",
    "covariant_derivative",
    "killing_defect",
    "equator_residual",
    "equator_mean_curvature",
    "rigidity_map",
    "rigidity_kernel",
    "random_tangent_samples",
]


class DefinitenessError(ValueError):
    """A tensor that must be positive definite is not."""


def _qmul_matrix(q, left):
    """Matrix of p -> q p (left) or p -> p q (right) on R^4 = H."""
    a, b, c, d = q
    if left:
        return np.array([[a, -b, -c, -d], [b, a, -d, c], [c, d, a, -b], [d, -c, b, a]], dtype=float)
    return np.array([[a, -b, -c, -d], [b, a, d, -c], [c, -d, a, b], [d, c, -b, a]], dtype=float)


def quaternion_frame():
    """Killing fields X_i, X_j, X_k (p -> p i, ...) and Y_i, Y_j, Y_k (p -> i p, ...).

    Returns
    -------
    ndarray, shape (6, 4, 4)
        Skew matrices W_1..W_6 in the order X_i, X_j, X_k, Y_i, Y_j, Y_k.
    """
    units = np.eye(4)[1:]
    X = [_qmul_matrix(u, left=False) for u in units]
    Y = [_qmul_matrix(u, left=True) for u in units]
    return np.array(X + Y)


@dataclass(frozen=True)
class KillingTwoTensor:
    """Linear combination of symmetric products of linear Killing fields.

    Attributes
    ----------
    terms : tuple of (float, ndarray, ndarray)
        Coefficient and two skew matrices per product.
    """

    terms: tuple

    @property
    def dim(self):
        return self.terms[0][1].shape[0]

    def __add__(self, other):
        return KillingTwoTensor(self.terms + other.terms)

    def __mul__(self, s):
        return KillingTwoTensor(tuple((s * c, A, B) for c, A, B in self.terms))

    __rmul__ = __mul__

    def value(self, p):
        """Ambient matrices k_p, shape (..., n+1, n+1)."""
        p = np.asarray(p, dtype=float)
        out = np.zeros(p.shape + (p.shape[-1],))
        for c, A, B in self.terms:
            a = p @ A.T
            b = p @ B.T
            out += c * (a[..., :, None] * b[..., None, :] + b[..., :, None] * a[..., None, :])
        return out

    def derivative(self, p, z):
        """Ambient directional derivative D_z k at p."""
        p = np.asarray(p, dtype=float)
        out = np.zeros(p.shape + (p.shape[-1],))
        for c, A, B in self.terms:
            a, b = p @ A.T, p @ B.T
            da, db = z @ A.T, z @ B.T
            t = da[..., :, None] * b[..., None, :] + a[..., :, None] * db[..., None, :]
            out += c * (t + np.swapaxes(t, -1, -2))
        return out

    def coefficients(self):
        """Coefficients on W_p . W_q, p <= q, when built from the quaternion frame."""
        W = quaternion_frame()
        C = np.zeros((6, 6))
        for c, A, B in self.terms:
            i = _frame_index(W, A)
            j = _frame_index(W, B)
            C[min(i, j), max(i, j)] += c
        return C[np.triu_indices(6)]

    def to_json(self):
        return json.dumps({
            "schema": "zollsphere.killing_tensor/1",
            "terms": [[repr(float(c)), A.tolist(), B.tolist()] for c, A, B in self.terms],
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if data.get("schema") != "zollsphere.killing_tensor/1":
            raise ValueError("unsupported schema for Killing tensor")
        return cls(tuple((float(c), np.array(A, dtype=float), np.array(B, dtype=float))
                         for c, A, B in data["terms"]))


def _frame_index(W, A):
    for i, Wi in enumerate(W):
        if np.array_equal(Wi, A):
            return i
    raise ValueError("matrix is not a quaternion frame element")


def killing_product(A, B, c=1.0):
    """The tensor c A . B for skew matrices A, B."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if np.max(np.abs(A + A.T)) > 1e-14 or np.max(np.abs(B + B.T)) > 1e-14:
        raise ValueError("Killing fields must be skew matrices")
    return KillingTwoTensor(((float(c), A, B),))


def can_tensor():
    """Round metric on S^3 as half the sum of X_p . X_p."""
    W = quaternion_frame()
    return KillingTwoTensor(tuple((0.5, W[p], W[p]) for p in range(3)))


def random_tangent_samples(n, m, rng):
    """Random points on S^n with random unit tangent vectors.

    Returns
    -------
    p : ndarray, shape (m, n+1)
    U : ndarray, shape (m, 3, n+1)
        Three unit tangent vectors per point.
    """
    p = rng.normal(size=(m, n + 1))
    p /= np.linalg.norm(p, axis=-1, keepdims=True)
    U = rng.normal(size=(m, 3, n + 1))
    U -= np.sum(U * p[:, None, :], axis=-1)[..., None] * p[:, None, :]
    U /= np.linalg.norm(U, axis=-1, keepdims=True)
    return p, U


def _tangent_frames(p):
    return complement_basis(p)


def _check_definite(k, samples):
    E = _tangent_frames(samples)
    kT = E @ k.value(samples) @ np.swapaxes(E, -1, -2)
    if np.min(np.linalg.eigvalsh(kT)) <= 0:
        raise DefinitenessError("Killing tensor is not positive definite at all samples")


def _sample_points(n, m=500, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(m, n + 1))
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def diag_tensor(alpha, beta, check=True):
    """The tensor (1/2) sum alpha_i X_i . X_i + (1/2) sum beta_i Y_i . Y_i on S^3.

    Raises
    ------
    ValueError
        Unless alpha_1 > alpha_2 > alpha_3 > beta_1 > beta_2 > beta_3 > 0.
    DefinitenessError
        If the tensor fails to be positive definite at sampled points.
    """
    w = np.concatenate([np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float)])
    if w.shape != (6,) or not (np.all(np.diff(w) < 0) and w[-1] > 0):
        raise ValueError("weights must satisfy alpha_1 > ... > alpha_3 > beta_1 > ... > beta_3 > 0")
    W = quaternion_frame()
    k = KillingTwoTensor(tuple((0.5 * w[p], W[p], W[p]) for p in range(6)))
    if check:
        _check_definite(k, _sample_points(3))
    return k


# ---------------------------------------------------------------------------
# Metrics

@dataclass(frozen=True)
class MetricField:
    """Metric on S^n given by an ambient matrix field that annihilates p.

    Attributes
    ----------
    value : callable
        Points (..., n+1) -> matrices (..., n+1, n+1).
    derivative : callable
        (points, z) -> ambient directional derivatives D_z g.
    n : int
    """

    value: object
    derivative: object
    n: int

    def tangent(self, p, E=None):
        """Matrix of g in the round orthonormal frame E of T_p S^n."""
        E = _tangent_frames(p) if E is None else E
        return E @ self.value(p) @ np.swapaxes(E, -1, -2)

    def volume_density(self, p):
        """sqrt(det g) in a round orthonormal frame."""
        return np.sqrt(np.linalg.det(self.tangent(p)))


def _det_derivative(val, dval, p, n):
    """(det, directional derivative of det) of tangent restrictions."""
    E = _tangent_frames(p)
    T = E @ val @ np.swapaxes(E, -1, -2)
    dT = E @ dval @ np.swapaxes(E, -1, -2)
    det = np.linalg.det(T)
    return det, det * np.einsum("...ij,...ji->...", np.linalg.inv(T), dT)


def metric_from_killing(k, check=True):
    """The metric g_k = k / D_k with D_k = det(k)^{2/(n-1)}.

    Raises
    ------
    DefinitenessError
        If ``check`` and k is not positive definite at sampled points.
    """
    n = k.dim - 1
    e = 2.0 / (n - 1)
    if check:
        _check_definite(k, _sample_points(n))

    def value(p):
        kv = k.value(p)
        det = np.linalg.det(_tangent(kv, p))
        return kv / (det ** e)[..., None, None]

    def derivative(p, z):
        kv = k.value(p)
        dk = k.derivative(p, z)
        det, ddet = _det_derivative(kv, dk, p, n)
        D = det ** e
        dD = e * det ** (e - 1) * ddet
        return dk / D[..., None, None] - kv * (dD / D ** 2)[..., None, None]

    return MetricField(value, derivative, n)


def _tangent(M, p):
    E = _tangent_frames(p)
    return E @ M @ np.swapaxes(E, -1, -2)


def killing_from_metric(g, p):
    """Ambient values of k_g = g / F_g with F_g = det(g)^{2/(n+1)} at points p."""
    gv = g.value(p)
    det = np.linalg.det(_tangent(gv, p))
    return gv / (det ** (2.0 / (g.n + 1)))[..., None, None]


def covariant_derivative(g, p, u, w, z):
    """Round covariant derivative (nabla_z g)(u, w) for tangent u, w, z.

    Valid for ambient fields with g_p p = 0 as well as general extensions.
    """
    gv = g.value(p)
    dg = g.derivative(p, z)
    t = np.einsum("...a,...ab,...b->...", u, dg, w)
    t -= np.sum(z * u, axis=-1) * np.einsum("...a,...ab,...b->...", p, gv, w)
    t -= np.sum(z * w, axis=-1) * np.einsum("...a,...ab,...b->...", u, gv, p)
    return t


def _cyclic(f, u, w, z):
    return f(u, w, z) + f(w, z, u) + f(z, u, w)


def killing_defect(k, p, U):
    """Cyclic sum of the round covariant derivative of k at sampled triples."""
    m = MetricField(k.value, k.derivative, k.dim - 1)
    return _cyclic(lambda a, b, c: covariant_derivative(m, p, a, b, c), U[:, 0], U[:, 1], U[:, 2])


def equator_residual(g, samples=200, seed=0):
    """Sup of the cyclic symmetrization of nabla g - (4/(n+1)) g (x) dlog psi.

    psi = sqrt(det g) in a round orthonormal frame. Vanishes exactly for
    metrics all of whose equators are minimal.
    """
    n = g.n
    rng = np.random.default_rng(seed)
    p, U = random_tangent_samples(n, samples, rng)
    E = _tangent_frames(p)
    gv = g.value(p)
    gT_inv = np.linalg.inv(E @ gv @ np.swapaxes(E, -1, -2))

    def dlogpsi(z):
        dT = E @ g.derivative(p, z) @ np.swapaxes(E, -1, -2)
        return 0.5 * np.einsum("...ij,...ji->...", gT_inv, dT)

    def term(a, b, c):
        gab = np.einsum("...a,...ab,...b->...", a, gv, b)
        return covariant_derivative(g, p, a, b, c) - 4.0 / (n + 1) * gab * dlogpsi(c)

    res = _cyclic(term, U[:, 0], U[:, 1], U[:, 2])
    return float(np.max(np.abs(res)))


def equator_mean_curvature(g, vs, Q=16, h=1e-4):
    """Mean curvature of equators in g at sample points, by finite differences.

    The round derivative of g is taken by central differences of the metric
    values along great circles; the difference of Levi-Civita connections is
    assembled from it by the Koszul formula.

    Parameters
    ----------
    vs : ndarray, shape (R, n+1)
        Equator normals; Q points per equator are sampled.

    Returns
    -------
    ndarray, shape (R, Q)
    """
    n = g.n
    vs = np.atleast_2d(vs)
    out = np.zeros((len(vs), Q))
    rng = np.random.default_rng(1)
    for r, v in enumerate(vs):
        B = complement_basis(v)
        for q in range(Q):
            c = rng.normal(size=n)
            x = (c / np.linalg.norm(c)) @ B
            F = complement_basis(x, v)
            basis = np.vstack([F, v[None]])

            def dg(z):
                # projected constant fields have vanishing round derivative at x
                def gval(t):
                    y = np.cos(t) * x + np.sin(t) * z
                    P = np.eye(n + 1) - np.outer(y, y)
                    Pu = basis @ P.T
                    return Pu @ g.value(y) @ Pu.T
                return (gval(h) - gval(-h)) / (2 * h)

            Dg = np.array([dg(b) for b in basis])
            gx = basis @ g.value(x) @ basis.T
            # Christoffel difference T(X, Y, Z) = g(nabla^g_X Y - nabla_X Y, Z)
            T = _koszul(Dg)
            k = n - 1
            gs = gx[:k, :k]
            nu = np.linalg.solve(gx, np.eye(n)[-1])
            nu = nu / np.sqrt(nu @ gx @ nu)
            II = np.einsum("ijc,c->ij", T[:k, :k, :], nu)
            out[r, q] = np.trace(np.linalg.solve(gs, II))
    return out


def _koszul(Dg):
    """T(X, Y, Z) from A[z, x, y] = (nabla_z g)(x, y).

    T(X, Y, Z) = (1/2) (nabla_X g(Y, Z) + nabla_Y g(X, Z) - nabla_Z g(X, Y)).
    """
    A = Dg
    return 0.5 * (A + np.transpose(A, (1, 0, 2)) - np.transpose(A, (1, 2, 0)))


# ---------------------------------------------------------------------------
# Rigidity

def _sl4_basis():
    basis = []
    for i in range(4):
        for j in range(4):
            if i != j:
                E = np.zeros((4, 4))
                E[i, j] = 1.0
                basis.append(E)
    for i in range(3):
        E = np.zeros((4, 4))
        E[i, i], E[i + 1, i + 1] = 1.0, -1.0
        basis.append(E)
    return np.array(basis)


def rigidity_map(k=None, weights=None):
    """Matrix of t -> k . t on trace-free 4 x 4 matrices.

    The action on a Killing field is A . t = t^T A + A t, extended to
    products by the Leibniz rule. For k = (1/2) sum w_p W_p . W_p, rows are
    coefficients of k . t on W_p . W_q for p < q.

    Parameters
    ----------
    k : KillingTwoTensor, optional
        A diagonal tensor built by :func:`diag_tensor`.
    weights : array_like, optional
        The six weights w_p directly.

    Returns
    -------
    ndarray, shape (15, 15)
    """
    W = quaternion_frame()
    if weights is None:
        C = np.zeros(6)
        for c, A, B in k.terms:
            i, j = _frame_index(W, A), _frame_index(W, B)
            if i != j:
                raise ValueError("rigidity map is implemented for diagonal tensors")
            C[i] += 2.0 * c
        weights = C
    w = np.asarray(weights, dtype=float)
    pairs = [(p, q) for p in range(6) for q in range(p + 1, 6)]
    cols = []
    for t in _sl4_basis():
        # coefficient matrix a[p, q] of W_p . t on W_q (orthogonal basis, norm^2 = 4)
        a = np.array([[np.trace((t.T @ W[p] + W[p] @ t).T @ W[q]) / 4.0 for q in range(6)]
                      for p in range(6)])
        # k . t = (1/2) sum_p w_p ((W_p . t) . W_p + W_p . (W_p . t)) = sum_p w_p (W_p . t) . W_p
        cols.append([w[p] * a[p, q] + w[q] * a[q, p] for p, q in pairs])
    return np.array(cols).T


def rigidity_kernel(k=None, weights=None, threshold=1e-10):
    """Kernel dimension and smallest singular value of :func:`rigidity_map`."""
    s = np.linalg.svd(rigidity_map(k, weights), compute_uv=False)
    return int(np.sum(s <= threshold * max(s[0], 1.0))), float(s[-1])
