import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from zollsphere.equator_graphs import AnalyticGraphField, zero_field
from zollsphere.funk_transform import (
    KernelMatrix,
    SingularKernelError,
    assemble_L,
    composed_L,
    funk_dual,
    funk_forward,
    funk_is_d1area,
    funk_matrix,
    funk_operator,
    invert_L,
    kernel_diagonal,
    kernel_value,
    lie_derivative_can,
    right_inverse,
    round_funk_spectrum,
    tensor_funk,
    transverse_traceless_samples,
)
from zollsphere.sphere_core import (
    HarmonicField,
    chart_family,
    harmonic_basis,
    harmonic_count,
    make_direction_grid,
)


def _unit(a):
    a = np.asarray(a, dtype=float)
    return a / np.linalg.norm(a, axis=-1)[..., None]


def _random_field(n, L, seed, parity=None, amp=1.0):
    c = np.random.default_rng(seed).normal(size=harmonic_count(n, L))
    f = HarmonicField(n, L, amp * c / np.linalg.norm(c))
    if parity == "even":
        return f.even_part()
    if parity == "odd":
        return f.odd_part()
    return f


def _small_state(seed=0):
    rho = _random_field(2, 4, seed, amp=0.05)
    field = AnalyticGraphField.random(2, 3, 3, 0.05, np.random.default_rng(seed + 1))
    return rho, field


ZERO = HarmonicField.zeros(2, 2)


@pytest.fixture(scope="module")
def round_L():
    grid = make_direction_grid(2, 12)
    return grid, assemble_L(ZERO, zero_field(2), grid, Q=64)


def test_forward_round_examples():
    grid = make_direction_grid(2, 8)
    one = HarmonicField.from_function(2, 0, lambda p: np.ones(len(p)))
    assert_allclose(funk_forward(ZERO, zero_field(2), one, grid), 2 * math.pi, rtol=1e-13)
    odd = _random_field(2, 7, 1, "odd")
    assert np.max(np.abs(funk_forward(ZERO, zero_field(2), odd, grid))) < 1e-10
    sq = funk_forward(ZERO, zero_field(2), lambda p: p[..., 2] ** 2, grid)
    assert_allclose(sq, math.pi * (1 - grid.reps[:, 2] ** 2), atol=1e-12)


def test_forward_is_area_derivative():
    grid = make_direction_grid(2, 6)
    one = HarmonicField.from_function(2, 0, lambda p: np.ones(len(p)))
    assert funk_is_d1area(ZERO, zero_field(2), one, grid) < 1e-6
    assert funk_is_d1area(ZERO, zero_field(2), _random_field(2, 6, 2, "even"), grid) < 1e-6
    rho, field = _small_state(3)
    assert funk_is_d1area(rho, field, _random_field(2, 6, 4), grid) < 1e-5


def test_forward_rotation_equivariance():
    rng = np.random.default_rng(5)
    Rm, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    f = _random_field(2, 6, 6)
    fr = HarmonicField.from_function(2, 6, lambda p: f.evaluate(p @ Rm.T))
    vs = _unit(rng.normal(size=(8, 3)))
    a = funk_matrix(ZERO, zero_field(2), chart_family(vs, 40), 6) @ fr.coeffs
    b = funk_matrix(ZERO, zero_field(2), chart_family(vs @ Rm.T, 40), 6) @ f.coeffs
    assert_allclose(a, b, atol=1e-12)


def test_dual_round_examples():
    grid = make_direction_grid(2, 8)
    one = funk_dual(ZERO, zero_field(2), np.ones(grid.size), grid, L=8)
    pts = _unit(np.random.default_rng(7).normal(size=(10, 3)))
    assert_allclose(one.evaluate(pts), math.pi, rtol=1e-12)
    geo = funk_dual(ZERO, zero_field(2), lambda p: np.ones(p.shape[:-1]), grid, method="geometric", points=pts)
    assert_allclose(geo, math.pi, rtol=1e-10)
    # half the forward transform on even fields
    g = _random_field(2, 8, 8, "even")
    dual = funk_dual(ZERO, zero_field(2), g.evaluate(grid.reps), grid, L=8)
    fwd = funk_operator(ZERO, zero_field(2), grid, 40, 8) @ g.coeffs
    assert_allclose(dual.coeffs, 0.5 * fwd, atol=1e-8)


def test_duality_pairing():
    grid = make_direction_grid(2, 8)
    for rho, field in [(ZERO, zero_field(2)), _small_state(9)]:
        f = _random_field(2, 8, 10)
        g = _random_field(2, 8, 11, "even").evaluate(grid.reps)
        lhs = grid.weights @ (funk_forward(rho, field, f, grid) * g)
        rhs = f.coeffs @ funk_dual(rho, field, g, grid, L=8).coeffs
        assert_allclose(lhs, rhs, rtol=1e-8)


def test_dual_geometric_matches_adjoint():
    # the adjoint route is band-limited; at L_g = 24 its truncation is ~1e-6
    grid = make_direction_grid(2, 24)
    rho, field = _small_state(12)
    g = _random_field(2, 4, 13, "even")
    adj = funk_dual(rho, field, g.evaluate(grid.reps), grid, L=24)
    pts = _unit(np.random.default_rng(14).normal(size=(6, 3)))
    geo = funk_dual(rho, field, g, grid, method="geometric", points=pts)
    assert_allclose(geo, adj.evaluate(pts), rtol=1e-5, atol=1e-5 * np.max(np.abs(geo)))


def test_dual_unknown_method():
    grid = make_direction_grid(2, 4)
    with pytest.raises(ValueError):
        funk_dual(ZERO, zero_field(2), np.ones(grid.size), grid, method="spectral")


def test_kernel_round_values():
    rng = np.random.default_rng(15)
    s = _unit(rng.normal(size=(10, 3)))
    t = _unit(rng.normal(size=(10, 3)))
    d = np.arccos(np.abs(np.sum(s * t, axis=1)))
    assert_allclose(kernel_value(ZERO, zero_field(2), s, t), 2 / np.sin(d), rtol=1e-10)


def test_kernel_symmetric_and_diagonal_bounded():
    rho, field = _small_state(16)
    rng = np.random.default_rng(17)
    s = _unit(rng.normal(size=(8, 3)))
    t = _unit(rng.normal(size=(8, 3)))
    assert_allclose(kernel_value(rho, field, s, t), kernel_value(rho, field, t, s), rtol=1e-10)
    sigma = s[0]
    e = _unit(np.cross(sigma, [0.3, 0.1, 1.0]))
    ds = 0.2 / 2.0 ** np.arange(8)
    taus = np.cos(ds)[:, None] * sigma + np.sin(ds)[:, None] * e
    dk = ds * kernel_value(rho, field, sigma, taus)
    assert np.all(np.isfinite(dk))
    assert np.max(dk) < 1.5 * np.min(dk)
    k0 = kernel_diagonal(rho, field, sigma)
    assert abs(k0 - dk[-1]) < 0.05 * k0
    assert_allclose(kernel_diagonal(ZERO, zero_field(2), sigma), 2.0, rtol=1e-10)


def test_assemble_round_constant(round_L):
    grid, M = round_L
    assert_allclose(M.apply(np.ones(grid.size)), 2 * math.pi ** 2, rtol=1e-10)
    # the same constant from the spectrum
    lam = round_funk_spectrum(0)[0]
    assert_allclose(lam ** 2 / 2, 2 * math.pi ** 2, rtol=1e-14)


def test_assemble_round_spectrum(round_L):
    grid, M = round_L
    lam = round_funk_spectrum(12)
    basis = harmonic_basis(2, 12)
    Y = basis.values(grid.reps)
    for l in range(0, 13, 2):
        k = int(np.flatnonzero(basis.degrees == l)[0])
        out = M.apply(Y[:, k])
        assert_allclose(out, lam[l] ** 2 / 2 * Y[:, k], rtol=0, atol=1e-3 * abs(lam[l] ** 2 / 2) * np.max(np.abs(Y[:, k])))


def test_assemble_matches_composition(round_L):
    grid, M = round_L
    C = composed_L(ZERO, zero_field(2), grid, 64, 12)
    assert np.linalg.norm(M.matrix - C.matrix) / np.linalg.norm(M.matrix) < 1e-3


def test_assemble_self_adjoint_and_positive(round_L):
    grid, M = round_L
    f = _random_field(2, 12, 19, "even").evaluate(grid.reps)
    g = _random_field(2, 12, 20, "even").evaluate(grid.reps)
    assert_allclose(grid.weights @ (M.apply(f) * g), grid.weights @ (f * M.apply(g)), rtol=1e-8)
    off = ~np.eye(grid.size, dtype=bool)
    assert np.all(M.entries[off] > 0)
    # round entries depend only on the distance
    d = np.arccos(np.clip(np.abs(grid.reps @ grid.reps.T), 0, 1))
    assert_allclose(M.entries[off], 2 / np.sin(d[off]), rtol=1e-10)


def test_assemble_small_state_positive_and_workers():
    grid = make_direction_grid(2, 6)
    rho, field = _small_state(21)
    a = assemble_L(rho, field, grid, Q=32, chunk=97)
    b = assemble_L(rho, field, grid, Q=32, chunk=4096, workers=3)
    assert_allclose(a.matrix, b.matrix, rtol=0, atol=0)
    assert_allclose(a.entries, b.entries, rtol=0, atol=0)
    off = ~np.eye(grid.size, dtype=bool)
    assert np.all(a.entries[off] > 0)


def test_kernel_csv():
    M = KernelMatrix(None, np.array([[1.0, 0.5], [0.5, 2.0]]), np.eye(2))
    lines = M.to_csv().splitlines()
    assert lines[0] == "i,j,value"
    assert lines[2] == "0,1,0.5"
    assert len(lines) == 5


def test_invert_L(round_L):
    grid, M = round_L
    b = _random_field(2, 12, 22, "even").evaluate(grid.reps)
    u = invert_L(M, b)
    assert np.linalg.norm(M.apply(u) - b) <= 1e-9 * np.linalg.norm(b)
    C = composed_L(ZERO, zero_field(2), grid, 64, 12)
    uc = invert_L(C, b)
    assert np.linalg.norm(C.apply(uc) - b) <= 1e-9 * np.linalg.norm(b)
    with pytest.raises(SingularKernelError):
        invert_L(np.diag([1.0, 1e-12]), np.ones(2))


def test_right_inverse_round_degree_two():
    grid = make_direction_grid(2, 8)
    b = HarmonicField.from_function(2, 2, lambda p: 3 * p[:, 2] ** 2 - 1)
    f = right_inverse(ZERO, zero_field(2), b, grid, Q=40)
    assert_allclose(f.coeffs, b.coeffs / -math.pi, atol=1e-12)
    back = funk_operator(ZERO, zero_field(2), grid, 40, 2) @ f.coeffs
    assert_allclose(back, b.coeffs, atol=1e-8)
    zero = right_inverse(ZERO, zero_field(2), HarmonicField.zeros(2, 4), grid, Q=40)
    assert_allclose(zero.coeffs, 0.0)


def test_right_inverse_small_state():
    grid = make_direction_grid(2, 8)
    rho, field = _small_state(23)
    b = _random_field(2, 8, 24, "even")
    b = HarmonicField(2, 8, np.where(b.degrees == 0, 0.0, b.coeffs))
    f = right_inverse(rho, field, b, grid, Q=48)
    Fc = funk_operator(rho, field, grid, 48, 8)
    assert np.linalg.norm(Fc @ f.coeffs - b.coeffs) < 1e-6 * np.linalg.norm(b.coeffs)


def test_round_spectrum():
    lam = round_funk_spectrum(9)
    assert_allclose(lam[0], 2 * math.pi, rtol=1e-14)
    assert_allclose(lam[2], -math.pi, rtol=1e-13)
    assert_allclose([lam[l] for l in (1, 3, 5, 7, 9)], 0.0, atol=1e-10)
    # classical cross-check: 2 pi P_l(0)
    from scipy.special import eval_legendre
    for l in (4, 6, 8):
        assert_allclose(lam[l], 2 * math.pi * eval_legendre(l, 0.0), rtol=1e-12)


def test_tensor_funk_metric():
    rng = np.random.default_rng(25)
    for n in (2, 3):
        vs = _unit(rng.normal(size=(4, n + 1)))
        can = lambda p: np.eye(p.shape[-1]) - p[..., :, None] * p[..., None, :]
        omega = 2 * math.pi if n == 2 else 4 * math.pi
        assert_allclose(tensor_funk(can, vs, Q=16), (n - 1) * omega / 2, rtol=1e-12)


def test_tensor_funk_conformal_part():
    grid = make_direction_grid(2, 6)
    f = _random_field(2, 4, 26, "even")

    def h(p):
        P = np.eye(3) - p[..., :, None] * p[..., None, :]
        return f.evaluate(p)[..., None, None] * P

    assert_allclose(tensor_funk(h, grid.reps, Q=32), 0.5 * funk_forward(ZERO, zero_field(2), f, grid, Q=32), atol=1e-12)


def test_tensor_funk_kernel():
    rng = np.random.default_rng(27)
    for n in (2, 3):
        A = rng.normal(size=(n + 1, n + 1))
        c = rng.normal(size=n + 1)
        # a rotation field, a conformal field and their sum
        Z = lambda p, A=A, c=c: p @ (A - A.T).T + c - np.sum(c * p, axis=-1)[..., None] * p
        def DZ(p, A=A, c=c):
            I = np.eye(p.shape[-1])
            return np.broadcast_to(A - A.T, p.shape + (p.shape[-1],)) - (
                np.sum(c * p, axis=-1)[..., None, None] * I + p[..., :, None] * c[None, :])
        vs = _unit(rng.normal(size=(5, n + 1)))
        assert np.max(np.abs(tensor_funk(lie_derivative_can(Z, DZ), vs, Q=24))) < 1e-8
    vs = _unit(rng.normal(size=(5, 4)))
    for h in transverse_traceless_samples():
        assert np.max(np.abs(tensor_funk(h, vs, Q=24))) < 1e-8
