import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from zollsphere.equator_graphs import AnalyticGraphField, GridGraphField, zero_field
from zollsphere.sphere_core import (
    ChartFamily,
    HarmonicField,
    _local_rule,
    chart_family,
    frame_for,
    harmonic_basis,
    harmonic_count,
    make_direction_grid,
)
from zollsphere.variational import (
    EvenOneForm,
    SingularOperatorError,
    alpha,
    area,
    area_profile,
    center_map,
    constraint_map,
    d1h,
    d1h_weak,
    el_operator,
    el_values,
    eta,
    eta_vector,
    j_embed,
    jacobi_assemble,
    solution_map,
    verify_constraint,
)


def _unit(a):
    a = np.asarray(a, dtype=float)
    return a / np.linalg.norm(a, axis=-1)[..., None]


def _family(n=2, R=3, Q=40, seed=0):
    vs = _unit(np.random.default_rng(seed).normal(size=(R, n + 1)))
    return chart_family(vs, Q)


def _rho(n, L, amp, seed):
    c = np.random.default_rng(seed).normal(size=harmonic_count(n, L))
    return HarmonicField(n, L, amp * c / np.linalg.norm(c))


def _graph(fam, L, amp, seed):
    m = np.random.default_rng(seed).normal(size=(fam.size, harmonic_count(fam.n - 1, L)))
    m *= amp / np.max(np.abs(m))
    return GridGraphField.from_family(fam, L, m)


def _constant(fam, c, L=4):
    m = np.zeros((fam.size, harmonic_count(fam.n - 1, L)))
    m[:, 0] = c * math.sqrt(2 * math.pi)
    return GridGraphField.from_family(fam, L, m)


def _mode_index(L, values_fn, fam):
    """Chart-basis coefficients of a function of the local coordinates."""
    return fam.project(values_fn(fam.local)[None].repeat(fam.size, 0), L)


def test_area_round_equator():
    fam = _family()
    assert_allclose(area(HarmonicField.zeros(2, 2), zero_field(2), fam), 2 * math.pi, rtol=1e-13)


def test_area_latitude():
    fam = _family()
    c = 0.3
    assert_allclose(area(HarmonicField.zeros(2, 2), _constant(fam, c), fam), 2 * math.pi * math.cos(c), rtol=1e-13)


def test_area_conformal_constant_n3():
    fam = _family(n=3, Q=12)
    kappa = 0.2
    rho = HarmonicField.from_function(3, 0, lambda p: np.full(len(p), kappa))
    assert_allclose(area(rho, zero_field(3), fam), math.exp(2 * kappa) * 4 * math.pi, rtol=1e-12)


def test_area_profile_round():
    grid = make_direction_grid(2, 6)
    prof = area_profile(HarmonicField.zeros(2, 2), zero_field(2), grid, 32)
    assert_allclose(prof.values, 2 * math.pi, rtol=1e-13)
    assert prof.spread < 1e-12


def test_el_operator_round_vanishes():
    fam = _family()
    assert_allclose(el_operator(HarmonicField.zeros(2, 2), zero_field(2), fam, 8), 0.0, atol=1e-14)


def test_el_operator_latitude():
    fam = _family()
    c = 0.2
    vals = el_values(HarmonicField.zeros(2, 2), _constant(fam, c), fam)
    assert_allclose(vals, -math.sin(c), atol=1e-12)


def test_el_operator_is_area_derivative():
    fam = _family(R=2, Q=48, seed=1)
    rho = _rho(2, 4, 0.2, 2)
    phi = _graph(fam, 6, 0.1, 3)
    dphi = _graph(fam, 6, 1.0, 4)
    h = el_operator(rho, phi, fam, 6)
    t = 1e-5
    fd = (area(rho, phi + t * dphi, fam) - area(rho, phi - t * dphi, fam)) / (2 * t)
    exact = np.sum(h * dphi.modes, axis=1)
    assert_allclose(fd, exact, rtol=1e-6)


def test_d1h_round_linear_function():
    fam = _family(R=4)
    x1 = HarmonicField.from_function(2, 1, lambda p: p[:, 0])
    out = d1h(HarmonicField.zeros(2, 2), zero_field(2), x1, fam, 6)
    vals = out @ fam.basis_values(6).T
    assert_allclose(vals, np.repeat(fam.vs[:, :1], vals.shape[1], axis=1), atol=1e-12)
    const = HarmonicField.from_function(2, 0, lambda p: np.ones(len(p)))
    assert_allclose(d1h(HarmonicField.zeros(2, 2), zero_field(2), const, fam, 6), 0.0, atol=1e-14)


def test_d1h_matches_finite_difference():
    fam = _family(R=2, Q=48, seed=5)
    rho = _rho(2, 4, 0.1, 6)
    phi = _graph(fam, 6, 0.1, 7)
    f = _rho(2, 3, 1.0, 8)
    t = 1e-5
    fd = (el_operator(rho + t * f, phi, fam, 6) - el_operator(rho - t * f, phi, fam, 6)) / (2 * t)
    weak = d1h_weak(rho, phi, f, fam, 6)
    scale = np.max(np.abs(weak))
    assert np.max(np.abs(fd - weak)) < 1e-6 * scale
    # closed form agrees with the weak form up to chart truncation
    strong = d1h(rho, phi, f, fam, 6)
    assert np.max(np.abs(strong - weak)) < 1e-6 * scale


def test_d1h_parity_and_center_at_round():
    v = _unit([0.3, 0.5, -0.8])
    F = frame_for(v)
    local, w = _local_rule(2, 40)
    fam = ChartFamily(np.array([v, -v]), np.array([F, F]), local, w, 40)
    zero = HarmonicField.zeros(2, 2)
    for f in [HarmonicField.from_function(2, 3, lambda p: p[:, 0] * p[:, 1] * p[:, 2] + p[:, 2]),
              HarmonicField.from_function(2, 0, lambda p: np.full(len(p), 2.0))]:
        vals = d1h(zero, zero_field(2), f, fam, 8) @ fam.basis_values(8).T
        assert_allclose(vals[1], -vals[0], atol=1e-12)
        assert center_map(vals, fam).norm_inf() < 1e-12


def test_jacobi_round_spectrum():
    for n, Q in [(2, 40), (3, 14)]:
        fam = _family(n=n, Q=Q)
        L = 4
        J = jacobi_assemble(HarmonicField.zeros(n, 2), zero_field(n), fam, L)
        deg = harmonic_basis(n - 1, L).degrees
        expect = np.diag(deg * (deg + n - 2.0) - (n - 1))
        for Jr in J:
            assert_allclose(Jr, expect, atol=1e-12)


def test_jacobi_cos2_mode():
    fam = _family()
    J = jacobi_assemble(HarmonicField.zeros(2, 2), zero_field(2), fam, 4)
    c = _mode_index(4, lambda p: p[:, 0] ** 2 - p[:, 1] ** 2, fam)
    assert_allclose(np.einsum("rkj,rj->rk", J, c), 3 * c, atol=1e-12)


def test_jacobi_symmetric_and_matches_finite_difference():
    fam = _family(R=2, Q=40, seed=9)
    rho = _rho(2, 4, 0.2, 10)
    phi = _graph(fam, 5, 0.1, 11)
    L = 5
    J = jacobi_assemble(rho, phi, fam, L)
    asym = np.linalg.norm(J - np.swapaxes(J, 1, 2), axis=(1, 2)) / np.linalg.norm(J, axis=(1, 2))
    assert np.all(asym < 1e-7)
    K = J.shape[1]
    fd = np.zeros_like(J)
    t = 1e-5
    for j in range(K):
        e = np.zeros((fam.size, K))
        e[:, j] = 1.0
        d = GridGraphField.from_family(fam, L, e)
        fd[:, :, j] = (el_operator(rho, phi + t * d, fam, L) - el_operator(rho, phi - t * d, fam, L)) / (2 * t)
    assert np.max(np.abs(fd - J)) < 1e-6 * np.max(np.abs(J))


def test_jacobi_antipodal_invariance():
    v = _unit([0.1, -0.7, 0.4])
    F = frame_for(v)
    local, w = _local_rule(2, 40)
    fam = ChartFamily(np.array([v, -v]), np.array([F, F]), local, w, 40)
    rho = _rho(2, 4, 0.2, 12)
    f = AnalyticGraphField.random(2, 3, 3, 0.1, np.random.default_rng(13))
    J = jacobi_assemble(rho, f, fam, 5)
    assert_allclose(J[1], J[0], atol=1e-12)


def test_second_variation_symmetry():
    fam = _family(R=2, seed=14)
    J = jacobi_assemble(_rho(2, 4, 0.2, 15), _graph(fam, 5, 0.1, 16), fam, 5)
    rng = np.random.default_rng(17)
    a, b = rng.normal(size=(2, fam.size, J.shape[1]))
    lhs = np.einsum("rk,rkj,rj->r", a, J, b)
    rhs = np.einsum("rk,rkj,rj->r", b, J, a)
    assert_allclose(lhs, rhs, rtol=1e-8)


def test_solution_map_round_examples():
    fam = _family()
    zero = HarmonicField.zeros(2, 2)
    c = _mode_index(4, lambda p: p[:, 0] ** 2 - p[:, 1] ** 2, fam)
    assert_allclose(solution_map(zero, zero_field(2), c, fam, 4), c / 3, atol=1e-12)
    one = _mode_index(4, lambda p: np.ones(len(p)), fam)
    assert_allclose(solution_map(zero, zero_field(2), one, fam, 4), -one, atol=1e-12)


def test_solution_map_round_trip():
    fam = _family(R=3, seed=18)
    rho = _rho(2, 4, 0.2, 19)
    phi = _graph(fam, 6, 0.1, 20)
    L = 6
    psi = np.random.default_rng(21).normal(size=(fam.size, harmonic_count(1, L)))
    lin = harmonic_basis(1, L).degrees == 1
    psi[:, lin] = 0.0
    out = solution_map(rho, phi, psi, fam, L)
    assert_allclose(out[:, lin], 0.0, atol=0)
    J = jacobi_assemble(rho, phi, fam, L)
    back = np.einsum("rkj,rj->rk", J, out)
    back[:, lin] = 0.0
    assert_allclose(back, psi, atol=1e-8)


def test_solution_map_singular():
    fam = _family(R=1)
    J = np.zeros((1, 9, 9))
    with pytest.raises(SingularOperatorError):
        solution_map(HarmonicField.zeros(2, 2), zero_field(2), np.ones((1, 9)), fam, 4, J=J)


def test_alpha_and_center_embedding():
    assert_allclose(alpha(2), 1 / math.pi, rtol=1e-15)
    fam = _family(R=5, seed=22)
    a = np.array([0.3, -1.0, 0.5])
    om = EvenOneForm(fam.vs, np.cross(fam.vs, a))
    back = center_map(j_embed(om, fam, 4) @ fam.basis_values(4).T, fam)
    assert_allclose(back.X, om.X, atol=1e-10)
    zero = EvenOneForm(fam.vs, np.zeros_like(fam.vs))
    assert_allclose(j_embed(zero, fam, 4), 0.0)
    assert_allclose(center_map(np.zeros((fam.size, len(fam.weights))), fam).X, 0.0)


def test_center_embedding_n3():
    fam = _family(n=3, R=3, Q=12, seed=23)
    X = np.random.default_rng(24).normal(size=(3, 4))
    om = EvenOneForm(fam.vs, X)
    back = center_map(j_embed(om, fam, 2) @ fam.basis_values(2).T, fam)
    assert_allclose(back.X, om.X, atol=1e-10)


def test_eta_zero_field():
    rng = np.random.default_rng(25)
    v = _unit(rng.normal(size=(6, 3)))
    x = _unit(np.cross(v, rng.normal(size=(6, 3))))
    u = np.cross(v, x)
    assert_allclose(eta(zero_field(2), x, v, u), -np.sum(x * u, axis=1), atol=1e-15)


def test_eta_linear_and_finite_difference():
    f = AnalyticGraphField.random(2, 3, 3, 0.2, np.random.default_rng(26))
    rng = np.random.default_rng(27)
    v = _unit(rng.normal(size=(6, 3)))
    x = _unit(np.cross(v, rng.normal(size=(6, 3))))
    u = _unit(np.cross(v, rng.normal(size=(6, 3))))
    w = _unit(np.cross(v, rng.normal(size=(6, 3))))
    a, b = 0.7, -1.3
    assert_allclose(eta(f, x, v, a * u + b * w), a * eta(f, x, v, u) + b * eta(f, x, v, w), atol=1e-12)
    assert_allclose(np.sum(eta_vector(f, x, v) * u, axis=1), eta(f, x, v, u), atol=1e-12)
    # D Phi along the curve with velocity (-<x,u> v, u)
    xu = np.sum(x * u, axis=1)

    def along(s):
        vs = np.cos(s) * v + np.sin(s) * u
        xs = _unit(x - np.sum(x * vs, axis=1)[:, None] * vs)
        return f.value(xs, vs)

    h = 1e-5
    fd = (along(h) - along(-h)) / (2 * h)
    assert_allclose(f.derivative(x, v, -xu[:, None] * v, u), fd, atol=1e-7)


def test_constraint_reduces_to_center_at_zero():
    fam = _family(R=4, seed=28)
    vals = np.random.default_rng(29).normal(size=(fam.size, len(fam.weights)))
    K = constraint_map(zero_field(2), vals, fam)
    assert_allclose(K.X, -center_map(vals, fam).X, atol=1e-12)


def test_verify_constraint():
    grid = make_direction_grid(2, 8)
    res, dA = verify_constraint(HarmonicField.zeros(2, 2), zero_field(2), grid, 40)
    assert res < 1e-12 and dA < 1e-12
    rho = _rho(2, 2, 0.05, 30)
    f = AnalyticGraphField.random(2, 2, 1, 0.05, np.random.default_rng(31))
    res, dA = verify_constraint(rho, f, grid, 48)
    assert res <= 1e-6 * (1 + dA)
