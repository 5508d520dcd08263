"""Deformation of the round metric through conformal metrics with a Zoll family.

A state is a pair (rho, Phi): a conformal factor e^{2 rho} and one graph
Phi_v over each equator of a direction grid. The map
Lambda = (Lambda_1, Lambda_2) collects the nonconstant part of the area
profile and the Euler-Lagrange density with its degree-1 modes removed; it
vanishes exactly when every graph is minimal and all areas agree.

The corrector x <- x - V(x) Lambda(x) uses the approximate right-inverse
V(b, psi) = (R(b) / (n-1), S(psi - D_1 H f)), where R is the right-inverse of
the Funk transform and S inverts the Jacobi operator off the degree-1 modes.
Truncation to the band limits after each step acts as the smoothing.

Representations
---------------
Lambda_1 and the rho-components are :class:`HarmonicField` objects of the
degree of rho; Lambda_2 and the Phi-components are :class:`GridGraphField` objects on the
charts of the direction grid, whose modes are weak-form coefficients.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .equator_graphs import EPS_GRAPH, GridGraphField, IntersectionError, intersect_graphs
from .funk_transform import right_inverse
from .sphere_core import (
    HarmonicField,
    chart_family,
    harmonic_basis,
    helmholtz_solve,
    make_direction_grid,
    sphere_area,
)
from .variational import (
    area,
    d1h_weak,
    el_operator,
    el_values,
    jacobi_assemble,
    solution_map,
)

__all__ = [
    "ConvergenceError",
    "AdmissibilityError",
    "ZollState",
    "round_state",
    "lambda_map",
    "approx_right_inverse",
    "quadratic_error",
    "kernel_seed",
    "corrector_step",
    "deform",
    "normalize_zprime",
    "isometry_breaking_seed",
    "verify_zoll",
    "trace_to_csv",
]

TRACE_FIELDS = ("iter", "lambda1_inf", "lambda2_inf", "area_mean", "area_spread")



class ConvergenceError(RuntimeError):
    """The corrector did not reach the tolerance within the iteration budget."""


class AdmissibilityError(RuntimeError):
    """The state left the neighbourhood where graphs are well defined."""


# ---------------------------------------------------------------------------
# State

@dataclass(frozen=True)
class ZollState:
    """A pair (rho, Phi) on a direction grid, with diagnostics.

    Attributes
    ----------
    rho : HarmonicField
        Conformal factor; its degree is ``state.L``.
    phi : GridGraphField
        Graph modes (zero_odd) on the charts of ``grid``.
    grid : DirectionGrid
    Q : int
        Chart quadrature size.
    iterations : int
        Corrector steps taken to reach this state.
    diagnostics : dict
        lambda1_inf, lambda2_inf, area_mean, area_spread; recomputed on
        construction.
    """

    rho: HarmonicField
    phi: GridGraphField
    grid: object
    Q: int
    iterations: int = 0
    diagnostics: dict = dc_field(default=None, compare=False)

    def __post_init__(self):
        if self.phi.subspace != "zero_odd":
            raise ValueError("Phi must lie in the zero_odd subspace")
        if not np.array_equal(self.phi.vs, self.grid.reps):
            raise ValueError("Phi must live on the representatives of the grid")
        object.__setattr__(self, "diagnostics", _diagnostics(self))

    @property
    def n(self):
        return self.grid.n

    @property
    def L(self):
        return self.rho.L

    @property
    def L_phi(self):
        return self.phi.L

    @property
    def fam(self):
        return chart_family(self.grid.reps, self.Q)

    def replace(self, rho=None, phi=None, iterations=None):
        """Copy with some fields replaced; diagnostics are recomputed."""
        return ZollState(self.rho if rho is None else rho,
                         self.phi if phi is None else phi,
                         self.grid, self.Q,
                         self.iterations if iterations is None else iterations)

    def to_json(self):
        return {
            "schema": "zollsphere.zoll_state/1",
            "n": self.n,
            "L": self.L,
            "L_g": self.grid.band_limit,
            "Q": self.Q,
            "L_phi": self.L_phi,
            "iterations": self.iterations,
            "rho": self.rho.to_json(),
            "phi": self.phi.to_json(grid_ref={"n": self.n, "L_g": self.grid.band_limit, "Q": self.Q}),
            "diagnostics": {k: float(v) for k, v in self.diagnostics.items()},
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        if data.get("schema") != "zollsphere.zoll_state/1":
            raise ValueError("not a zoll_state/1 document")
        for key in ("n", "L_g", "Q", "rho", "phi"):
            if key not in data:
                raise ValueError(f"zoll state JSON lacks field '{key}'")
        grid = make_direction_grid(int(data["n"]), int(data["L_g"]))
        fam = chart_family(grid.reps, int(data["Q"]))
        rho = HarmonicField.from_json(data["rho"])
        ph = data["phi"]
        modes = np.asarray(ph["per_rep_modes"], dtype=float)
        phi = GridGraphField(fam.vs, fam.frames, int(ph["L"]), modes, ph.get("subspace", "zero_odd"))
        return cls(rho, phi, grid, int(data["Q"]), int(data.get("iterations", 0)))


def round_state(n=2, L_g=12, Q=64, L_rho=None, L_phi=None):
    """The state (0, 0).

    Parameters
    ----------
    L_g : int
        Band limit of the direction grid.
    L_rho, L_phi : int, optional
        Degree of rho and band limit of the graph modes, both defaulting to
        ``L_g``. Products of band-limited fields reach the grid band in the
        area profile and in H, and only fields of that band can cancel them.
    """
    grid = make_direction_grid(n, L_g)
    fam = chart_family(grid.reps, Q)
    phi = GridGraphField.zeros(fam, L_g if L_phi is None else L_phi)
    return ZollState(HarmonicField.zeros(n, L_g if L_rho is None else L_rho), phi, grid, Q)


def _grid_mean(grid, values):
    return grid.integrate(values) / float(np.sum(grid.weights))


def _diagnostics(state):
    fam = state.fam
    prof = area(state.rho, state.phi, fam)
    lam1, lam2 = _lambda(state, fam, prof)
    return {
        "lambda1_inf": float(np.max(np.abs(lam1.evaluate(state.grid.reps)))),
        "lambda2_inf": _modes_sup(lam2.modes, fam, state.L_phi),
        "area_mean": _grid_mean(state.grid, prof),
        "area_spread": float(np.max(prof) - np.min(prof)),
    }


def _modes_sup(modes, fam, L):
    return float(np.max(np.abs(modes @ fam.basis_values(L).T)))


# ---------------------------------------------------------------------------
# Lambda, V and Q

def _centered_even(grid, values, L):
    b = grid.project_even(values, L)
    c = b.coeffs.copy()
    c[b.degrees == 0] = 0.0
    return HarmonicField(grid.n, L, c, "even")


def _lambda(state, fam, prof):
    lam1 = _centered_even(state.grid, prof, state.L)
    h = el_operator(state.rho, state.phi, fam, state.L_phi)
    h[:, state.phi.linear_modes_mask()] = 0.0
    return lam1, state.phi.like(h, "zero_odd")


def lambda_map(state):
    """Lambda(rho, Phi) = (A - mean, H - jC(H)).

    Returns
    -------
    lam1 : HarmonicField
        Even projection of the area profile to the degree of rho, with
        degree 0 removed.
    lam2 : GridGraphField
        Weak-form coefficients of H with the degree-1 modes removed.
    """
    fam = state.fam
    return _lambda(state, fam, area(state.rho, state.phi, fam))


def _psi_modes(psi, state):
    if psi is None:
        return np.zeros_like(state.phi.modes)
    m = psi.modes if isinstance(psi, GridGraphField) else np.asarray(psi, dtype=float)
    m = m.copy()
    m[:, state.phi.linear_modes_mask()] = 0.0
    return m


def approx_right_inverse(state, b, psi, J=None):
    """V(rho, Phi)(b, psi) = (R(b) / (n-1), S(psi - (D_1 H f - jC(D_1 H f)))).

    Parameters
    ----------
    b : HarmonicField
        Even field with zero mean, of degree at most that of rho.
    psi : GridGraphField or ndarray, shape (R, K)
        Modes of a zero_odd field.
    J : ndarray, optional
        Precomputed Jacobi matrices at the state.

    Returns
    -------
    f : HarmonicField
    phi : GridGraphField
    """
    n, L, Lp = state.n, state.L, state.L_phi
    fam = state.fam
    b = b.with_L(L)
    mean = b.coeffs[b.degrees == 0]
    if np.any(np.abs(mean) > 1e-12 * max(1.0, b.norm())):
        raise ValueError("b must have zero mean")
    if b.norm() == 0.0:
        f = HarmonicField.zeros(n, L)
    else:
        f = right_inverse(state.rho, state.phi, b, state.grid, state.Q, L) * (1.0 / (n - 1))
    d = d1h_weak(state.rho, state.phi, f, fam, Lp)
    d[:, state.phi.linear_modes_mask()] = 0.0
    rhs = _psi_modes(psi, state) - d
    if not np.any(rhs):
        return f, state.phi.like(np.zeros_like(rhs), "zero_odd")
    if J is None:
        J = jacobi_assemble(state.rho, state.phi, fam, Lp)
    modes = solution_map(state.rho, state.phi, rhs, fam, Lp, J=J)
    return f, state.phi.like(modes, "zero_odd")


def quadratic_error(state, lam_tilde, bpsi):
    """Q(rho, Phi){(b~, psi~), (b, psi)} = (integral of psi~ V_2(b, psi) - mean, 0).

    Parameters
    ----------
    lam_tilde, bpsi : tuple
        Pairs (HarmonicField, GridGraphField); only psi~ enters.

    Returns
    -------
    q1 : HarmonicField
        Even projection to the degree of rho, with degree 0 removed.
    q2 : GridGraphField
        Zero.
    """
    psi_t = _psi_modes(lam_tilde[1], state)
    _, phi = approx_right_inverse(state, bpsi[0], bpsi[1])
    vals = np.sum(psi_t * phi.modes, axis=1)
    q1 = _centered_even(state.grid, vals, state.L)
    return q1, state.phi.like(np.zeros_like(psi_t), "zero_odd")


# ---------------------------------------------------------------------------
# Kernel seeds and the isometry-breaking seed

def kernel_seed(f, fam, L, tol=1e-8):
    """Graph field phi with DLambda(0, 0)(f, phi) = 0.

    Solves Delta phi_v + (n-1) phi_v = (n-1) <grad f, v> on each equator, with
    the degree-1 modes set to zero.

    Parameters
    ----------
    f : HarmonicField
        Odd field plus an optional constant.
    fam : ChartFamily
    L : int
        Band limit of the graph modes.

    Raises
    ------
    ValueError
        If the right side has a degree-1 component above ``tol``; for odd
        f it is even on every equator, so this signals invalid input.
    """
    n = fam.n
    x = fam.nodes
    v = np.broadcast_to(fam.vs[:, None, :], x.shape)
    rhs = fam.project((n - 1) * np.sum(f.gradient(x) * v, axis=-1), L)
    deg = harmonic_basis(n - 1, L).degrees
    lin = deg == 1
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if np.any(np.abs(rhs[:, lin]) > tol * scale):
        raise ValueError("kernel seed right side has a degree-1 component")
    lam = (n - 1.0) - deg * (deg + n - 2.0)
    modes = np.where(lin, 0.0, rhs / np.where(lin, 1.0, lam))
    return GridGraphField(fam.vs, fam.frames, L, modes, "zero_odd")


def isometry_breaking_seed(r, tol=1e-10):
    """Odd solution f, orthogonal to degree 1, of Delta f + n f = -r / (2(n-1)).

    Raises
    ------
    ValueError
        If r is not odd or has a degree-1 component.
    """
    n = r.n
    c = r.coeffs
    scale = max(1.0, float(np.max(np.abs(c))))
    if np.any(np.abs(c[r.degrees % 2 == 0]) > tol * scale):
        raise ValueError("r must be odd")
    if np.any(np.abs(c[r.degrees == 1]) > tol * scale):
        raise ValueError("r has a degree-1 component (resonant)")
    g = HarmonicField(n, r.L, -c / (2.0 * (n - 1)), "odd")
    return helmholtz_solve(g, float(n), project_resonant=True)


# ---------------------------------------------------------------------------
# Corrector

def _check_admissible(state):
    if state.phi.sup_norm(state.Q) > EPS_GRAPH:
        raise AdmissibilityError("graph field left the admissible neighbourhood")


def corrector_step(state):
    """One step x <- x - V(x) Lambda(x), re-projected and re-centered."""
    lam1, lam2 = lambda_map(state)
    f, phi = approx_right_inverse(state, lam1, lam2)
    rho = (state.rho - f).with_L(state.L)
    new = state.replace(rho=rho, phi=(state.phi - phi).recentered(), iterations=state.iterations + 1)
    _check_admissible(new)
    return new


def _lambda_norm(state):
    return state.diagnostics["lambda1_inf"] + state.diagnostics["lambda2_inf"]


def _trace_row(state):
    d = state.diagnostics
    return {"iter": state.iterations, **{k: d[k] for k in TRACE_FIELDS[1:]}}


def deform(rho_dot, t, tol=1e-8, max_iter=20, L=8, L_g=12, Q=64, L_rho=None, L_phi=None,
           step=0.05, trace=None):
    """Conformal factor rho_t with a Zoll family, tangent to t * rho_dot.

    Starts from (t rho_dot, t kernel_seed(rho_dot)) and applies the corrector
    until ||Lambda_1|| + ||Lambda_2|| < tol. Targets with |t| > ``step`` are
    reached by continuation in steps of at most ``step``.

    Parameters
    ----------
    rho_dot : HarmonicField
        Odd field.
    L : int
        Band limit of the input; rho_dot must have degree <= L.
    L_g, Q, L_rho, L_phi : int
        As in :func:`round_state`.
    trace : list, optional
        Receives one dict per corrector iterate with keys
        iter, lambda1_inf, lambda2_inf, area_mean, area_spread.

    Raises
    ------
    ConvergenceError
        If a stage needs more than ``max_iter`` steps.
    AdmissibilityError
        If the graphs leave the admissible neighbourhood.
    """
    n = rho_dot.n
    if rho_dot.detected_parity() == "even" and rho_dot.norm() > 0:
        raise ValueError("rho_dot must be odd")
    high = rho_dot.coeffs[rho_dot.degrees > L]
    if high.size and np.max(np.abs(high)) > 1e-12 * max(1.0, rho_dot.norm()):
        raise ValueError(f"rho_dot has components above degree L={L}")
    state = round_state(n, L_g, Q, L_rho, L_phi)
    rho_dot = rho_dot.odd_part().with_L(state.L)
    if trace is not None:
        trace.append(_trace_row(state))
    if t == 0 or rho_dot.norm() == 0.0:
        return state
    seed = kernel_seed(rho_dot, state.fam, state.L_phi)
    stages = max(1, math.ceil(abs(t) / step - 1e-12))
    dt = t / stages
    for _ in range(stages):
        state = state.replace(rho=state.rho + rho_dot * dt, phi=state.phi + seed * dt)
        _check_admissible(state)
        if trace is not None:
            trace.append(_trace_row(state))
        steps = 0
        while _lambda_norm(state) >= tol:
            if steps == max_iter:
                raise ConvergenceError(
                    f"no convergence in {max_iter} corrector steps (|Lambda| = {_lambda_norm(state):.3e})")
            state = corrector_step(state)
            steps += 1
            if trace is not None:
                trace.append(_trace_row(state))
    return state


def trace_to_csv(trace):
    """CSV text of a corrector trace, floats written with repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for row in trace:
        w.writerow([row["iter"]] + [repr(float(row[k])) for k in TRACE_FIELDS[1:]])
    return buf.getvalue()


def normalize_zprime(state):
    """Add the constant to rho that makes the mean area that of S^{n-1}."""
    n = state.n
    mean = state.diagnostics["area_mean"]
    shift = math.log(sphere_area(n - 1) / mean) / (n - 1)
    basis = harmonic_basis(n, state.L)
    y0 = basis.values(np.eye(n + 1)[:1])[0]
    c = np.zeros(basis.size)
    c[basis.degrees == 0] = shift / y0[basis.degrees == 0]
    return state.replace(rho=state.rho + HarmonicField(n, state.L, c))


# ---------------------------------------------------------------------------
# Verification

def _resolve_graphs(rho, fam, L_phi, tol=1e-13, max_iter=12):
    """Per-equator Newton for H - jC(H) = 0, starting from Phi = 0."""
    phi = GridGraphField.zeros(fam, L_phi)
    lin = phi.linear_modes_mask()
    for it in range(max_iter):
        h = el_operator(rho, phi, fam, L_phi)
        h[:, lin] = 0.0
        if np.max(np.abs(h)) < tol:
            return phi, it
        step = solution_map(rho, phi, h, fam, L_phi)
        phi = (phi - phi.like(step, "zero_odd")).recentered()
    return phi, max_iter


def _state_residuals(rho, phi, grid, fam):
    H = el_values(rho, phi, fam)
    prof = area(rho, phi, fam)
    X = np.einsum("rq,q,rqa->ra", H, fam.weights, fam.nodes)
    return {
        "h_residual": float(np.max(np.abs(H))),
        "center_norm": float(np.max(np.linalg.norm(X, axis=-1))),
        "area_spread": float(np.max(prof) - np.min(prof)),
        "area_mean": _grid_mean(grid, prof),
    }


def _transversality(phi, grid, Q, samples, seed):
    rng = np.random.default_rng(seed)
    R = grid.size
    i = rng.integers(0, R, samples)
    j = (i + rng.integers(1, R, samples)) % R
    try:
        _, ns, nt = intersect_graphs(phi, grid.reps[i], grid.reps[j], Q=Q,
                                     rep_sigma=i, rep_tau=j, with_normals=True)
    except IntersectionError:
        return 0.0
    c = np.sum(ns * nt, axis=-1)
    return float(np.min(np.sqrt(np.clip(1.0 - c * c, 0.0, None))))


def verify_zoll(state, refine=2, samples=200, seed=0, threshold=1e-6):
    """Residual report for a state, with an independent check at finer resolution.

    The state's own residuals are evaluated with ``refine`` times more chart
    nodes. The independent check keeps only rho: on a direction grid with
    ``refine`` times the band limit it solves for each graph by Newton's
    method and reports the residuals of the result.

    Returns
    -------
    dict
        h_residual, center_norm, area_spread, area_mean for the state;
        ``recheck`` with the same keys plus newton_iterations;
        min_transversality over sampled pairs of graphs (the sine of the
        angle between their normals at the intersection points, zero if a
        pair fails to meet in exactly two points); gauss_injective; ok.
    """
    grid, Q = state.grid, state.Q
    fam = chart_family(grid.reps, refine * Q)
    own = _state_residuals(state.rho, state.phi, grid, fam)
    grid2 = make_direction_grid(state.n, refine * grid.band_limit)
    fam2 = chart_family(grid2.reps, refine * Q)
    phi2, its = _resolve_graphs(state.rho, fam2, refine * state.L_phi)
    rec = _state_residuals(state.rho, phi2, grid2, fam2)
    rec["newton_iterations"] = its
    report = dict(own)
    report["recheck"] = rec
    if state.n == 2:
        report["min_transversality"] = _transversality(state.phi, grid, Q, samples, seed)
        report["gauss_injective"] = bool(report["min_transversality"] > 1e-6)
    worst = max(own["h_residual"], own["area_spread"], rec["h_residual"], rec["area_spread"])
    report["ok"] = bool(worst < threshold and report.get("gauss_injective", True))
    return report
