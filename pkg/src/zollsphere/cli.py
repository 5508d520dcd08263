"""Command-line interface.

Subcommands
-----------
deform    run the corrector from a seed and write trace CSV, state and report
verify    residual report for a saved state
funk      Funk transform of a harmonic field at the grid representatives
kernel    kernel table and operator summary of F F* for n = 2
killing   metric from a diagonal Killing tensor on S^3, residuals and rigidity
spectrum  eigenvalues of the round Funk transform on S^2

Exit codes are 0 (success), 1 (numerical failure) and 2 (usage or input
error). JSON outputs carry a ``schema`` field; floats are written with repr
so outputs are byte-identical for identical inputs.
"""

import argparse
import json
import math
import os
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

from .equator_graphs import GaussInverseError, IntersectionError, zero_field
from .funk_transform import SingularKernelError, assemble_L, funk_forward, round_funk_spectrum
from .killing_metrics import (
    DefinitenessError,
    can_tensor,
    diag_tensor,
    equator_mean_curvature,
    equator_residual,
    metric_from_killing,
    rigidity_kernel,
)
from .sphere_core import HarmonicField, make_direction_grid
from .variational import SingularOperatorError
from .zoll_solver import (
    AdmissibilityError,
    ConvergenceError,
    ZollState,
    deform,
    normalize_zprime,
    trace_to_csv,
    verify_zoll,
)

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2

NUMERICAL_ERRORS = (ConvergenceError, AdmissibilityError, SingularKernelError, SingularOperatorError,
                    IntersectionError, GaussInverseError, DefinitenessError, np.linalg.LinAlgError)

PRESETS = {
    "guillemin-xyz": "x1 x2 x3",
}

KILLING_PRESETS = {
    "eqdiagonal": ((1.1, 1.05, 1.02), (0.05, 0.03, 0.01)),
}


class UsageError(Exception):
    """Invalid configuration or malformed input file."""


# ---------------------------------------------------------------------------
# Configuration

@dataclass
class RunConfig:
    """Flat configuration of a deformation run."""

    n: int = 2
    L: int = 8
    L_g: int = 12
    Q: int = 64
    t: float = 0.05
    tol: float = 1e-8
    max_iter: int = 20
    preset: str = "guillemin-xyz"
    rho_dot: str = None
    trace: str = "trace.csv"
    state: str = "state.json"
    report: str = "report.json"

    def validate(self):
        _require(self.n in (2, 3), "n must be 2 or 3")
        _require(_is_int(self.L) and self.L >= 1, "L must be a positive integer")
        _require(_is_int(self.L_g) and self.L_g >= max(4, self.L), "L_g must be an integer >= max(4, L)")
        _require(_is_int(self.Q) and self.Q >= 4 * self.L_g + 2, "Q must be an integer >= 4 L_g + 2")
        _require(_is_real(self.t) and abs(self.t) <= 0.5, "t must be a real number with |t| <= 0.5")
        _require(_is_real(self.tol) and 0 < self.tol < 1, "tol must lie in (0, 1)")
        _require(_is_int(self.max_iter) and self.max_iter >= 1, "max_iter must be a positive integer")
        if self.rho_dot is None:
            _require(self.preset in PRESETS, f"unknown preset {self.preset!r}")
            _require(self.L >= 3, f"preset {self.preset!r} needs L >= 3")
        return self


def _require(cond, msg):
    if not cond:
        raise UsageError(msg)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _is_real(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _load_json(path, what):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read {what}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _load_config(path):
    data = _load_json(path, "config")
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a flat JSON object")
    fields = RunConfig.__dataclass_fields__
    for key, val in data.items():
        if key == "schema":
            continue
        if key not in fields:
            raise UsageError(f"{path}: unknown config field '{key}'")
        if isinstance(val, (dict, list)):
            raise UsageError(f"{path}: field '{key}' must be a scalar")
    return RunConfig(**{k: v for k, v in data.items() if k != "schema"})


def _load_field(path):
    data = _load_json(path, "harmonic field")
    try:
        return HarmonicField.from_json(data)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_state(path):
    data = _load_json(path, "state")
    try:
        return ZollState.from_json(data)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _preset_field(name, n, L):
    if name == "guillemin-xyz":
        return HarmonicField.from_function(n, 3, lambda p: p[..., 0] * p[..., 1] * p[..., 2], "odd").with_L(L)
    raise UsageError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# Output

def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _report_json(report):
    return {"schema": "zollsphere.verify_report/1", **report}


# ---------------------------------------------------------------------------
# Commands

def cmd_deform(args):
    cfg = _load_config(args.config) if args.config else RunConfig()
    for key in ("n", "L", "L_g", "Q", "t", "tol", "max_iter", "preset", "rho_dot", "trace", "state", "report"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    cfg.validate()
    if cfg.rho_dot is not None:
        rho_dot = _load_field(cfg.rho_dot)
        _require(rho_dot.n == cfg.n, f"{cfg.rho_dot}: field dimension {rho_dot.n} does not match n={cfg.n}")
        _require(rho_dot.L <= cfg.L, f"{cfg.rho_dot}: field degree {rho_dot.L} exceeds L={cfg.L}")
        _require(rho_dot.detected_parity() in ("odd",) or rho_dot.norm() == 0,
                 f"{cfg.rho_dot}: field 'coeffs' must describe an odd function")
    else:
        rho_dot = _preset_field(cfg.preset, cfg.n, cfg.L)
    trace = []
    try:
        state = deform(rho_dot, cfg.t, tol=cfg.tol, max_iter=cfg.max_iter, L=cfg.L, L_g=cfg.L_g, Q=cfg.Q,
                       trace=trace)
    finally:
        _write(cfg.trace, trace_to_csv(trace))
    state = normalize_zprime(state)
    report = verify_zoll(state, threshold=10 * cfg.tol)
    _write(cfg.state, _dumps({**state.to_json(), "config": asdict(cfg)}))
    _write(cfg.report, _dumps(_report_json(report)))
    if not report["ok"]:
        print(f"deform: verification failed (h_residual={report['h_residual']:.3e}, "
              f"area_spread={report['area_spread']:.3e})", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_verify(args):
    state = _load_state(args.state)
    report = verify_zoll(state, threshold=args.threshold)
    _write(args.out, _dumps(_report_json(report)))
    return EXIT_OK if report["ok"] else EXIT_NUMERICAL


def cmd_funk(args):
    f = _load_field(args.field)
    if args.state:
        state = _load_state(args.state)
        rho, field, grid, Q = state.rho, state.phi, state.grid, state.Q
        _require(f.n == state.n, f"{args.field}: field dimension does not match the state")
    else:
        _require(args.L_g >= 4, "L_g must be >= 4")
        grid = make_direction_grid(f.n, args.L_g)
        rho, field, Q = HarmonicField.zeros(f.n, 0), zero_field(f.n), args.Q
    vals = funk_forward(rho, field, f, grid, Q)
    lines = ["i," + ",".join(f"x{k}" for k in range(1, f.n + 2)) + ",value"]
    for i, (p, v) in enumerate(zip(grid.reps, vals)):
        lines.append(",".join([str(i)] + [repr(float(c)) for c in p] + [repr(float(v))]))
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_kernel(args):
    _require(args.L_g >= 4, "L_g must be >= 4")
    _require(args.Q >= 16, "Q must be >= 16")
    grid = make_direction_grid(2, args.L_g)
    rho = _load_field(args.rho) if args.rho else HarmonicField.zeros(2, 0)
    _require(rho.n == 2, "kernel assembly is implemented for n = 2")
    M = assemble_L(rho, zero_field(2), grid, Q=args.Q, workers=args.threads)
    ones = M.apply(np.ones(grid.size))
    summary = {
        "schema": "zollsphere.kernel_summary/1",
        "n": 2,
        "L_g": args.L_g,
        "Q": args.Q,
        "size": grid.size,
        "L_one_mean": float(np.mean(ones)),
        "L_one_spread": float(np.max(ones) - np.min(ones)),
        "diag_k": [float(x) for x in M.diag_k],
    }
    if args.entries:
        _write(args.entries, M.to_csv())
    _write(args.out, _dumps(summary))
    return EXIT_OK


def cmd_killing(args):
    if args.alpha is not None or args.beta is not None:
        _require(args.alpha is not None and args.beta is not None, "--alpha and --beta go together")
        alpha, beta = tuple(args.alpha), tuple(args.beta)
        name = "custom"
    else:
        _require(args.preset in KILLING_PRESETS or args.preset == "round", f"unknown preset {args.preset!r}")
        name = args.preset
        alpha, beta = KILLING_PRESETS.get(name, ((1.0, 1.0, 1.0), (0.0, 0.0, 0.0)))
    try:
        k = can_tensor() if name == "round" else diag_tensor(alpha, beta)
    except DefinitenessError:
        raise
    except ValueError as exc:
        # ordering of the weights is an input error, not a numerical one
        raise UsageError(str(exc)) from None
    g = metric_from_killing(k)
    rng = np.random.default_rng(args.seed)
    vs = rng.normal(size=(args.equators, 4))
    vs /= np.linalg.norm(vs, axis=1)[:, None]
    H = equator_mean_curvature(g, vs)
    if name == "round":
        dim, smin = rigidity_kernel(weights=np.r_[np.ones(3), np.zeros(3)])
    else:
        dim, smin = rigidity_kernel(k)
    out = {
        "schema": "zollsphere.killing_report/1",
        "preset": name,
        "alpha": [float(a) for a in alpha],
        "beta": [float(b) for b in beta],
        "equator_residual": equator_residual(g, seed=args.seed),
        "mean_curvature_max": float(np.max(np.abs(H))),
        "rigidity_kernel_dim": dim,
        "rigidity_smin": smin,
    }
    _write(args.out, _dumps(out))
    return EXIT_OK


def cmd_spectrum(args):
    _require(args.L >= 0, "L must be non-negative")
    lam = round_funk_spectrum(args.L)
    out = {
        "schema": "zollsphere.funk_spectrum/1",
        "n": 2,
        "L": args.L,
        "eigenvalues": [[l, lam[l]] for l in range(args.L + 1)],
    }
    _write(args.out, _dumps(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="zollsphere", description="Zoll families of minimal hypersurfaces on spheres.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for kernel assembly; results do not depend on it")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("deform", help="deform the round metric along an odd seed")
    d.add_argument("--config", help="flat JSON file with RunConfig fields")
    d.add_argument("--n", type=int)
    d.add_argument("--L", type=int, help="band limit of the seed (default 8)")
    d.add_argument("--L-g", dest="L_g", type=int, help="direction grid band (default 12)")
    d.add_argument("--Q", type=int, help="chart nodes per equator (default 64)")
    d.add_argument("--t", type=float, help="deformation parameter (default 0.05)")
    d.add_argument("--tol", type=float, help="corrector tolerance on |Lambda| (default 1e-8)")
    d.add_argument("--max-iter", dest="max_iter", type=int, help="corrector steps per stage (default 20)")
    d.add_argument("--preset", help="seed preset: " + ", ".join(PRESETS))
    d.add_argument("--rho-dot", dest="rho_dot", help="harmonic field JSON for the seed")
    d.add_argument("--trace", help="iteration CSV path (default trace.csv)")
    d.add_argument("--state", help="final state JSON path (default state.json)")
    d.add_argument("--report", help="verification JSON path (default report.json)")
    d.set_defaults(func=cmd_deform)

    v = sub.add_parser("verify", help="residual report for a saved state")
    v.add_argument("state", help="state JSON written by deform")
    v.add_argument("--threshold", type=float, default=1e-6)
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("funk", help="Funk transform of a harmonic field")
    f.add_argument("field", help="harmonic field JSON")
    f.add_argument("--state", help="state JSON; the round metric if omitted")
    f.add_argument("--L-g", dest="L_g", type=int, default=12)
    f.add_argument("--Q", type=int, default=64)
    f.add_argument("--out", default="-")
    f.set_defaults(func=cmd_funk)

    k = sub.add_parser("kernel", help="kernel of F F* on S^2 for a conformal factor")
    k.add_argument("--rho", help="harmonic field JSON for rho (default 0)")
    k.add_argument("--L-g", dest="L_g", type=int, default=12)
    k.add_argument("--Q", type=int, default=64)
    k.add_argument("--entries", help="CSV path for the kernel table")
    k.add_argument("--out", default="-")
    k.set_defaults(func=cmd_kernel)

    m = sub.add_parser("killing", help="metric from a diagonal Killing tensor on S^3")
    m.add_argument("--preset", default="eqdiagonal", help="eqdiagonal or round")
    m.add_argument("--alpha", type=float, nargs=3)
    m.add_argument("--beta", type=float, nargs=3)
    m.add_argument("--equators", type=int, default=4)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", default="-")
    m.set_defaults(func=cmd_killing)

    s = sub.add_parser("spectrum", help="round Funk eigenvalues up to degree L")
    s.add_argument("L", type=int)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_spectrum)
    return p


@contextmanager
def _single_threaded_blas():
    # BLAS reductions split by thread count change the last bits of results,
    # so BLAS runs on one thread and --threads sizes the worker pools instead
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=1, user_api="blas"):
        yield


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
        with _single_threaded_blas():
            return args.func(args)
    except UsageError as exc:
        print(f"zollsphere: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"zollsphere: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
