"""Round Funk eigenvalues against the assembled kernel operator on S^2.

Run with ``python demos/round_funk_spectrum.py``.
"""
import numpy as np

from zollsphere.equator_graphs import zero_field
from zollsphere.funk_transform import assemble_L, round_funk_spectrum
from zollsphere.sphere_core import HarmonicField, harmonic_basis, make_direction_grid


def main(L_g=12):
    lam = round_funk_spectrum(L_g)
    grid = make_direction_grid(2, L_g)
    M = assemble_L(HarmonicField.zeros(2, 2), zero_field(2), grid, Q=64)
    basis = harmonic_basis(2, L_g)
    Y = basis.values(grid.reps)
    w = grid.weights
    print(" l   lambda_l      lambda_l^2/2   kernel Rayleigh quotient")
    for l in range(0, L_g + 1, 2):
        k = int(np.flatnonzero(basis.degrees == l)[0])
        y = Y[:, k]
        q = (w @ (M.apply(y) * y)) / (w @ (y * y))
        print(f"{l:2d}  {lam[l]: .6e}  {lam[l] ** 2 / 2: .6e}  {q: .6e}")


if __name__ == "__main__":
    main()
