# ---
# Continuum versus lattice
#
# A smooth periodic conductivity can be homogenised two ways: as bond
# conductances on the lattice, or as a piecewise-constant coefficient on
# the continuum torus discretised with bilinear finite elements.  The two
# tensors approach each other as the grid is refined.
# ---
import numpy as np

from perihom.homogenize import edge_to_cell, sigma_primal_continuous, sigma_primal_discrete
from perihom.lattice import TorusGrid, VectorField
from perihom.media import IIDUniform, Seed, sample_matrix_field


def smooth_edges(N):
    x = np.arange(N) / N
    X, Y = np.meshgrid(x, x, indexing="ij")
    h = 0.5 / N  # edges are sampled at their midpoints
    return VectorField(TorusGrid(2, N), np.stack([
        1.5 + 0.8 * np.sin(2 * np.pi * (X + h)) * np.cos(2 * np.pi * Y),
        1.5 + 0.8 * np.sin(2 * np.pi * (Y + h)) * np.cos(2 * np.pi * X),
    ]))


print(f"{'N':>4} {'lattice sigma_11':>17} {'FEM sigma_11':>13} {'rel. gap':>9}")
for N in (8, 16, 32, 64):
    xi = smooth_edges(N)
    lat, _ = sigma_primal_discrete(xi)
    fem, _ = sigma_primal_continuous(edge_to_cell(xi))
    gap = np.abs(lat.sigma - fem.sigma).max() / np.abs(lat.sigma).max()
    print(f"{N:>4} {lat.sigma[0, 0]:>17.6f} {fem.sigma[0, 0]:>13.6f} {gap:>9.2e}")

# Full symmetric matrices with random eigenframes only make sense on the
# continuum side; the tensor picks up off-diagonal entries per realisation.
A = sample_matrix_field(IIDUniform(0.25, 4.0), Seed(5), TorusGrid(2, 32), "symmetric", rotate=True)
t, _ = sigma_primal_continuous(A)
print("\nrotated random medium:\n", t.sigma)
print("eigenvalues of sigma:", t.sym_eigenvalues())
print("arithmetic mean of A:\n", A.mean())
