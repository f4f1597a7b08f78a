"""Piecewise-linear Galerkin finite elements on the unit interval.

Homogeneous Dirichlet conditions are imposed by dropping the two boundary
nodes, so a coefficient vector has ``n_cells - 1`` entries, one per interior
hat function.  The discrete Laplacian is carried as the pair (M, S) of mass
and stiffness matrices; the operator ``A_h`` acting on V_h is ``-M^{-1} S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

# Gauss-Legendre, 3 points, mapped to the reference cell [0, 1]
GAUSS_POINTS = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
GAUSS_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Mesh1D:
    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"need at least 2 cells, got {self.n_cells}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_dof(self) -> int:
        return self.n_cells - 1

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates."""
        return np.arange(1, self.n_cells) * self.h

    @property
    def quad_points(self) -> np.ndarray:
        """Gauss points, shape (n_cells, 3)."""
        left = np.arange(self.n_cells)[:, None] * self.h
        return left + self.h * GAUSS_POINTS[None, :]

    @property
    def quad_weights(self) -> np.ndarray:
        return self.h * GAUSS_WEIGHTS

    def is_refinement_of(self, coarse: "Mesh1D") -> bool:
        return self.n_cells % coarse.n_cells == 0


def interpolate_at_quad(mesh: Mesh1D, coef: np.ndarray) -> np.ndarray:
    """Values of the P1 function at the Gauss points.

    ``coef`` has shape (..., n_dof); the result has shape (..., n_cells, 3).
    """
    coef = np.asarray(coef, dtype=float)
    pad = [(0, 0)] * (coef.ndim - 1) + [(1, 1)]
    full = np.pad(coef, pad)
    left = full[..., :-1, None]
    right = full[..., 1:, None]
    return left * (1.0 - GAUSS_POINTS) + right * GAUSS_POINTS


def load_vector(mesh: Mesh1D, values: np.ndarray) -> np.ndarray:
    """``int f phi_i`` from Gauss-point values of ``f``, shape (..., n_cells, 3)."""
    values = np.asarray(values, dtype=float)
    wf = values * mesh.quad_weights
    from_left_cell = wf @ GAUSS_POINTS  # phi_i on cell i-1 rises as xi
    from_right_cell = wf @ (1.0 - GAUSS_POINTS)
    return from_left_cell[..., :-1] + from_right_cell[..., 1:]


@dataclass(frozen=True)
class FemOperators:
    mesh: Mesh1D
    mass_diag: np.ndarray = field(repr=False)
    mass_off: np.ndarray = field(repr=False)
    stiff_diag: np.ndarray = field(repr=False)
    stiff_off: np.ndarray = field(repr=False)

    @property
    def n_dof(self) -> int:
        return self.mesh.n_dof

    def mass_matvec(self, v: np.ndarray) -> np.ndarray:
        return _tridiag_matvec(self.mass_diag, self.mass_off, v)

    def stiff_matvec(self, v: np.ndarray) -> np.ndarray:
        return _tridiag_matvec(self.stiff_diag, self.stiff_off, v)

    def mass_dense(self) -> np.ndarray:
        return _dense(self.mass_diag, self.mass_off)

    def stiff_dense(self) -> np.ndarray:
        return _dense(self.stiff_diag, self.stiff_off)

    def mass_norm(self, v: np.ndarray) -> np.ndarray:
        """L2 norm of the P1 function(s); ``v`` has dofs on the last axis."""
        return np.sqrt(np.sum(v * self.mass_matvec(v), axis=-1))


def _tridiag_matvec(diag, off, v):
    v = np.asarray(v, dtype=float)
    out = diag * v
    out[..., :-1] += off * v[..., 1:]
    out[..., 1:] += off * v[..., :-1]
    return out


def _dense(diag, off):
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def assemble(mesh: Mesh1D) -> FemOperators:
    h = mesh.h
    n = mesh.n_dof
    arrays = (
        np.full(n, 2.0 * h / 3.0),
        np.full(n - 1, h / 6.0),
        np.full(n, 2.0 / h),
        np.full(n - 1, -1.0 / h),
    )
    for a in arrays:
        a.setflags(write=False)
    return FemOperators(mesh, *arrays)


def l2_project(ops: FemOperators, f) -> np.ndarray:
    """L2 projection of a pointwise-evaluable ``f`` onto V_h."""
    mesh = ops.mesh
    load = load_vector(mesh, f(mesh.quad_points))
    return linalg.solveh_banded(_banded(ops.mass_diag, ops.mass_off), load)


def _banded(diag, off):
    ab = np.zeros((2, len(diag)))
    ab[0, 1:] = off
    ab[1] = diag
    return ab


def generalized_eigs(ops: FemOperators, count: int):
    """Lowest ``count`` pairs of ``S phi = lambda M phi``, M-orthonormal.

    Returns ``(lambdas, phis)`` with ``phis[:, j]`` the j-th eigenvector.
    """
    n = ops.n_dof
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in 1..{n}, got {count}")
    try:
        lam, vec = linalg.eigh(
            ops.stiff_dense(), ops.mass_dense(), subset_by_index=[0, count - 1]
        )
    except linalg.LinAlgError as exc:
        raise EigenSolverError(f"generalized eigensolve failed: {exc}") from exc
    bad = np.nonzero(~np.isfinite(lam))[0]
    if bad.size:
        raise EigenSolverError(f"eigenvalue {bad[0]} did not converge")
    # fix the sign so the first nonzero entry is positive
    sign = np.sign(vec[np.argmax(np.abs(vec) > 1e-12, axis=0), np.arange(count)])
    return lam, vec * sign


def uniform_eigenvalue(h: float, j: int) -> float:
    """Closed-form j-th generalized eigenvalue on a uniform mesh."""
    c = math.cos(j * math.pi * h)
    return 6.0 / h**2 * (1.0 - c) / (2.0 + c)


class ShiftedSolver:
    """Cholesky factor of ``tau**(-alpha) M + S``, reusable across steps."""

    def __init__(self, ops: FemOperators, tau_alpha: float):
        if not tau_alpha > 0.0:
            raise ValueError(f"tau_alpha must be positive, got {tau_alpha}")
        self.ops = ops
        self.tau_alpha = tau_alpha
        shift = 1.0 / tau_alpha
        ab = _banded(shift * ops.mass_diag + ops.stiff_diag, shift * ops.mass_off + ops.stiff_off)
        self._factor = linalg.cholesky_banded(ab)

    def matvec(self, v):
        shift = 1.0 / self.tau_alpha
        return shift * self.ops.mass_matvec(v) + self.ops.stiff_matvec(v)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for ``rhs`` of shape (n_dof,) or (batch, n_dof)."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim == 1:
            return linalg.cho_solve_banded((self._factor, False), rhs)
        return linalg.cho_solve_banded((self._factor, False), rhs.T).T


def solve_shifted(ops: FemOperators, tau_alpha: float, rhs) -> np.ndarray:
    """Solve ``(tau**(-alpha) M + S) u = rhs``, i.e. apply the discrete resolvent."""
    return ShiftedSolver(ops, tau_alpha).solve(rhs)


def prolong(coef: np.ndarray, coarse: Mesh1D, fine: Mesh1D) -> np.ndarray:
    """Nodal values of a coarse P1 function on a nested finer mesh."""
    if not fine.is_refinement_of(coarse):
        raise ValueError(f"mesh with {fine.n_cells} cells does not refine {coarse.n_cells}")
    coef = np.asarray(coef, dtype=float)
    pad = [(0, 0)] * (coef.ndim - 1) + [(1, 1)]
    full = np.pad(coef, pad)
    coarse_x = np.arange(coarse.n_cells + 1) * coarse.h
    if coef.ndim == 1:
        return np.interp(fine.nodes, coarse_x, full)
    flat = full.reshape(-1, full.shape[-1])
    out = np.stack([np.interp(fine.nodes, coarse_x, row) for row in flat])
    return out.reshape(coef.shape[:-1] + (fine.n_dof,))


def l2_distance(mesh_a: Mesh1D, coef_a, mesh_b: Mesh1D, coef_b) -> np.ndarray:
    """Exact L2 distance between two P1 functions on nested uniform meshes."""
    if mesh_a.n_cells > mesh_b.n_cells:
        mesh_a, coef_a, mesh_b, coef_b = mesh_b, coef_b, mesh_a, coef_a
    if not mesh_b.is_refinement_of(mesh_a):
        raise ValueError(f"meshes with {mesh_a.n_cells} and {mesh_b.n_cells} cells are not nested")
    diff = np.asarray(coef_b, dtype=float) - prolong(coef_a, mesh_a, mesh_b)
    return assemble(mesh_b).mass_norm(diff)
