"""Fully discrete GMMP / P1-Galerkin scheme.

One step solves

    (tau**-alpha M + S) u^{n+1}
        = tau**-alpha M (b_{n+1} u^0 - sum_{k=1}^{n+1} omega_k u^{n+1-k})
          + (1/tau) N(u^n, dbeta^{n+1})

where ``N`` is the stochastic load with ``sigma`` frozen at the left point.
This is the Caputo discretization moved to one side: the resolvent form of
the same update also carries the ``tau**-alpha`` factor on the history sum.

All arrays may carry a leading batch axis, so a block of Monte Carlo
samples advances through one matrix product per step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fem import FemOperators, Mesh1D, ShiftedSolver, assemble, l2_distance, l2_project
from .gmmp import GmmpWeights, make_weights
from .noise import CovarianceSpec, NoiseAssembler, SigmaSpec, WienerPath, coarsen

U0_KINDS = ("sine", "bump", "nodal")


@dataclass(frozen=True)
class InitialCondition:
    """Closed catalog of initial data.

    * ``sine``: ``sum_j coef_j sqrt(2) sin(j pi x)`` from ``modes = ((j, coef), ...)``;
      ``scale_sqrt2=False`` drops the ``sqrt(2)`` so ``((1, 1.0),)`` is ``sin(pi x)``.
    * ``bump``: ``amplitude * (4 x (1 - x))**power``.
    * ``nodal``: interior nodal values, only valid on a mesh with matching size.
    """

    kind: str = "sine"
    modes: tuple = ((1, 1.0),)
    scale_sqrt2: bool = False
    amplitude: float = 1.0
    power: float = 1.0
    values: tuple | None = None

    def __post_init__(self):
        if self.kind not in U0_KINDS:
            raise ValueError(f"unknown initial condition {self.kind!r}; expected one of {U0_KINDS}")
        object.__setattr__(self, "modes", tuple((int(j), float(c)) for j, c in self.modes))
        if self.values is not None:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.kind == "nodal" and self.values is None:
            raise ValueError("nodal initial condition needs values")

    def basis_coefficients(self) -> dict[int, float]:
        """Coefficients against ``sqrt(2) sin(j pi x)`` (sine kind only)."""
        if self.kind != "sine":
            raise ValueError("only sine initial data has a finite spectral expansion")
        scale = 1.0 if self.scale_sqrt2 else 1.0 / math.sqrt(2.0)
        out: dict[int, float] = {}
        for j, c in self.modes:
            out[j] = out.get(j, 0.0) + c * scale
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sine":
            coef = self.basis_coefficients()
            return sum(c * math.sqrt(2.0) * np.sin(j * np.pi * x) for j, c in coef.items())
        if self.kind == "bump":
            return self.amplitude * (4.0 * x * (1.0 - x)) ** self.power
        raise ValueError("nodal data is not pointwise evaluable")

    def project(self, ops: FemOperators) -> np.ndarray:
        if self.kind == "nodal":
            if len(self.values) != ops.n_dof:
                raise ValueError(f"{len(self.values)} nodal values for a mesh with {ops.n_dof} dofs")
            return np.array(self.values)
        return l2_project(ops, self)

    def to_dict(self) -> dict:
        if self.kind == "sine":
            return {"kind": "sine", "modes": [list(m) for m in self.modes], "scale_sqrt2": self.scale_sqrt2}
        if self.kind == "bump":
            return {"kind": "bump", "amplitude": self.amplitude, "power": self.power}
        return {"kind": "nodal", "values": list(self.values)}


@dataclass(frozen=True)
class SchemeConfig:
    alpha: float
    T: float
    k_steps: int
    n_cells: int
    covariance: CovarianceSpec = field(default_factory=CovarianceSpec)
    sigma: SigmaSpec = field(default_factory=SigmaSpec)
    u0: InitialCondition = field(default_factory=InitialCondition)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.T > 0.0 or self.k_steps < 1:
            raise ValueError("need T > 0 and k_steps >= 1")

    @property
    def tau(self) -> float:
        return self.T / self.k_steps

    @property
    def mesh(self) -> Mesh1D:
        return Mesh1D(self.n_cells)

    def replace(self, **changes) -> "SchemeConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "T": self.T,
            "k_steps": self.k_steps,
            "n_cells": self.n_cells,
            "covariance": self.covariance.to_dict(),
            "sigma": self.sigma.to_dict(),
            "u0": self.u0.to_dict(),
        }


class SchemeState:
    """Step counter plus the full solution history ``u^0..u^n``.

    ``history`` has shape (n+1, n_dof) or, for a batch, (n+1, batch, n_dof).
    """

    def __init__(self, u0, weights: GmmpWeights, ops: FemOperators, tau: float,
                 covariance: CovarianceSpec, sigma: SigmaSpec):
        u0 = np.asarray(u0, dtype=float)
        self.weights = weights
        self.operators = ops
        self.tau = tau
        self.sigma = sigma
        self.step_index = 0
        self._shape = u0.shape
        self._hist = np.empty((weights.n_max + 1, u0.size))
        self._hist[0] = u0.ravel()
        self._solver = ShiftedSolver(ops, tau**weights.alpha)
        self._noise = NoiseAssembler(ops, covariance)

    @property
    def history(self) -> np.ndarray:
        return self._hist[: self.step_index + 1].reshape((-1,) + self._shape)

    @property
    def current(self) -> np.ndarray:
        return self._hist[self.step_index].reshape(self._shape)


def init(config: SchemeConfig, batch: int | None = None) -> SchemeState:
    ops = assemble(config.mesh)
    u0 = config.u0.project(ops)
    if batch is not None:
        u0 = np.broadcast_to(u0, (batch, ops.n_dof))
    weights = make_weights(config.alpha, config.k_steps)
    return SchemeState(u0, weights, ops, config.tau, config.covariance, config.sigma)


def step(state: SchemeState, increments) -> SchemeState:
    """Advance one step with the per-mode increments of this step.

    ``increments`` is (J,) or (batch, J); it must already be on the step grid.
    """
    n = state.step_index
    w = state.weights
    if n + 1 > w.n_max:
        raise IndexError(f"history full: {w.n_max} steps already taken")
    ops = state.operators
    hist = state._hist
    # sum_{k=1}^{n+1} omega_k u^{n+1-k}  ==  omega[n+1:0:-1] @ u^{0..n}
    conv = w.omega[n + 1 : 0 : -1] @ hist[: n + 1]
    memory = (w.b[n + 1] * hist[0] - conv).reshape(state._shape)
    rhs = ops.mass_matvec(memory) / state._solver.tau_alpha
    if not state.sigma.is_zero:
        rhs = rhs + state._noise.load(state.current, state.sigma, increments) / state.tau
    if not np.all(np.isfinite(rhs)):
        raise FloatingPointError(f"non-finite right-hand side at step {n + 1}")
    hist[n + 1] = state._solver.solve(rhs).ravel()
    state.step_index = n + 1
    return state


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (K+1, n_dof) or (K+1, batch, n_dof)
    mesh: Mesh1D

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def write_csv(self, target, stride: int = 1) -> None:
        if self.values.ndim != 2:
            raise ValueError("only single-sample trajectories can be written")
        rows = list(range(0, len(self.times), stride))
        if rows[-1] != len(self.times) - 1:
            rows.append(len(self.times) - 1)
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"x_{i}" for i in range(1, self.mesh.n_dof + 1)])
            for r in rows:
                writer.writerow([_fmt(self.times[r])] + [_fmt(v) for v in self.values[r]])


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _step_increments(config: SchemeConfig, increments) -> np.ndarray | None:
    """Coarsen fine increments (J, K_fine) or (batch, J, K_fine) to the step grid."""
    if config.sigma.is_zero:
        return None
    if isinstance(increments, WienerPath):
        if not math.isclose(increments.T, config.T, rel_tol=1e-12):
            raise ValueError(f"path horizon {increments.T} differs from T={config.T}")
        increments = increments.increments
    if increments is None:
        raise ValueError("a noise path is required when sigma is nonzero")
    increments = np.asarray(increments)
    if increments.shape[-2] != config.covariance.n_modes:
        raise ValueError(f"path has {increments.shape[-2]} modes, covariance has {config.covariance.n_modes}")
    k_fine = increments.shape[-1]
    if k_fine % config.k_steps:
        raise ValueError(f"{config.k_steps} steps do not divide the {k_fine}-step noise grid")
    return coarsen(increments, k_fine // config.k_steps)


def run(config: SchemeConfig, path=None) -> Trajectory:
    """Run all K steps; ``path`` is a WienerPath or raw increments (optionally batched)."""
    inc = _step_increments(config, path)
    batch = inc.shape[0] if inc is not None and inc.ndim == 3 else None
    state = init(config, batch)
    for n in range(config.k_steps):
        step(state, None if inc is None else inc[..., n])
    times = np.arange(config.k_steps + 1) * config.tau
    return Trajectory(times, state.history.copy(), config.mesh)


def strong_error_at_T(traj_a: Trajectory, traj_b) -> np.ndarray:
    """L2(0,1) distance between final fields at ``T``.

    ``traj_b`` is another trajectory on a nested mesh (exact P1 integration)
    or a spectral reference field evaluated at ``T``.
    """
    from .oracle import SpectralField, l2_error

    if isinstance(traj_b, SpectralField):
        return l2_error(traj_a.mesh, traj_a.final, traj_b)
    if not math.isclose(traj_a.T, traj_b.T, rel_tol=1e-12):
        raise ValueError(f"trajectories end at different times ({traj_a.T}, {traj_b.T})")
    return l2_distance(traj_a.mesh, traj_a.final, traj_b.mesh, traj_b.final)
