"""Reference solutions in the sine eigenbasis of the Dirichlet Laplacian.

Mode ``j`` of the mild solution evolves with ``lambda_j = (j pi)**2``:

* initial data is damped by ``E_{alpha,1}(-lambda_j t**alpha)``;
* noise enters through the kernel ``r**(alpha-1) E_{alpha,alpha}(-lambda_j r**alpha)``.

Both are the eigenvalue images of the subordinated solution operators, so
the Wright-type densities never have to be evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fem import Mesh1D
from .noise import CovarianceSpec, WienerPath
from .special_functions import mittag_leffler

_ERROR_QUAD_POINTS = 8


@dataclass(frozen=True)
class SpectralField:
    """``sum_j coef_j sqrt(2) sin(j pi x)``; ``coefs`` may carry a leading batch axis."""

    modes: tuple[int, ...]
    coefs: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        modes = tuple(int(j) for j in self.modes)
        if len(set(modes)) != len(modes) or min(modes, default=1) < 1:
            raise ValueError("mode indices must be distinct and positive")
        coefs = np.asarray(self.coefs, dtype=float)
        if coefs.shape[-1] != len(modes):
            raise ValueError("one coefficient per mode is required")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coefs", coefs)

    @classmethod
    def from_dict(cls, coef: dict[int, float], alpha: float = 1.0) -> "SpectralField":
        modes = tuple(sorted(coef))
        return cls(modes, np.array([coef[j] for j in modes]), alpha)

    @property
    def eigenvalues(self) -> np.ndarray:
        return (np.pi * np.array(self.modes, dtype=float)) ** 2

    def __call__(self, x):
        basis = math.sqrt(2.0) * np.sin(np.multiply.outer(np.pi * np.asarray(x), self.modes))
        return basis @ self.coefs.T if self.coefs.ndim > 1 else basis @ self.coefs

    def __add__(self, other: "SpectralField") -> "SpectralField":
        modes = tuple(sorted(set(self.modes) | set(other.modes)))
        index = {j: i for i, j in enumerate(modes)}
        batch = np.broadcast_shapes(self.coefs.shape[:-1], other.coefs.shape[:-1])
        out = np.zeros(batch + (len(modes),))
        for f in (self, other):
            out[..., [index[j] for j in f.modes]] += f.coefs
        return SpectralField(modes, out, self.alpha)

    def l2_norm(self) -> np.ndarray:
        # the basis is orthonormal
        return np.sqrt(np.sum(self.coefs**2, axis=-1))


def exact_deterministic(alpha: float, u0: SpectralField, t: float) -> SpectralField:
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    damp = mittag_leffler(alpha, 1.0, -u0.eigenvalues * t**alpha)
    return SpectralField(u0.modes, u0.coefs * damp, alpha)


@lru_cache(maxsize=32)
def _kernel_table(alpha: float, n_modes: int, tau: float, n_steps: int) -> np.ndarray:
    # row j-1, column i-1: kernel at lag r = i * tau, i = 1..n_steps
    lam = (np.pi * np.arange(1, n_modes + 1, dtype=float)) ** 2
    r = tau * np.arange(1, n_steps + 1, dtype=float)
    ra = r**alpha
    table = r ** (alpha - 1.0) * mittag_leffler(alpha, alpha, -np.outer(lam, ra))
    table.setflags(write=False)
    return table


def additive_convolution(alpha: float, g: SpectralField, path, t: float,
                         covariance: CovarianceSpec, tau: float | None = None) -> SpectralField:
    """Stochastic convolution for ``sigma`` acting as ``g_j`` on mode ``j``.

    Left-point Riemann-Stieltjes sum on the fine grid of ``path``: the fine
    increment over ``[s_m, s_m + tau]`` is weighted by the kernel at lag
    ``t - s_m``, which never vanishes.  ``path`` is a WienerPath or raw
    increments (J, K) / (batch, J, K) together with ``tau``.
    """
    if isinstance(path, WienerPath):
        inc, tau = path.increments, path.tau_fine
    else:
        inc = np.asarray(path, dtype=float)
        if tau is None:
            raise ValueError("tau is required with raw increments")
    n = t / tau
    n_steps = int(round(n))
    if not math.isclose(n, n_steps, rel_tol=0.0, abs_tol=1e-9) or not 0 <= n_steps <= inc.shape[-1]:
        raise ValueError(f"t={t} is not a point of the fine grid")
    n_modes = inc.shape[-2]
    gj = np.zeros(n_modes)
    for i, j in enumerate(g.modes):
        if j <= n_modes:
            gj[j - 1] = g.coefs[i]
    if n_steps == 0 or not gj.any():
        return SpectralField(tuple(range(1, n_modes + 1)), np.zeros(inc.shape[:-2] + (n_modes,)), alpha)
    kernel = _kernel_table(float(alpha), n_modes, float(tau), n_steps)
    # increment m pairs with lag (n_steps - m) * tau
    weighted = np.einsum("ji,...ji->...j", kernel[:, ::-1], inc[..., :n_steps])
    amp = np.sqrt(covariance.q[:n_modes]) * gj
    return SpectralField(tuple(range(1, n_modes + 1)), weighted * amp, alpha)


def l2_error(mesh: Mesh1D, coef: np.ndarray, field: SpectralField) -> np.ndarray:
    """L2 distance between a P1 function and a spectral field.

    Gauss-Legendre with 8 points per cell; batch axes of ``coef`` and
    ``field.coefs`` broadcast.
    """
    xg, wg = np.polynomial.legendre.leggauss(_ERROR_QUAD_POINTS)
    xi = 0.5 * (xg + 1.0)
    x = (np.arange(mesh.n_cells)[:, None] + xi[None, :]) * mesh.h
    coef = np.asarray(coef, dtype=float)
    pad = [(0, 0)] * (coef.ndim - 1) + [(1, 1)]
    full = np.pad(coef, pad)
    uh = full[..., :-1, None] * (1.0 - xi) + full[..., 1:, None] * xi
    basis = math.sqrt(2.0) * np.sin(np.pi * x[..., None] * np.array(field.modes))
    exact = np.einsum("cqj,...j->...cq", basis, field.coefs)
    sq = (uh - exact) ** 2 @ (0.5 * mesh.h * wg)
    return np.sqrt(sq.sum(axis=-1))


def gmmp_modal(alpha: float, u0: SpectralField, T: float, k_steps: int) -> SpectralField:
    """Exact-in-space, GMMP-in-time solution for ``sigma = 0``.

    Each sine mode is an eigenfunction of the continuous Laplacian, so the
    scalar recursion with ``lambda_j = (j pi)**2`` isolates the time
    discretization; the difference to a P1 run at the same step measures the
    spatial error alone.
    """
    from .gmmp import make_weights

    w = make_weights(alpha, k_steps)
    tau_a = (T / k_steps) ** (-alpha)
    lam = u0.eigenvalues
    y = np.empty((k_steps + 1, len(lam)))
    y[0] = u0.coefs
    for n in range(k_steps):
        hist = w.omega[n + 1 : 0 : -1] @ y[: n + 1]
        y[n + 1] = tau_a * (w.b[n + 1] * y[0] - hist) / (tau_a + lam)
    return SpectralField(u0.modes, y[-1], alpha)
