"""Grunwald-type (GMMP) weights for the Caputo derivative of order alpha in (0, 1).

The Caputo derivative at ``t_n = n * tau`` is approximated by

    tau**(-alpha) * (sum_{k=0}^{n} omega_k * u(t_{n-k}) - b_n * u(t_0))

with ``omega_k = (-1)**k * binom(alpha, k)`` and ``b_n = omega_0 + ... + omega_n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .special_functions import DomainError


@dataclass(frozen=True)
class GmmpWeights:
    alpha: float
    omega: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.omega.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def n_max(self) -> int:
        return len(self.omega) - 1


def _omega_recurrence(alpha, n_max):
    omega = np.empty(n_max + 1)
    omega[0] = 1.0
    for k in range(1, n_max + 1):
        omega[k] = omega[k - 1] * ((k - 1 - alpha) / k)
    return omega


def _compensated_prefix_sums(values):
    # Neumaier summation, so b_n stays accurate after heavy cancellation
    out = np.empty_like(values)
    total = 0.0
    comp = 0.0
    for i, v in enumerate(values.tolist()):
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[i] = total + comp
    return out


def weights_unchecked(alpha: float, n_max: int) -> GmmpWeights:
    """Build weights without the ``alpha in (0, 1)`` guard.

    Used for the alpha -> 1 degeneration, where ``omega = [1, -1, 0, ...]``.
    """
    omega = _omega_recurrence(alpha, n_max)
    return GmmpWeights(alpha=float(alpha), omega=omega, b=_compensated_prefix_sums(omega))


def make_weights(alpha: float, n_max: int) -> GmmpWeights:
    """GMMP weights ``omega_0..omega_{n_max}`` and partial sums ``b_0..b_{n_max}``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    return weights_unchecked(alpha, int(n_max))


def caputo_apply(w: GmmpWeights, samples, tau: float) -> float:
    """GMMP approximation of the Caputo derivative at the last sample time.

    ``samples`` holds ``u(t_0), ..., u(t_n)`` on the uniform grid of step ``tau``.
    """
    u = np.asarray(samples, dtype=float)
    n = len(u) - 1
    if n < 0 or n > w.n_max:
        raise ValueError(f"need 1..{w.n_max + 1} samples, got {len(u)}")
    if not tau > 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    # differenced form: exact zero for constant samples
    return float(np.dot(w.omega[: n + 1], u[::-1] - u[0]) * tau ** (-w.alpha))
