"""Truncated Karhunen-Loeve Q-Wiener noise on the unit interval.

``W(t) = sum_j sqrt(q_j) e_j beta_j(t)`` with ``e_j(x) = sqrt(2) sin(j pi x)``.
Brownian increments are drawn once on the finest time grid and summed for
coarser grids.  Every increment is rounded to a multiple of ``2**-40``; with
that grid all partial sums of a path are exact in double precision, so
coarsening is associative and ``coarsen(coarsen(p, a), b) == coarsen(p, a*b)``
holds bit for bit.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import FemOperators, interpolate_at_quad, load_vector

INCREMENT_QUANTUM = 2.0**-40
GENERATOR_NAME = "numpy.random.PCG64"
PATH_MAGIC = b"QWPATH01"
# partial sums of quantized increments are exact below 2**53 quanta
_EXACT_SUM_BOUND = 2.0**53 * INCREMENT_QUANTUM
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def sample_seed(master_seed: int, sample_id: int) -> int:
    """Per-sample 64-bit seed: ``splitmix64(splitmix64(master) ^ sample_id)``."""
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (sample_id & _MASK64))


SEED_RULE = (
    "sample_seed = splitmix64(splitmix64(master_seed) XOR sample_id); "
    "stream = numpy.random.Generator(PCG64(sample_seed)).standard_normal((J, K_fine)) "
    "* sqrt(tau_fine), rounded to multiples of 2**-40"
)


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance eigenvalues ``q_j`` of the truncated noise.

    Either ``decay`` (``q_j = j**-decay`` for ``j <= n_modes``) or an explicit
    ``eigenvalues`` list.
    """

    n_modes: int = 64
    decay: float | None = 2.0
    eigenvalues: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.eigenvalues is not None:
            vals = tuple(float(v) for v in self.eigenvalues)
            object.__setattr__(self, "eigenvalues", vals)
            object.__setattr__(self, "n_modes", len(vals))
            if not vals or min(vals) <= 0.0:
                raise ValueError("covariance eigenvalues must be positive")
        else:
            if self.decay is None or self.decay <= 1.0:
                raise ValueError(f"decay must exceed 1 for a trace-class Q, got {self.decay}")
            if self.n_modes < 1:
                raise ValueError("n_modes must be positive")

    @property
    def q(self) -> np.ndarray:
        if self.eigenvalues is not None:
            return np.array(self.eigenvalues)
        return np.arange(1, self.n_modes + 1, dtype=float) ** (-self.decay)

    def trace_fraction(self) -> float | None:
        """Share of ``tr Q`` kept by the truncation (None for explicit lists)."""
        if self.eigenvalues is not None:
            return None
        from scipy.special import zeta

        return float(self.q.sum() / zeta(self.decay))

    def to_dict(self) -> dict:
        if self.eigenvalues is not None:
            return {"eigenvalues": list(self.eigenvalues)}
        return {"n_modes": self.n_modes, "decay": self.decay}


def eigenfunction(j, x):
    return math.sqrt(2.0) * np.sin(np.multiply.outer(j, np.pi * np.asarray(x)))


@dataclass(frozen=True)
class WienerPath:
    increments: np.ndarray = field(repr=False)  # (J, K_fine)
    tau_fine: float
    seed: int
    sample_id: int

    def __post_init__(self):
        self.increments.setflags(write=False)

    @property
    def n_modes(self) -> int:
        return self.increments.shape[0]

    @property
    def k_fine(self) -> int:
        return self.increments.shape[1]

    @property
    def T(self) -> float:
        return self.tau_fine * self.k_fine

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.increments).tobytes()).hexdigest()


def sample_path(spec: CovarianceSpec, k_fine: int, T: float, seed: int, sample_id: int) -> WienerPath:
    if k_fine < 1 or not T > 0.0:
        raise ValueError("need k_fine >= 1 and T > 0")
    tau = T / k_fine
    rng = np.random.Generator(np.random.PCG64(sample_seed(seed, sample_id)))
    z = rng.standard_normal((spec.n_modes, k_fine)) * math.sqrt(tau)
    inc = np.round(z / INCREMENT_QUANTUM) * INCREMENT_QUANTUM
    if np.abs(inc).sum(axis=1).max(initial=0.0) >= _EXACT_SUM_BOUND:
        raise ValueError("path too long for exact coarsening sums")
    return WienerPath(inc, tau, seed, sample_id)


def coarsen(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments along the last axis."""
    if isinstance(increments, WienerPath):
        increments = increments.increments
    k = increments.shape[-1]
    if factor < 1 or k % factor:
        raise ValueError(f"factor {factor} does not divide {k} fine steps")
    if factor == 1:
        return np.array(increments)
    shape = increments.shape[:-1] + (k // factor, factor)
    return increments.reshape(shape).sum(axis=-1)


def write_path(path: WienerPath, target) -> None:
    header = PATH_MAGIC + struct.pack("<QQd", path.n_modes, path.k_fine, path.T)
    data = np.ascontiguousarray(path.increments, dtype="<f8").tobytes()
    Path(target).write_bytes(header + data)


def read_path(source) -> tuple[np.ndarray, float]:
    raw = Path(source).read_bytes()
    if raw[:8] != PATH_MAGIC:
        raise ValueError("not a QWPATH01 file")
    n_modes, k_fine, T = struct.unpack("<QQd", raw[8:32])
    inc = np.frombuffer(raw[32:], dtype="<f8").reshape(n_modes, k_fine).copy()
    return inc, T


# --- noise coefficient catalog -------------------------------------------------

SIGMA_KINDS = ("zero", "constant", "linear", "sine")


@dataclass(frozen=True)
class SigmaSpec:
    """Pointwise noise coefficient ``sigma(u)``.

    ``zero``: 0; ``constant``: c; ``linear``: c*u; ``sine``: c*sin(u).
    All four are globally Lipschitz with linear growth.
    """

    kind: str = "zero"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in SIGMA_KINDS:
            raise ValueError(f"unknown sigma kind {self.kind!r}; expected one of {SIGMA_KINDS}")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "constant":
            return np.full_like(u, self.c)
        if self.kind == "linear":
            return self.c * u
        return self.c * np.sin(u)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.c == 0.0

    @property
    def is_additive(self) -> bool:
        return self.kind in ("zero", "constant")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c}


class NoiseAssembler:
    """Precomputed Gauss-point values of ``sqrt(q_j) e_j`` for one mesh."""

    def __init__(self, ops: FemOperators, spec: CovarianceSpec):
        self.ops = ops
        self.spec = spec
        mesh = ops.mesh
        modes = np.arange(1, spec.n_modes + 1)
        shape = eigenfunction(modes, mesh.quad_points)  # (J, n_cells, 3)
        self._basis = (np.sqrt(spec.q)[:, None] * shape.reshape(spec.n_modes, -1))

    def load(self, u_prev: np.ndarray, sigma: SigmaSpec, increments: np.ndarray) -> np.ndarray:
        """Load vector ``sum_j sqrt(q_j) dbeta_j (sigma(u_prev) e_j, phi_i)``.

        ``u_prev`` is (n_dof,) or (batch, n_dof); ``increments`` is (J,) or (batch, J).
        """
        increments = np.asarray(increments, dtype=float)
        if increments.shape[-1] != self.spec.n_modes:
            raise ValueError(f"expected {self.spec.n_modes} mode increments, got {increments.shape[-1]}")
        mesh = self.ops.mesh
        u_prev = np.asarray(u_prev, dtype=float)
        batch_shape = np.broadcast_shapes(u_prev.shape[:-1], increments.shape[:-1])
        if sigma.is_zero:
            return np.zeros(batch_shape + (mesh.n_dof,))
        dw = (increments @ self._basis).reshape(increments.shape[:-1] + (mesh.n_cells, 3))
        s = sigma(interpolate_at_quad(mesh, u_prev))
        return load_vector(mesh, s * dw)


def noise_load(ops: FemOperators, spec: CovarianceSpec, u_prev, sigma: SigmaSpec, increments_n) -> np.ndarray:
    return NoiseAssembler(ops, spec).load(u_prev, sigma, increments_n)
