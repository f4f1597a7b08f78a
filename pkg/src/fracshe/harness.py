"""Convergence studies, Monte Carlo strong errors and run manifests.

A study runs one scheme on a ladder of resolutions (mesh cells or time
steps) and compares each level at ``t = T`` with a reference:

``oracle``   the exact spectral solution (sigma zero or constant, sine u0);
``modal``    the exact-in-space GMMP solution (sigma zero, sine u0), which
             isolates the spatial error at a fixed step;
``overkill`` a finer run of the same scheme on the same noise path.

Every level of a Monte Carlo study consumes coarsenings of one fine path per
sample, and samples are reduced in ``sample_id`` order, so results do not
depend on the number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .fem import Mesh1D, l2_distance
from .noise import (
    GENERATOR_NAME,
    SEED_RULE,
    CovarianceSpec,
    SigmaSpec,
    coarsen,
    sample_path,
)
from .oracle import SpectralField, additive_convolution, exact_deterministic, gmmp_modal, l2_error
from .stepper import InitialCondition, SchemeConfig, run

KINDS = ("validate-deterministic", "converge-space", "converge-time", "mc-strong", "solve")
AXES = ("h", "tau")
REFERENCES = ("oracle", "modal", "overkill")
RESULTS_HEADER = ("level", "resolution", "error", "stderr")


class ConfigError(ValueError):
    pass


# --- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    scheme: SchemeConfig
    ladder: tuple[float, ...] = ()
    axis: str = "h"
    reference: str = "oracle"
    reference_level: float | None = None
    n_samples: int = 1
    master_seed: int = 0
    expected_rate: float | None = None
    batch_size: int = 25
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.reference not in REFERENCES:
            raise ConfigError(f"reference must be one of {REFERENCES}, got {self.reference!r}")
        if self.n_samples < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigError("n_samples, batch_size and workers must be positive")
        object.__setattr__(self, "ladder", tuple(float(x) for x in self.ladder))
        if self.kind != "solve":
            counts = self.ladder_counts()
            if any(b <= a for a, b in zip(counts, counts[1:])):
                raise ConfigError("ladder must be strictly refining")
            if any(b % a for a, b in zip(counts, counts[1:])):
                raise ConfigError("ladder grids must be nested")
            if self.reference == "overkill":
                ref = self.reference_count()
                if ref is None:
                    raise ConfigError("overkill reference needs reference_level")
                if counts and (ref <= counts[-1] or ref % counts[-1]):
                    raise ConfigError("overkill reference must be a nested refinement of the finest level")

    def _count(self, res: float) -> int:
        if res >= 1.0:
            raise ConfigError(f"resolution {res} must be below 1")
        total = 1.0 if self.axis == "h" else self.scheme.T
        n = total / res
        count = int(round(n))
        if count < 1 or not math.isclose(n, count, rel_tol=1e-9):
            raise ConfigError(f"resolution {res} does not divide {total}")
        return count

    def ladder_counts(self) -> list[int]:
        return [self._count(r) for r in self.ladder]

    def reference_count(self) -> int | None:
        return None if self.reference_level is None else self._count(self.reference_level)

    def level_config(self, count: int) -> SchemeConfig:
        if self.axis == "h":
            return self.scheme.replace(n_cells=count)
        return self.scheme.replace(k_steps=count)

    def noise_steps(self) -> int:
        counts = [self.scheme.k_steps]
        if self.axis == "tau":
            counts += self.ladder_counts()
            if self.reference == "overkill":
                counts.append(self.reference_count())
        return max(counts)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "scheme": self.scheme.to_dict(),
            "ladder": list(self.ladder),
            "axis": self.axis,
            "reference": self.reference,
            "reference_level": self.reference_level,
            "n_samples": self.n_samples,
            "master_seed": self.master_seed,
            "expected_rate": self.expected_rate,
            "batch_size": self.batch_size,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            data = dict(data)
            data["scheme"] = scheme_from_dict(data["scheme"])
            if "ladder" in data:
                data["ladder"] = tuple(data["ladder"])
            return cls(**data)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc


def scheme_from_dict(data: dict) -> SchemeConfig:
    data = dict(data)
    cov = data.pop("covariance", {})
    if "eigenvalues" in cov:
        cov = {"eigenvalues": tuple(cov["eigenvalues"])}
    u0 = dict(data.pop("u0", {}))
    if "modes" in u0:
        u0["modes"] = tuple(tuple(m) for m in u0["modes"])
    if "values" in u0:
        u0["values"] = tuple(u0["values"])
    return SchemeConfig(
        covariance=CovarianceSpec(**cov),
        sigma=SigmaSpec(**data.pop("sigma", {})),
        u0=InitialCondition(**u0),
        **data,
    )


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(data)


# --- results ---------------------------------------------------------------------


@dataclass(frozen=True)
class Level:
    resolution: float
    error: float
    stderr: float = 0.0


@dataclass
class RateReport:
    levels: list[Level]
    fitted_slope: float
    slope_stderr: float
    max_errors: list[float] | None = None
    coupling_digest: str | None = None
    extra: dict = field(default_factory=dict)

    def write_csv(self, target) -> None:
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RESULTS_HEADER)
            for i, lv in enumerate(self.levels):
                writer.writerow([i, _fmt(lv.resolution), _fmt(lv.error), _fmt(lv.stderr)])

    def summary(self) -> dict:
        out = {
            "fitted_slope": self.fitted_slope,
            "slope_stderr": self.slope_stderr,
            "levels": [[lv.resolution, lv.error, lv.stderr] for lv in self.levels],
        }
        if self.max_errors is not None:
            out["max_errors"] = self.max_errors
        if self.coupling_digest is not None:
            out["coupling_digest"] = self.coupling_digest
        out.update(self.extra)
        return out


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def fit_rate(levels) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(resolution), with its standard error."""
    pts = [(float(r), float(e)) for r, e in levels]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 levels for a rate fit, got {len(pts)}")
    if any(r <= 0.0 or e <= 0.0 for r, e in pts):
        raise ValueError("resolutions and errors must be positive")
    x = np.log([r for r, _ in pts])
    y = np.log([e for _, e in pts])
    if len(set(x.tolist())) != len(x):
        raise ValueError("repeated resolutions in ladder")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    dof = len(x) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    return slope, stderr


def _report(resolutions, errors, stderrs, **kw) -> RateReport:
    levels = [Level(float(r), float(e), float(s)) for r, e, s in zip(resolutions, errors, stderrs)]
    if len(levels) >= 3 and all(lv.error > 0.0 for lv in levels):
        slope, slope_se = fit_rate([(lv.resolution, lv.error) for lv in levels])
    else:
        slope, slope_se = math.nan, math.nan
    return RateReport(levels, slope, slope_se, **kw)


# --- references ------------------------------------------------------------------


def _spectral_u0(u0: InitialCondition, alpha: float) -> SpectralField:
    if u0.kind != "sine":
        raise ConfigError("spectral references need a sine initial condition")
    return SpectralField.from_dict(u0.basis_coefficients(), alpha)


def _constant_g(sigma: SigmaSpec, n_modes: int) -> SpectralField:
    coef = sigma.c if sigma.kind == "constant" else 0.0
    return SpectralField(tuple(range(1, n_modes + 1)), np.full(n_modes, coef))


def _oracle_field(config: ExperimentConfig, inc=None, tau_fine=None) -> SpectralField:
    scheme = config.scheme
    if not scheme.sigma.is_additive:
        raise ConfigError("the spectral oracle covers only zero or constant sigma")
    field = exact_deterministic(scheme.alpha, _spectral_u0(scheme.u0, scheme.alpha), scheme.T)
    if inc is not None and not scheme.sigma.is_zero:
        g = _constant_g(scheme.sigma, scheme.covariance.n_modes)
        field = field + additive_convolution(scheme.alpha, g, inc, scheme.T, scheme.covariance, tau=tau_fine)
    return field


def _level_resolution(config: ExperimentConfig, count: int) -> float:
    return 1.0 / count if config.axis == "h" else config.scheme.T / count


# --- deterministic studies -------------------------------------------------------


def validate_deterministic(config: ExperimentConfig) -> tuple[RateReport, list[float]]:
    """sigma = 0 study against the spectral (or modal, or overkill) reference.

    Returns the report and the per-level maximum nodal error.
    """
    scheme = config.scheme
    if not scheme.sigma.is_zero:
        raise ConfigError("validate-deterministic requires sigma = zero")
    counts = config.ladder_counts()
    ref_traj = None
    if config.reference == "overkill":
        ref_traj = run(config.level_config(config.reference_count()))
    errors, max_errors = [], []
    for count in counts:
        cfg = config.level_config(count)
        traj = run(cfg)
        if ref_traj is not None:
            errors.append(float(l2_distance(cfg.mesh, traj.final, ref_traj.mesh, ref_traj.final)))
            ref_nodes = np.interp(cfg.mesh.nodes, np.r_[0.0, ref_traj.mesh.nodes, 1.0],
                                  np.r_[0.0, ref_traj.final, 0.0])
        else:
            u0 = _spectral_u0(scheme.u0, scheme.alpha)
            if config.reference == "modal":
                ref = gmmp_modal(scheme.alpha, u0, scheme.T, cfg.k_steps)
            else:
                ref = exact_deterministic(scheme.alpha, u0, scheme.T)
            errors.append(float(l2_error(cfg.mesh, traj.final, ref)))
            ref_nodes = ref(cfg.mesh.nodes)
        max_errors.append(float(np.max(np.abs(traj.final - ref_nodes))))
    report = _report([_level_resolution(config, c) for c in counts], errors, [0.0] * len(counts),
                     max_errors=max_errors)
    return report, max_errors


# --- Monte Carlo -----------------------------------------------------------------


def _digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def _mc_chunk(payload) -> dict:
    """Errors for samples ``start..stop-1``; runs in a worker process."""
    config = ExperimentConfig.from_dict(payload["config"])
    start, stop = payload["start"], payload["stop"]
    scheme = config.scheme
    k_fine = config.noise_steps()
    ids = list(range(start, stop))
    inc = np.stack([
        sample_path(scheme.covariance, k_fine, scheme.T, config.master_seed, sid).increments
        for sid in ids
    ])
    counts = config.ladder_counts()
    k_min = min(config.level_config(c).k_steps for c in counts)

    if config.reference == "overkill":
        ref_cfg = config.level_config(config.reference_count())
        ref_traj = run(ref_cfg, coarsen(inc, k_fine // ref_cfg.k_steps))
        ref_field = None
    else:
        ref_field = _oracle_field(config, inc, scheme.T / k_fine)

    errors, digests = [], []
    for count in counts:
        cfg = config.level_config(count)
        level_inc = coarsen(inc, k_fine // cfg.k_steps)
        traj = run(cfg, level_inc)
        if ref_field is not None:
            err = l2_error(cfg.mesh, traj.final, ref_field)
        else:
            err = l2_distance(cfg.mesh, traj.final, ref_traj.mesh, ref_traj.final)
        errors.append(np.asarray(err).tolist())
        common = coarsen(level_inc, cfg.k_steps // k_min)
        digests.append([_digest(common[i]) for i in range(len(ids))])
    return {"start": start, "errors": errors, "digests": digests}


def _rms_with_stderr(samples: np.ndarray) -> tuple[float, float]:
    sq = samples**2
    mean_sq = float(sq.mean())
    rms = math.sqrt(mean_sq)
    if len(samples) < 2:
        return rms, math.nan
    se_mean = float(sq.std(ddof=1)) / math.sqrt(len(samples))
    return rms, (se_mean / (2.0 * rms) if rms > 0.0 else 0.0)


def mc_strong(config: ExperimentConfig, workers: int | None = None) -> RateReport:
    """Root-mean-square error at T per level over ``n_samples`` coupled paths."""
    scheme = config.scheme
    counts = config.ladder_counts()
    resolutions = [_level_resolution(config, c) for c in counts]
    if config.reference == "modal":
        raise ConfigError("the modal reference is deterministic; use oracle or overkill")
    if config.reference == "oracle" and not scheme.sigma.is_additive:
        raise ConfigError("multiplicative sigma has no spectral reference; use overkill")
    if scheme.sigma.is_zero:
        det = ExperimentConfig.from_dict({**config.to_dict(), "kind": "validate-deterministic"})
        report, _ = validate_deterministic(det)
        report.extra["n_samples"] = config.n_samples
        return report

    M = config.n_samples
    chunks = [{"config": config.to_dict(), "start": s, "stop": min(s + config.batch_size, M)}
              for s in range(0, M, config.batch_size)]
    workers = config.workers if workers is None else workers
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mc_chunk, chunks))
    else:
        results = [_mc_chunk(c) for c in chunks]
    results.sort(key=lambda r: r["start"])

    per_level = np.array([sum((r["errors"][i] for r in results), []) for i in range(len(counts))])
    digests = [sum((r["digests"][i] for r in results), []) for i in range(len(counts))]
    if any(d != digests[0] for d in digests):
        raise RuntimeError("levels did not consume the same noise paths")
    stats = [_rms_with_stderr(per_level[i]) for i in range(len(counts))]
    coupling = hashlib.sha256("".join(digests[0]).encode()).hexdigest()
    report = _report(resolutions, [s[0] for s in stats], [s[1] for s in stats],
                     coupling_digest=coupling)
    report.extra["n_samples"] = M
    report.extra["sample_errors"] = per_level
    return report


def converge(config: ExperimentConfig, workers: int | None = None) -> RateReport:
    if config.scheme.sigma.is_zero:
        return validate_deterministic(config)[0]
    return mc_strong(config, workers)


# --- manifests -------------------------------------------------------------------


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(config: dict, outputs, started: float, results: dict | None = None) -> dict:
    return {
        "software": {"package": "fracshe", "version": __version__,
                     "numpy": np.__version__, "python": platform.python_version()},
        "generator": {"name": GENERATOR_NAME, "numpy_version": np.__version__},
        "config": config,
        "master_seed": config.get("master_seed"),
        "seed_rule": SEED_RULE,
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": time.time() - started,
        "outputs": {str(p): file_digest(p) for p in outputs},
        "results": results or {},
    }


def write_manifest(target, manifest: dict) -> None:
    Path(target).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def mesh_summary(scheme: SchemeConfig) -> dict:
    mesh = Mesh1D(scheme.n_cells)
    return {"n_cells": mesh.n_cells, "n_dof": mesh.n_dof, "h": mesh.h,
            "tau": scheme.tau, "trace_fraction": scheme.covariance.trace_fraction()}
