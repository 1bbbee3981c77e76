"""Synthetic curve generators and the empirical size/power harness.

Generators: standard Brownian motion, the Brownian bridge, and a
non-Gaussian sine process A sin(pi t) + B sin(2 pi t) + C sin(4 pi t)
whose coefficients A = 7 Y1, B = 3 Y2, C = Y3 are scaled independent
t(5)-distributed variables. Curves are sampled on a uniform grid and, by
default, projected onto a 49-term Fourier span before testing.

The harness draws R independent datasets, runs one test on each, and
reports the rejection fraction per significance level. Dataset r uses the
data stream ``child_seed(master_seed, 2r)`` and the calibration stream
``child_seed(master_seed, 2r + 1)``, so every number is reproducible from
the master seed alone.
"""

from __future__ import annotations

import functools
import io
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from joblib import Parallel, delayed

from .bootstrap import BootstrapScheme, SeedSpec, bootstrap_pvalue, default_scheme
from .curves import FunctionalDataset, Grid, smoothing_matrix
from .errors import NumericalError, ValidationError
from .statistics import (
    StatKind,
    asymptotic_pvalue,
    compute_statistic,
    has_asymptotic_pvalue,
)

__all__ = [
    "GeneratorKind",
    "GeneratorSpec",
    "ExperimentSpec",
    "SizePowerResult",
    "sample_t5",
    "gen_brownian_motion",
    "gen_brownian_bridge",
    "gen_ng_sine",
    "generate_group",
    "generate_dataset",
    "run_size_power",
    "experiment_from_config",
    "CONFIG_SCHEMA",
    "DEFAULT_SMOOTH_BASIS",
]

DEFAULT_SMOOTH_BASIS = 49
MAX_FAILED_FRACTION = 0.01


class GeneratorKind(str, Enum):
    BROWNIAN_MOTION = "bm"
    BROWNIAN_BRIDGE = "bb"
    NG_SINE = "ng"


@dataclass(frozen=True)
class GeneratorSpec:
    """One group's data-generating process.

    ``scale`` multiplies every curve (a covariance alternative), ``shift``
    is added to every curve (a mean alternative; scalar or length-m curve).
    ``smooth_basis=None`` skips the Fourier projection.
    """

    kind: GeneratorKind
    scale: float = 1.0
    shift: float | np.ndarray = 0.0
    m: int = 500
    smooth_basis: int | None = DEFAULT_SMOOTH_BASIS

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))
        if self.scale < 0:
            raise ValidationError(f"scale must be >= 0, got {self.scale}")
        if self.m < 2:
            raise ValidationError(f"m must be >= 2, got {self.m}")
        shift = self.shift
        if not np.isscalar(shift):
            shift = np.asarray(shift, dtype=float)
            if shift.shape != (self.m,):
                raise ValidationError("shift curve length does not match m")
            object.__setattr__(self, "shift", shift)


def sample_t5(rng: np.random.Generator, size) -> np.ndarray:
    """t(5) variates as Z / sqrt(V/5), Z standard normal followed by
    V chi-square(5) from the same stream (fixed draw order for
    reproducibility)."""
    z = rng.standard_normal(size)
    v = rng.chisquare(5.0, size)
    return z / np.sqrt(v / 5.0)


def _bm_paths(rng: np.random.Generator, grid: Grid, n: int) -> np.ndarray:
    steps = np.diff(grid.points)
    increments = rng.standard_normal((n, grid.m - 1)) * np.sqrt(steps)
    paths = np.empty((n, grid.m))
    paths[:, 0] = 0.0
    np.cumsum(increments, axis=1, out=paths[:, 1:])
    return paths


def gen_brownian_motion(rng: np.random.Generator, grid: Grid) -> np.ndarray:
    """One standard Brownian path: X(t_1) = 0, independent N(0, dt)
    increments, Cov(X(s), X(t)) = min(s, t)."""
    return _bm_paths(rng, grid, 1)[0]


def gen_brownian_bridge(rng: np.random.Generator, grid: Grid) -> np.ndarray:
    """One Brownian bridge W(t) - t W(1); vanishes at both endpoints of
    [0, 1] and has Cov(B(s), B(t)) = min(s, t) - s t."""
    w = _bm_paths(rng, grid, 1)[0]
    return w - grid.points * w[-1]


def gen_ng_sine(rng: np.random.Generator, grid: Grid) -> np.ndarray:
    """One heavy-tailed sine curve: coefficients (7, 3, 1) * t(5) on
    sin(pi t), sin(2 pi t), sin(4 pi t)."""
    y = sample_t5(rng, 3)
    t = grid.points
    return (
        7.0 * y[0] * np.sin(np.pi * t)
        + 3.0 * y[1] * np.sin(2.0 * np.pi * t)
        + y[2] * np.sin(4.0 * np.pi * t)
    )


@functools.lru_cache(maxsize=8)
def _cached_smoother(m: int, n_basis: int) -> np.ndarray:
    return smoothing_matrix(Grid.uniform(m), n_basis)


def _raw_group(spec: GeneratorSpec, n: int, rng: np.random.Generator, grid: Grid):
    if spec.kind is GeneratorKind.BROWNIAN_MOTION:
        return _bm_paths(rng, grid, n)
    if spec.kind is GeneratorKind.BROWNIAN_BRIDGE:
        w = _bm_paths(rng, grid, n)
        return w - np.outer(w[:, -1], grid.points)
    y = sample_t5(rng, (n, 3))
    t = grid.points
    return (
        7.0 * y[:, 0:1] * np.sin(np.pi * t)
        + 3.0 * y[:, 1:2] * np.sin(2.0 * np.pi * t)
        + y[:, 2:3] * np.sin(4.0 * np.pi * t)
    )


def generate_group(spec: GeneratorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n curves from the process: scale applied to the stochastic part,
    shift added afterwards, optional Fourier projection last."""
    grid = Grid.uniform(spec.m)
    curves = spec.scale * _raw_group(spec, n, rng, grid)
    curves = curves + spec.shift
    if spec.smooth_basis is not None:
        curves = curves @ _cached_smoother(spec.m, spec.smooth_basis).T
    return curves


def generate_dataset(
    specs, sizes, rng: np.random.Generator | int, labels=None
) -> FunctionalDataset:
    """One dataset with group i drawn from specs[i]; groups are generated
    in order from a single stream."""
    specs = tuple(specs)
    sizes = tuple(int(n) for n in sizes)
    if len(specs) != len(sizes):
        raise ValidationError("one generator spec per group size required")
    if len({s.m for s in specs}) != 1:
        raise ValidationError("all groups must share the same grid size m")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    groups = [generate_group(spec, n, rng) for spec, n in zip(specs, sizes)]
    return FunctionalDataset(Grid.uniform(specs[0].m), tuple(groups), tuple(labels or ()))


@dataclass(frozen=True)
class ExperimentSpec:
    """A size/power experiment: R independent datasets, one test each."""

    generators: tuple[GeneratorSpec, ...]
    sizes: tuple[int, ...]
    statistic: StatKind
    method: str = "boot"
    p: int | None = None
    scheme: BootstrapScheme | None = None
    b: int = 1000
    replications: int = 500
    alphas: tuple[float, ...] = (0.01, 0.05, 0.10)
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "statistic", StatKind(self.statistic))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.method not in ("boot", "asym"):
            raise ValidationError(f"method must be 'boot' or 'asym', got {self.method!r}")
        if self.method == "asym" and not has_asymptotic_pvalue(self.statistic):
            raise ValidationError(
                f"{self.statistic.value} is bootstrap-only: no usable asymptotic "
                "reference distribution"
            )
        if self.statistic.needs_p and (self.p is None or self.p < 1):
            raise ValidationError(f"statistic {self.statistic.value} requires p >= 1")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.b < 1:
            raise ValidationError("B must be >= 1")
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ValidationError("alphas must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class SizePowerResult:
    """Rejection fractions per significance level with binomial standard
    errors, plus the seed trail needed to reproduce the run."""

    spec: ExperimentSpec
    alphas: tuple[float, ...]
    rates: tuple[float, ...]
    std_errors: tuple[float, ...]
    rejections: tuple[int, ...]
    r_effective: int
    n_failed: int
    dataset_seeds: tuple[int, ...]
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        spec = self.spec
        return {
            "statistic": spec.statistic.value,
            "method": spec.method,
            "p": spec.p,
            "scheme": spec.scheme.kind.value if spec.scheme else None,
            "B": spec.b,
            "replications": spec.replications,
            "n": list(spec.sizes),
            "m": spec.generators[0].m,
            "generators": [
                {
                    "kind": g.kind.value,
                    "scale": g.scale,
                    "shift": g.shift if np.isscalar(g.shift) else list(g.shift),
                    "smooth_basis": g.smooth_basis,
                }
                for g in spec.generators
            ],
            "master_seed": spec.master_seed,
            "dataset_seeds": list(self.dataset_seeds),
            "r_effective": self.r_effective,
            "n_failed": self.n_failed,
            "rows": [
                {"alpha": a, "rate": r, "std_error": s, "rejections": c}
                for a, r, s, c in zip(self.alphas, self.rates, self.std_errors, self.rejections)
            ],
            "warnings": list(self.warnings),
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("alpha,rate,std_error,rejections,r_effective\n")
        for a, r, s, c in zip(self.alphas, self.rates, self.std_errors, self.rejections):
            out.write(f"{a!r},{r!r},{s!r},{c},{self.r_effective}\n")
        return out.getvalue()


def _one_dataset_pvalue(spec: ExperimentSpec, r: int) -> float:
    seeds = SeedSpec(spec.master_seed)
    dataset = generate_dataset(spec.generators, spec.sizes, seeds.rng(2 * r))
    if spec.method == "boot":
        scheme = spec.scheme or default_scheme(spec.statistic)
        result = bootstrap_pvalue(
            dataset, spec.statistic, scheme, spec.b, seeds.child(2 * r + 1), spec.p
        )
        return result.p_value
    stat = compute_statistic(dataset, spec.statistic, spec.p)
    return asymptotic_pvalue(stat, seed=seeds.child(2 * r + 1))


def run_size_power(spec: ExperimentSpec, jobs: int = 1) -> SizePowerResult:
    """Empirical rejection rates of one test over R independent datasets.

    Datasets are independent given their child seeds, so they may be
    evaluated in parallel; results are aggregated in replication order and
    do not depend on ``jobs``. Datasets on which the statistic fails
    numerically are excluded (aborting if more than 1% fail).
    """

    def one(r: int) -> float:
        try:
            return _one_dataset_pvalue(spec, r)
        except NumericalError:
            return np.nan

    indices = range(spec.replications)
    if jobs == 1:
        pvalues = np.array([one(r) for r in indices])
    else:
        pvalues = np.array(Parallel(n_jobs=jobs)(delayed(one)(r) for r in indices))
    failed = int(np.isnan(pvalues).sum())
    if failed > MAX_FAILED_FRACTION * spec.replications:
        raise NumericalError(
            f"{failed} of {spec.replications} datasets failed numerically "
            f"(> {MAX_FAILED_FRACTION:.0%})"
        )
    kept = pvalues[~np.isnan(pvalues)]
    warnings = ()
    if failed:
        warnings = (f"{failed} of {spec.replications} datasets failed and were excluded",)
    r_eff = kept.size
    rejections = tuple(int(np.sum(kept <= a)) for a in spec.alphas)
    rates = tuple(c / r_eff for c in rejections)
    std_errors = tuple(float(np.sqrt(r * (1.0 - r) / r_eff)) for r in rates)
    seeds = SeedSpec(spec.master_seed)
    return SizePowerResult(
        spec=spec,
        alphas=spec.alphas,
        rates=rates,
        std_errors=std_errors,
        rejections=rejections,
        r_effective=r_eff,
        n_failed=failed,
        dataset_seeds=tuple(seeds.child(2 * r) for r in indices),
        warnings=warnings,
    )


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["groups", "statistic", "method", "B", "replications", "master_seed"],
    "additionalProperties": False,
    "properties": {
        "groups": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["kind", "n"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["bm", "bb", "ng"]},
                    "n": {"type": "integer", "minimum": 2},
                    "scale": {"type": "number", "minimum": 0},
                    "shift": {
                        "anyOf": [
                            {"type": "number"},
                            {"type": "array", "items": {"type": "number"}},
                        ]
                    },
                },
            },
        },
        "m": {"type": "integer", "minimum": 2},
        "smooth_basis": {"type": ["integer", "null"], "minimum": 1},
        "statistic": {"enum": [k.value for k in StatKind]},
        "p": {"type": "integer", "minimum": 1},
        "method": {"enum": ["boot", "asym"]},
        "scheme": {
            "enum": [
                "covariance",
                "mean",
                "joint",
                "gaussian-covariance",
                "gaussian-mean",
            ]
        },
        "gaussian_rank": {"type": "integer", "minimum": 1},
        "B": {"type": "integer", "minimum": 1},
        "replications": {"type": "integer", "minimum": 1},
        "alphas": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        },
        "master_seed": {"type": "integer"},
    },
}


def experiment_from_config(config: dict) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from a JSON-style mapping, raising
    a validation error with a JSON pointer on schema violations."""
    import jsonschema

    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(part) for part in exc.absolute_path)
        raise ValidationError(f"config{pointer}: {exc.message}") from None
    m = config.get("m", 500)
    smooth = config.get("smooth_basis", DEFAULT_SMOOTH_BASIS)
    generators = tuple(
        GeneratorSpec(
            kind=g["kind"],
            scale=g.get("scale", 1.0),
            shift=g.get("shift", 0.0),
            m=m,
            smooth_basis=smooth,
        )
        for g in config["groups"]
    )
    scheme = None
    if "scheme" in config:
        scheme = BootstrapScheme(config["scheme"], config.get("gaussian_rank"))
    return ExperimentSpec(
        generators=generators,
        sizes=tuple(g["n"] for g in config["groups"]),
        statistic=config["statistic"],
        method=config["method"],
        p=config.get("p"),
        scheme=scheme,
        b=config["B"],
        replications=config["replications"],
        alphas=tuple(config.get("alphas", (0.01, 0.05, 0.10))),
        master_seed=config["master_seed"],
    )
