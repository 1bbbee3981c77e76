"""Null-enforcing resampling schemes and the Monte Carlo p-value engine.

Each scheme rebuilds pseudo-datasets whose conditional moments satisfy the
null hypothesis by construction:

* covariance null: every pseudo-curve is its own group mean plus a residual
  drawn uniformly from the pooled residual set, so all groups share the
  pooled covariance kernel while keeping their own means;
* mean null: the pooled mean plus a residual drawn within the same group,
  so all groups share the pooled mean while keeping their own covariances;
* joint null: the pooled mean plus pooled residual draws;
* Gaussian variants: truncated eigenfunction expansions of the null
  covariance with independent standard normal coefficients.

Replicate b draws from an RNG seeded by ``child(master_seed, b)`` (see
:func:`child_seed`), so the replicate set is reproducible, independent of
evaluation order, and safe to evaluate concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from joblib import Parallel, delayed

from .curves import FunctionalDataset
from .errors import NumericalError, ValidationError
from .moments import (
    group_mean,
    mean_test_eigensystem,
    pooled_eigensystem,
    pooled_mean,
    eigen_decompose_factored,
)
from .statistics import StatKind, TestStatistic, compute_statistic

__all__ = [
    "SchemeKind",
    "BootstrapScheme",
    "SeedSpec",
    "BootstrapResult",
    "child_seed",
    "default_scheme",
    "resample_covariance_null",
    "resample_mean_null",
    "resample_joint_null",
    "resample_gaussian",
    "bootstrap_pvalue",
    "GAUSSIAN_RANK_FRACTION",
    "MAX_FAILED_FRACTION",
]

GAUSSIAN_RANK_FRACTION = 0.999
MAX_FAILED_FRACTION = 0.01

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def child_seed(master_seed: int, index: int) -> int:
    """Derive the 64-bit stream seed for replicate ``index``.

    SplitMix-style finalizer applied to ``master_seed + (index + 1) *
    0x9E3779B97F4A7C15`` modulo 2^64; the finalizer is a bijection and the
    pre-mix is injective in ``index``, so distinct indices give distinct
    streams. This derivation is part of the output contract and must not
    change between releases.
    """
    z = (master_seed + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus the fixed child-stream derivation."""

    master_seed: int

    def child(self, index: int) -> int:
        return child_seed(self.master_seed, index)

    def rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng(self.child(index))


class SchemeKind(str, Enum):
    COVARIANCE_NULL = "covariance"
    MEAN_NULL = "mean"
    JOINT_NULL = "joint"
    GAUSSIAN_COV_NULL = "gaussian-covariance"
    GAUSSIAN_MEAN_NULL = "gaussian-mean"

    @property
    def is_gaussian(self) -> bool:
        return self in (SchemeKind.GAUSSIAN_COV_NULL, SchemeKind.GAUSSIAN_MEAN_NULL)


@dataclass(frozen=True)
class BootstrapScheme:
    """Resampling scheme selector; ``gaussian_rank`` caps the eigenfunction
    expansion of the Gaussian variants (default: smallest rank explaining
    99.9% of the spectral mass)."""

    kind: SchemeKind
    gaussian_rank: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.gaussian_rank is not None and self.gaussian_rank < 1:
            raise ValidationError("gaussian_rank must be >= 1 when given")


def default_scheme(kind: StatKind) -> BootstrapScheme:
    """Covariance statistics pair with the covariance null, mean statistics
    with the mean null."""
    if StatKind(kind).tests_covariance:
        return BootstrapScheme(SchemeKind.COVARIANCE_NULL)
    return BootstrapScheme(SchemeKind.MEAN_NULL)


def _group_residuals(dataset: FunctionalDataset) -> list[np.ndarray]:
    return [g - g.mean(axis=0) for g in dataset.groups]


def _make_sampler(dataset: FunctionalDataset, scheme: BootstrapScheme):
    """Precompute the scheme's fixed ingredients and return a function
    rng -> pseudo-dataset. Groups are filled in order, each with one block
    of draws from the stream."""
    kind = scheme.kind
    res = _group_residuals(dataset)
    sizes = dataset.sizes
    if kind is SchemeKind.COVARIANCE_NULL:
        means = [group_mean(dataset, i) for i in range(dataset.n_groups)]
        pool = np.vstack(res)

        def draw(rng):
            return dataset.replace_groups(
                mu + pool[rng.integers(0, pool.shape[0], n)]
                for mu, n in zip(means, sizes)
            )

    elif kind is SchemeKind.MEAN_NULL:
        center = pooled_mean(dataset)

        def draw(rng):
            return dataset.replace_groups(
                center + r[rng.integers(0, n, n)] for r, n in zip(res, sizes)
            )

    elif kind is SchemeKind.JOINT_NULL:
        center = pooled_mean(dataset)
        pool = np.vstack(res)

        def draw(rng):
            return dataset.replace_groups(
                center + pool[rng.integers(0, pool.shape[0], n)] for n in sizes
            )

    elif kind is SchemeKind.GAUSSIAN_COV_NULL:
        means = [group_mean(dataset, i) for i in range(dataset.n_groups)]
        scaled = _kl_factors(pooled_eigensystem(dataset, _spectrum_size(dataset)), scheme)

        def draw(rng):
            return dataset.replace_groups(
                mu + rng.standard_normal((n, scaled.shape[0])) @ scaled
                for mu, n in zip(means, sizes)
            )

    elif kind is SchemeKind.GAUSSIAN_MEAN_NULL:
        center = pooled_mean(dataset)
        per_group = [
            _kl_factors(
                eigen_decompose_factored(
                    r, np.full(n, 1.0 / n), dataset.grid, min(n, dataset.m)
                ),
                scheme,
            )
            for r, n in zip(res, sizes)
        ]

        def draw(rng):
            return dataset.replace_groups(
                center + rng.standard_normal((n, s.shape[0])) @ s
                for s, n in zip(per_group, sizes)
            )

    else:  # pragma: no cover
        raise ValidationError(f"unknown scheme kind {kind!r}")
    return draw


def _spectrum_size(dataset: FunctionalDataset) -> int:
    return min(dataset.total, dataset.m)


def _kl_factors(system, scheme: BootstrapScheme) -> np.ndarray:
    """Rows sqrt(lambda_k) phi_k for the leading rank eigenpairs of the null
    covariance; a pseudo-curve deviation is Z @ factors with Z standard
    normal."""
    rank = scheme.gaussian_rank
    if rank is None:
        fractions = system.explained_fraction
        above = np.nonzero(fractions >= GAUSSIAN_RANK_FRACTION)[0]
        rank = int(above[0]) + 1 if above.size else system.count
    if rank > system.count:
        raise ValidationError(
            f"gaussian_rank={rank} exceeds the {system.count} available eigenvalues"
        )
    lam = system.eigenvalues[:rank]
    if np.any(lam < -1e-8 * max(system.eigenvalues[0], 0.0)):
        raise ValidationError(
            "requested rank reaches materially negative eigenvalues of the null covariance"
        )
    return np.sqrt(np.maximum(lam, 0.0))[:, None] * system.eigenfunctions[:rank]


def resample_covariance_null(
    dataset: FunctionalDataset, rng: np.random.Generator
) -> FunctionalDataset:
    """Group means plus i.i.d. uniform draws from all N pooled residuals."""
    return _make_sampler(dataset, BootstrapScheme(SchemeKind.COVARIANCE_NULL))(rng)


def resample_mean_null(
    dataset: FunctionalDataset, rng: np.random.Generator
) -> FunctionalDataset:
    """Pooled mean plus i.i.d. uniform draws from the own group's residuals."""
    return _make_sampler(dataset, BootstrapScheme(SchemeKind.MEAN_NULL))(rng)


def resample_joint_null(
    dataset: FunctionalDataset, rng: np.random.Generator
) -> FunctionalDataset:
    """Pooled mean plus pooled residual draws: both null moments at once."""
    return _make_sampler(dataset, BootstrapScheme(SchemeKind.JOINT_NULL))(rng)


def resample_gaussian(
    dataset: FunctionalDataset, rng: np.random.Generator, scheme: BootstrapScheme
) -> FunctionalDataset:
    """Gaussian pseudo-curves from the truncated eigenfunction expansion of
    the null covariance (pooled kernel with group means for the covariance
    null; per-group kernels with the pooled mean for the mean null)."""
    if not scheme.kind.is_gaussian:
        raise ValidationError(f"scheme {scheme.kind.value} is not a Gaussian variant")
    return _make_sampler(dataset, scheme)(rng)


@dataclass(frozen=True)
class BootstrapResult:
    """Observed statistic, its replicate values, and the add-one p-value
    (1 + #{T*_b >= T_obs}) / (B + 1)."""

    observed: TestStatistic
    replicates: np.ndarray
    p_value: float
    scheme: BootstrapScheme
    seed: SeedSpec
    b_requested: int
    n_failed: int = 0
    warnings: tuple[str, ...] = ()

    @property
    def b_effective(self) -> int:
        return int(self.replicates.size)


def _replicate_values(stat_fn, sampler, seeds: SeedSpec, b_total: int, jobs: int):
    def one(b: int) -> float:
        try:
            return stat_fn(sampler(seeds.rng(b))).value
        except NumericalError:
            return np.nan

    indices = range(1, b_total + 1)
    if jobs == 1:
        return np.array([one(b) for b in indices])
    return np.array(Parallel(n_jobs=jobs)(delayed(one)(b) for b in indices))


def bootstrap_pvalue(
    dataset: FunctionalDataset,
    kind: StatKind,
    scheme: BootstrapScheme | None = None,
    b: int = 1000,
    seed: int = 0,
    p: int | None = None,
    jobs: int = 1,
) -> BootstrapResult:
    """Bootstrap-calibrated p-value for one statistic on one dataset.

    Parameters
    ----------
    dataset : FunctionalDataset
        The observed two-sample (or K-sample, for resampling purposes)
        curves.
    kind : StatKind
        Which statistic to calibrate.
    scheme : BootstrapScheme, optional
        Resampling scheme; defaults to the null matching the statistic.
        A deliberate mismatch is allowed for experiments.
    b : int
        Number of bootstrap replicates.
    seed : int
        Master seed; replicate ``i`` uses the stream ``child_seed(seed, i)``.
    p : int, optional
        Number of leading eigenfunctions for projection statistics.
    jobs : int
        Parallel workers for replicate evaluation. Results are aggregated
        in replicate order, so the value of ``jobs`` never changes the
        output.

    The full statistic pipeline is recomputed on every pseudo-dataset
    (eigenfunctions, scores, and normalizers are re-estimated from the
    replicate). Replicates that fail numerically are dropped and B
    adjusted, unless more than 1% fail, which aborts.
    """
    if b < 1:
        raise ValidationError(f"b must be >= 1, got {b}")
    kind = StatKind(kind)
    if scheme is None:
        scheme = default_scheme(kind)
    observed = compute_statistic(dataset, kind, p)
    sampler = _make_sampler(dataset, scheme)
    seeds = SeedSpec(seed)
    values = _replicate_values(
        lambda ds: compute_statistic(ds, kind, p), sampler, seeds, b, jobs
    )
    failed = int(np.isnan(values).sum())
    if failed > MAX_FAILED_FRACTION * b:
        raise NumericalError(
            f"{failed} of {b} bootstrap replicates failed numerically (> "
            f"{MAX_FAILED_FRACTION:.0%}); the statistic is unstable on this "
            "dataset, try a smaller p"
        )
    kept = values[~np.isnan(values)]
    warnings = ()
    if failed:
        warnings = (
            f"{failed} of {b} replicates failed numerically and were excluded",
        )
    p_value = (1.0 + float(np.sum(kept >= observed.value))) / (kept.size + 1.0)
    kept.flags.writeable = False
    return BootstrapResult(
        observed=observed,
        replicates=kept,
        p_value=p_value,
        scheme=scheme,
        seed=seeds,
        b_requested=b,
        n_failed=failed,
        warnings=warnings,
    )
