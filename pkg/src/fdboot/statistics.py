"""Two-sample test statistics and their reference distributions.

Covariance-equality statistics: the Hilbert-Schmidt norm of the kernel
difference (``tn``) and two projection statistics built from the scores of
the pooled-covariance eigenfunctions (``tpn_g`` assuming Gaussian curves,
``tpn`` with a fourth-moment normalizer). Mean-equality statistics: the
squared distance between group means (``sn``) and its two projection
versions against the cross-weighted kernel (``sp1``, ``sp2``).

All statistics are pure functions of the dataset and are exactly invariant
to eigenfunction sign flips; ``tn`` and ``sn`` are also invariant to group
relabeling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.special

from .curves import FunctionalDataset
from .errors import NumericalError, ValidationError
from .moments import (
    EigenSystem,
    degenerate_gap_indices,
    group_mean,
    mean_test_eigensystem,
    pooled_eigensystem,
    project_scores,
)

__all__ = [
    "StatKind",
    "TestStatistic",
    "vech_pairs",
    "vech",
    "stat_tn",
    "stat_tpn_g",
    "stat_tpn",
    "stat_sn",
    "stat_sp",
    "covariance_of_vech",
    "compute_statistic",
    "chisq_sf",
    "weighted_chisq_sf",
    "asymptotic_pvalue",
    "has_asymptotic_pvalue",
    "CONDITION_LIMIT",
]

CONDITION_LIMIT = 1e12


class StatKind(str, Enum):
    TN = "tn"
    TPN_G = "tpn-g"
    TPN = "tpn"
    SN = "sn"
    SP1 = "sp1"
    SP2 = "sp2"

    @property
    def needs_p(self) -> bool:
        return self in (StatKind.TPN_G, StatKind.TPN, StatKind.SP1, StatKind.SP2)

    @property
    def tests_covariance(self) -> bool:
        return self in (StatKind.TN, StatKind.TPN_G, StatKind.TPN)


@dataclass(frozen=True)
class TestStatistic:
    """A computed statistic value plus the nuisance diagnostics needed to
    interpret or report it (p used, explained variance fraction, condition
    number of the normalizer, near-degenerate eigenvalue gaps)."""

    kind: StatKind
    value: float
    p: int = 0
    extras: dict = field(default_factory=dict)


def _require_two_groups(dataset: FunctionalDataset, kind: StatKind) -> None:
    if dataset.n_groups != 2:
        raise ValidationError(
            f"{kind.value} is a two-sample statistic; dataset has K={dataset.n_groups}"
        )


def _sample_factor(dataset: FunctionalDataset) -> float:
    n1, n2 = dataset.sizes
    return n1 * n2 / (n1 + n2)


def vech_pairs(p: int) -> list[tuple[int, int]]:
    """0-based (row, col) index pairs of the lower triangle in column-major
    order: (0,0), (1,0), ..., (p-1,0), (1,1), ..., (p-1,p-1)."""
    return [(i, j) for j in range(p) for i in range(j, p)]


def vech(matrix: np.ndarray) -> np.ndarray:
    """Stack the on-and-below-diagonal entries column by column."""
    p = matrix.shape[0]
    return np.array([matrix[i, j] for i, j in vech_pairs(p)])


def stat_tn(dataset: FunctionalDataset) -> TestStatistic:
    """N times the squared Hilbert-Schmidt distance between the two group
    covariance kernels.

    Expanded through the three curve Gram matrices rather than forming the
    m x m kernels; identical to the double quadrature of the squared kernel
    difference.
    """
    _require_two_groups(dataset, StatKind.TN)
    w = dataset.grid.weights
    n1, n2 = dataset.sizes
    r1 = dataset.groups[0] - dataset.groups[0].mean(axis=0)
    r2 = dataset.groups[1] - dataset.groups[1].mean(axis=0)
    g11 = (r1 * w) @ r1.T
    g22 = (r2 * w) @ r2.T
    g12 = (r1 * w) @ r2.T
    hs2 = (
        np.sum(g11**2) / n1**2
        + np.sum(g22**2) / n2**2
        - 2.0 * np.sum(g12**2) / (n1 * n2)
    )
    return TestStatistic(StatKind.TN, float((n1 + n2) * hs2))


def _checked_eigensystem(system: EigenSystem, p: int, what: str) -> None:
    lam = system.eigenvalues
    top = lam[0] if lam.size else 0.0
    bad = np.nonzero(lam[:p] <= 1e-12 * max(top, 0.0))[0]
    if top <= 0.0 or bad.size:
        k = 1 if top <= 0.0 else int(bad[0]) + 1
        raise NumericalError(
            f"{what} is rank deficient at component {k}: "
            f"eigenvalue {lam[k - 1]:.3e} is not positive relative to {top:.3e}"
        )


def _cov_scores(dataset: FunctionalDataset, system: EigenSystem):
    """Per-group score matrices against the pooled eigenfunctions, each
    group centered at its own mean."""
    return [
        project_scores(dataset, i, group_mean(dataset, i), system.eigenfunctions)
        for i in range(2)
    ]


def _cov_diagnostics(system: EigenSystem, p: int) -> dict:
    return {
        "f_p": float(system.explained_fraction[p - 1]),
        "degenerate_gaps": degenerate_gap_indices(system),
    }


def stat_tpn_g(dataset: FunctionalDataset, p: int) -> TestStatistic:
    """Projection statistic for covariance equality under Gaussian curves:
    (n1 n2 / N) sum over all ordered pairs (r, m) <= p of
    D(r,m)^2 / (2 lambda_r lambda_m), where D is the difference of the
    per-group second-moment matrices of the scores."""
    _require_two_groups(dataset, StatKind.TPN_G)
    system = pooled_eigensystem(dataset, p)
    _checked_eigensystem(system, p, "pooled covariance")
    s1, s2 = _cov_scores(dataset, system)
    n1, n2 = dataset.sizes
    delta = s1.T @ s1 / n1 - s2.T @ s2 / n2
    lam = system.eigenvalues[:p]
    value = _sample_factor(dataset) * np.sum(delta**2 / (2.0 * np.outer(lam, lam)))
    return TestStatistic(StatKind.TPN_G, float(value), p, _cov_diagnostics(system, p))


def _product_columns(scores: np.ndarray, pairs) -> np.ndarray:
    return np.column_stack([scores[:, i] * scores[:, j] for i, j in pairs])


def covariance_of_vech(
    dataset: FunctionalDataset, p: int, system: EigenSystem
) -> tuple[np.ndarray, float]:
    """Estimated covariance matrix of the scaled vech of the score
    second-moment difference, in :func:`vech_pairs` ordering.

    Each group contributes the centered fourth moments of its score
    products, weighted by the opposite group's sample fraction. Returns the
    symmetric q x q matrix together with its condition number.
    """
    _require_two_groups(dataset, StatKind.TPN)
    if system.count < p:
        raise ValidationError(f"eigensystem stores {system.count} pairs, need {p}")
    n1, n2 = dataset.sizes
    total = n1 + n2
    pairs = vech_pairs(p)
    s1, s2 = _cov_scores(dataset, system)
    y1 = _product_columns(s1, pairs)
    y2 = _product_columns(s2, pairs)
    mean1 = y1.mean(axis=0)
    mean2 = y2.mean(axis=0)
    l_mat = (n2 / total) * (y1.T @ y1 / n1 - np.outer(mean1, mean1)) + (
        n1 / total
    ) * (y2.T @ y2 / n2 - np.outer(mean2, mean2))
    l_mat = (l_mat + l_mat.T) / 2.0
    return l_mat, _condition_number(l_mat)


def _condition_number(mat: np.ndarray) -> float:
    mags = np.abs(scipy.linalg.eigvalsh(mat))
    if mags.max() == 0.0:
        return np.inf
    with np.errstate(divide="ignore"):
        return float(mags.max() / mags.min()) if mags.min() > 0 else np.inf


def stat_tpn(dataset: FunctionalDataset, p: int) -> TestStatistic:
    """Quadratic-form statistic for covariance equality:
    (n1 n2 / N) xi' M^{-1} xi with xi the vech of the score second-moment
    difference.

    The normalizer M uses the raw (uncentered) cross-weighted fourth
    moments of the score products. Against chi-square critical values this
    is conservative in small samples; bootstrap calibration recomputes the
    identical functional on the pseudo-data, so its level is unaffected.
    The centered covariance estimator remains available through
    :func:`covariance_of_vech` for diagnostics.
    """
    _require_two_groups(dataset, StatKind.TPN)
    system = pooled_eigensystem(dataset, p)
    _checked_eigensystem(system, p, "pooled covariance")
    s1, s2 = _cov_scores(dataset, system)
    n1, n2 = dataset.sizes
    total = n1 + n2
    pairs = vech_pairs(p)
    y1 = _product_columns(s1, pairs)
    y2 = _product_columns(s2, pairs)
    normalizer = (n2 / total) * (y1.T @ y1 / n1) + (n1 / total) * (y2.T @ y2 / n2)
    normalizer = (normalizer + normalizer.T) / 2.0
    cond = _condition_number(normalizer)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericalError(
            f"score-product normalizer is numerically singular "
            f"(condition number {cond:.2e} > {CONDITION_LIMIT:.0e}); try a smaller p"
        )
    xi = y1.mean(axis=0) - y2.mean(axis=0)
    solved = scipy.linalg.solve(normalizer, xi, assume_a="sym")
    value = _sample_factor(dataset) * float(xi @ solved)
    extras = _cov_diagnostics(system, p)
    extras["condition_number"] = cond
    return TestStatistic(StatKind.TPN, value, p, extras)


def stat_sn(dataset: FunctionalDataset) -> TestStatistic:
    """(n1 n2 / N) times the squared grid-weighted distance between the two
    group mean curves."""
    _require_two_groups(dataset, StatKind.SN)
    diff = group_mean(dataset, 0) - group_mean(dataset, 1)
    value = _sample_factor(dataset) * float(np.dot(dataset.grid.weights * diff, diff))
    return TestStatistic(StatKind.SN, value)


def stat_sp(dataset: FunctionalDataset, p: int, variant: int) -> TestStatistic:
    """Projection statistics for mean equality against the eigenfunctions
    of the cross-weighted kernel: variant 1 normalizes each squared
    projection by its eigenvalue (chi-square limit), variant 2 leaves them
    unnormalized (weighted chi-square limit)."""
    if variant not in (1, 2):
        raise ValidationError(f"variant must be 1 or 2, got {variant}")
    kind = StatKind.SP1 if variant == 1 else StatKind.SP2
    _require_two_groups(dataset, kind)
    system = mean_test_eigensystem(dataset, p)
    if variant == 1:
        _checked_eigensystem(system, p, "cross-weighted pooled covariance")
    diff = group_mean(dataset, 0) - group_mean(dataset, 1)
    proj = system.eigenfunctions[:p] @ (dataset.grid.weights * diff)
    tau = system.eigenvalues[:p]
    if variant == 1:
        value = _sample_factor(dataset) * float(np.sum(proj**2 / tau))
    else:
        value = _sample_factor(dataset) * float(np.sum(proj**2))
    extras = _cov_diagnostics(system, p)
    extras["weights"] = tuple(float(t) for t in tau)
    return TestStatistic(kind, value, p, extras)


def compute_statistic(
    dataset: FunctionalDataset, kind: StatKind, p: int | None = None
) -> TestStatistic:
    """Dispatch a statistic by kind; projection statistics require p."""
    kind = StatKind(kind)
    if kind.needs_p:
        if p is None or p < 1:
            raise ValidationError(f"statistic {kind.value} requires p >= 1")
        if kind is StatKind.TPN_G:
            return stat_tpn_g(dataset, p)
        if kind is StatKind.TPN:
            return stat_tpn(dataset, p)
        return stat_sp(dataset, p, 1 if kind is StatKind.SP1 else 2)
    if kind is StatKind.TN:
        return stat_tn(dataset)
    return stat_sn(dataset)


def chisq_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square law with df degrees of
    freedom, via the regularized upper incomplete gamma function."""
    if df < 1:
        raise ValidationError(f"df must be >= 1, got {df}")
    if x < 0:
        raise ValidationError(f"x must be >= 0, got {x}")
    return float(scipy.special.gammaincc(df / 2.0, x / 2.0))


def weighted_chisq_sf(x: float, weights, draws: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo tail probability P(sum_k w_k Z_k^2 > x) for independent
    standard normal Z_k; deterministic given the seed."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0 or np.any(weights < 0):
        raise ValidationError("weights must be a nonempty vector of nonnegative reals")
    if not np.any(weights > 0):
        raise NumericalError("all weights are zero: the limit law is degenerate at 0")
    if draws < 10_000:
        raise ValidationError(f"draws must be >= 10000, got {draws}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((draws, weights.size))
    return float(np.mean((z**2) @ weights > x))


def has_asymptotic_pvalue(kind: StatKind) -> bool:
    """tn and sn have limit laws with unknown infinite spectra and are
    calibrated by bootstrap only."""
    return StatKind(kind).needs_p


def asymptotic_pvalue(
    stat: TestStatistic, draws: int = 100_000, seed: int = 0
) -> float:
    """Reference-distribution p-value: chi-square with p(p+1)/2 df for the
    covariance projection statistics, chi-square with p df for sp1, and the
    simulated eigenvalue-weighted mixture for sp2."""
    kind = StatKind(stat.kind)
    if not has_asymptotic_pvalue(kind):
        raise ValidationError(
            f"{kind.value} has no usable asymptotic reference distribution; "
            "use bootstrap calibration"
        )
    if kind in (StatKind.TPN, StatKind.TPN_G):
        return chisq_sf(stat.value, stat.p * (stat.p + 1) // 2)
    if kind is StatKind.SP1:
        return chisq_sf(stat.value, stat.p)
    return weighted_chisq_sf(stat.value, stat.extras["weights"], draws, seed)
