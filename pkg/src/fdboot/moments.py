"""Moment estimators, covariance kernels, and their eigendecompositions.

Covariance kernels are discretized as m x m matrices. The integral
operator f -> int K(., s) f(s) ds is made self-adjoint by conjugating with
the square-root quadrature weights, A = W^{1/2} K W^{1/2}, so its spectrum
is real and the recovered eigenfunctions are orthonormal in the
grid-weighted inner product.

Every sample covariance kernel here is a small sum of curve outer
products, so the eigenproblem is also solved through the n x n Gram matrix
of the (weighted) curves whenever n < m; both routes yield the same
operator spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .curves import FunctionalDataset, Grid
from .errors import NumericalError, ValidationError

__all__ = [
    "KernelMatrix",
    "EigenSystem",
    "group_mean",
    "pooled_mean",
    "residuals",
    "group_covariance",
    "pooled_covariance",
    "mean_test_pooled_kernel",
    "eigen_decompose",
    "eigen_decompose_factored",
    "pooled_eigensystem",
    "mean_test_eigensystem",
    "project_scores",
    "degenerate_gap_indices",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class KernelMatrix:
    """Discretized bivariate kernel K(t_i, t_j) on a grid."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        vals = _freeze(self.values)
        if vals.shape != (self.grid.m, self.grid.m):
            raise ValidationError(
                f"kernel shape {vals.shape} does not match grid m={self.grid.m}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError("kernel contains non-finite values")
        object.__setattr__(self, "values", vals)

    def trace_integral(self) -> float:
        """Quadrature of int K(t, t) dt."""
        return float(np.dot(self.grid.weights, np.diagonal(self.values)))


@dataclass(frozen=True)
class EigenSystem:
    """Leading eigenpairs of a covariance operator.

    ``eigenvalues`` are nonincreasing; ``eigenfunctions[k]`` is the k-th
    eigenfunction sampled on the grid, unit-norm in the grid inner product,
    with sign fixed so its largest-magnitude component is positive.
    ``total_mass`` is the full spectral mass (the operator trace), so
    ``explained_fraction`` refers to the whole spectrum even when only a
    few pairs are stored.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    grid: Grid
    total_mass: float

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _freeze(self.eigenvalues))
        object.__setattr__(self, "eigenfunctions", _freeze(self.eigenfunctions))

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    @property
    def explained_fraction(self) -> np.ndarray:
        """f_p = (sum_{k<=p} lambda_k) / total mass, for p = 1..count."""
        if self.total_mass <= 0.0:
            return np.zeros(self.count)
        return np.cumsum(self.eigenvalues) / self.total_mass


def group_mean(dataset: FunctionalDataset, i: int) -> np.ndarray:
    """Pointwise average of the curves in group i."""
    return dataset.groups[i].mean(axis=0)


def pooled_mean(dataset: FunctionalDataset) -> np.ndarray:
    """Average of all N curves across groups."""
    return np.vstack(dataset.groups).mean(axis=0)


def residuals(dataset: FunctionalDataset) -> FunctionalDataset:
    """Each curve minus its own group mean."""
    return dataset.replace_groups(g - g.mean(axis=0) for g in dataset.groups)


def _sym(mat: np.ndarray) -> np.ndarray:
    return (mat + mat.T) / 2.0


def group_covariance(dataset: FunctionalDataset, i: int) -> KernelMatrix:
    """Sample covariance kernel of group i with divisor n_i."""
    g = dataset.groups[i]
    n = g.shape[0]
    if n < 2:
        raise ValidationError(f"group {i + 1} is degenerate: n_i={n} < 2")
    centered = g - g.mean(axis=0)
    return KernelMatrix(_sym(centered.T @ centered / n), dataset.grid)


def pooled_covariance(dataset: FunctionalDataset) -> KernelMatrix:
    """(n_i/N)-weighted combination of the group covariance kernels."""
    total = dataset.total
    acc = np.zeros((dataset.m, dataset.m))
    for i, n_i in enumerate(dataset.sizes):
        acc += (n_i / total) * group_covariance(dataset, i).values
    return KernelMatrix(acc, dataset.grid)


def mean_test_pooled_kernel(dataset: FunctionalDataset) -> KernelMatrix:
    """Cross-weighted kernel (n_2/N) C_1 + (n_1/N) C_2 that drives the
    mean-difference statistics; note the weights are swapped relative to
    the pooled covariance."""
    if dataset.n_groups != 2:
        raise ValidationError(f"K=2 required, dataset has K={dataset.n_groups}")
    n1, n2 = dataset.sizes
    total = n1 + n2
    kernel = (n2 / total) * group_covariance(dataset, 0).values + (
        n1 / total
    ) * group_covariance(dataset, 1).values
    return KernelMatrix(kernel, dataset.grid)


def _fix_signs(phi: np.ndarray) -> np.ndarray:
    for k in range(phi.shape[0]):
        j = int(np.argmax(np.abs(phi[k])))
        if phi[k, j] < 0:
            phi[k] = -phi[k]
    return phi


def eigen_decompose(kernel: KernelMatrix, count: int) -> EigenSystem:
    """Leading eigenpairs of the integral operator with the given kernel.

    Solves the weight-conjugated symmetric problem and maps eigenvectors
    back through W^{-1/2}; raises for asymmetric kernels or out-of-range
    ``count``.
    """
    m = kernel.grid.m
    if not 1 <= count <= m:
        raise ValidationError(f"count must be in [1, {m}], got {count}")
    vals = kernel.values
    scale = np.max(np.abs(vals))
    if scale > 0 and np.max(np.abs(vals - vals.T)) > 1e-8 * scale:
        raise ValidationError("kernel is not symmetric within tolerance")
    sqrt_w = np.sqrt(kernel.grid.weights)
    a = _sym(vals * np.outer(sqrt_w, sqrt_w))
    eigvals, eigvecs = eigh(a)
    order = np.argsort(eigvals)[::-1][:count]
    lam = eigvals[order]
    phi = (eigvecs[:, order] / sqrt_w[:, None]).T
    return EigenSystem(lam, _fix_signs(phi), kernel.grid, float(np.trace(a)))


def eigen_decompose_factored(
    factors: np.ndarray, coeffs: np.ndarray, grid: Grid, count: int
) -> EigenSystem:
    """Eigenpairs of the kernel sum_k c_k f_k(t) f_k(s) via its n x n Gram
    matrix; equivalent to :func:`eigen_decompose` on the assembled kernel
    but O(n^2 m) instead of O(m^3). Requires count <= n."""
    factors = np.atleast_2d(np.asarray(factors, dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    n = factors.shape[0]
    if factors.shape[1] != grid.m or coeffs.shape != (n,):
        raise ValidationError("factor matrix, coefficients, and grid sizes disagree")
    if np.any(coeffs < 0):
        raise ValidationError("factor coefficients must be nonnegative")
    if not 1 <= count <= n:
        raise ValidationError(f"count must be in [1, {n}] for a rank-{n} factorization")
    sqrt_c = np.sqrt(coeffs)
    gram = _sym(np.outer(sqrt_c, sqrt_c) * ((factors * grid.weights) @ factors.T))
    eigvals, eigvecs = eigh(gram)
    order = np.argsort(eigvals)[::-1][:count]
    lam = np.maximum(eigvals[order], 0.0)
    phi = np.zeros((count, grid.m))
    weighted = sqrt_c[:, None] * factors
    for k in range(count):
        if lam[k] > 0:
            phi[k] = (eigvecs[:, order[k]] @ weighted) / np.sqrt(lam[k])
    total = float(np.dot(coeffs, ((factors**2) @ grid.weights)))
    return EigenSystem(lam, _fix_signs(phi), grid, total)


def pooled_eigensystem(dataset: FunctionalDataset, count: int) -> EigenSystem:
    """Eigenpairs of the pooled covariance kernel, computed from the
    residual curves directly (each carries coefficient 1/N)."""
    total = dataset.total
    if count <= total:
        res = np.vstack([g - g.mean(axis=0) for g in dataset.groups])
        return eigen_decompose_factored(
            res, np.full(total, 1.0 / total), dataset.grid, count
        )
    return eigen_decompose(pooled_covariance(dataset), count)


def mean_test_eigensystem(dataset: FunctionalDataset, count: int) -> EigenSystem:
    """Eigenpairs of the cross-weighted kernel from
    :func:`mean_test_pooled_kernel`."""
    if dataset.n_groups != 2:
        raise ValidationError(f"K=2 required, dataset has K={dataset.n_groups}")
    n1, n2 = dataset.sizes
    total = n1 + n2
    if count <= total:
        res = np.vstack([g - g.mean(axis=0) for g in dataset.groups])
        coeffs = np.concatenate(
            [np.full(n1, n2 / (total * n1)), np.full(n2, n1 / (total * n2))]
        )
        return eigen_decompose_factored(res, coeffs, dataset.grid, count)
    return eigen_decompose(mean_test_pooled_kernel(dataset), count)


def project_scores(
    dataset: FunctionalDataset, i: int, center: np.ndarray, basis: np.ndarray
) -> np.ndarray:
    """Inner products of the centered group-i curves with each basis curve;
    shape (n_i, p)."""
    center = np.asarray(center, dtype=float)
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if center.shape != (dataset.m,) or basis.shape[1] != dataset.m:
        raise ValidationError("center or basis curves do not match the dataset grid")
    return (dataset.groups[i] - center) @ (basis * dataset.grid.weights).T


def degenerate_gap_indices(system: EigenSystem, rel_tol: float = 1e-10) -> tuple[int, ...]:
    """1-based indices k where the gap lambda_k - lambda_{k+1} falls below
    rel_tol * lambda_1 (flagged because projection statistics assume
    distinct leading eigenvalues)."""
    lam = system.eigenvalues
    if lam.size < 2 or lam[0] <= 0:
        return ()
    gaps = lam[:-1] - lam[1:]
    return tuple(int(k + 1) for k in np.nonzero(gaps < rel_tol * lam[0])[0])
