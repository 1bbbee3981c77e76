"""Functional data on a shared grid.

Curves are plain 1-D numpy arrays sampled on a :class:`Grid`; a group of
curves is an ``(n, m)`` array with one curve per row. All inner products
are grid-weighted quadrature sums, so every downstream formula reduces to
ordinary linear algebra against ``grid.weights``.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "Grid",
    "FunctionalDataset",
    "inner_product",
    "weighted_norm",
    "fourier_basis",
    "fourier_smooth",
    "smoothing_matrix",
    "load_dataset",
    "save_dataset",
]


def _trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights: interior points get the mean of the
    adjacent spacings, endpoints half their single spacing."""
    w = np.empty(points.size)
    w[0] = (points[1] - points[0]) / 2.0
    w[-1] = (points[-1] - points[-2]) / 2.0
    w[1:-1] = (points[2:] - points[:-2]) / 2.0
    return w


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Discretization of the unit interval with quadrature weights.

    ``points`` must be strictly increasing within [0, 1]; ``weights`` are
    positive and, for a grid spanning the full interval, sum to 1 (the
    trapezoid rule satisfies this exactly).
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _freeze(np.atleast_1d(self.points))
        wts = _freeze(np.atleast_1d(self.weights))
        if pts.ndim != 1 or pts.size < 2:
            raise ValidationError("grid needs at least 2 points")
        if wts.shape != pts.shape:
            raise ValidationError("grid points and weights differ in length")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(wts)):
            raise ValidationError("grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("grid points must be strictly increasing")
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise ValidationError("grid points must lie in [0, 1]")
        if np.any(wts <= 0.0):
            raise ValidationError("grid weights must be positive")
        if pts[0] == 0.0 and pts[-1] == 1.0 and abs(wts.sum() - 1.0) > 1e-12:
            raise ValidationError("weights of a grid spanning [0, 1] must sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def m(self) -> int:
        return self.points.size

    @classmethod
    def from_points(cls, points) -> "Grid":
        """Grid with composite-trapezoid quadrature weights."""
        pts = np.asarray(points, dtype=float)
        return cls(pts, _trapezoid_weights(pts))

    @classmethod
    def uniform(cls, m: int) -> "Grid":
        """m equidistant points t_i = (i-1)/(m-1) on [0, 1]."""
        if m < 2:
            raise ValidationError("uniform grid needs m >= 2")
        return cls.from_points(np.linspace(0.0, 1.0, m))


def inner_product(f: np.ndarray, g: np.ndarray, grid: Grid) -> float:
    """Quadrature inner product sum_i w_i f(t_i) g(t_i)."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.m,) or g.shape != (grid.m,):
        raise ValidationError(
            f"curve length mismatch: f has {f.shape}, g has {g.shape}, grid has m={grid.m}"
        )
    return float(np.dot(grid.weights * f, g))


def weighted_norm(f: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(max(inner_product(f, f, grid), 0.0)))


def fourier_basis(grid: Grid, n_basis: int) -> np.ndarray:
    """Rows 1, sqrt(2) sin(2 pi k t), sqrt(2) cos(2 pi k t) for k = 1..(n_basis-1)/2,
    evaluated on the grid. Shape (n_basis, m)."""
    if n_basis < 1 or n_basis % 2 == 0:
        raise ValidationError(f"n_basis must be odd and >= 1, got {n_basis}")
    if n_basis > grid.m:
        raise ValidationError(f"n_basis={n_basis} exceeds grid size m={grid.m}")
    t = grid.points
    basis = np.empty((n_basis, grid.m))
    basis[0] = 1.0
    root2 = np.sqrt(2.0)
    for k in range(1, (n_basis - 1) // 2 + 1):
        basis[2 * k - 1] = root2 * np.sin(2.0 * np.pi * k * t)
        basis[2 * k] = root2 * np.cos(2.0 * np.pi * k * t)
    return basis


def smoothing_matrix(grid: Grid, n_basis: int) -> np.ndarray:
    """m x m projection onto the Fourier span, orthogonal in the grid inner
    product; apply as ``curves @ P.T`` for row-wise smoothing."""
    basis = fourier_basis(grid, n_basis)
    bw = basis * grid.weights
    gram = bw @ basis.T
    return basis.T @ np.linalg.solve(gram, bw)


def fourier_smooth(raw: np.ndarray, grid: Grid, n_basis: int) -> np.ndarray:
    """Weighted least-squares projection of ``raw`` onto the Fourier span,
    evaluated back on the same grid. Idempotent."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (grid.m,):
        raise ValidationError(f"curve length {raw.shape} does not match grid m={grid.m}")
    basis = fourier_basis(grid, n_basis)
    bw = basis * grid.weights
    coef = np.linalg.solve(bw @ basis.T, bw @ raw)
    return basis.T @ coef


def _default_labels(k: int) -> tuple[str, ...]:
    return tuple(str(i + 1) for i in range(k))


@dataclass(frozen=True)
class FunctionalDataset:
    """K >= 2 groups of curves sharing one grid.

    ``groups[i]`` is an ``(n_i, m)`` array. Immutable after construction;
    every operation on it is a pure function.
    """

    grid: Grid
    groups: tuple[np.ndarray, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        groups = tuple(_freeze(np.atleast_2d(g)) for g in self.groups)
        if len(groups) < 2:
            raise ValidationError("K >= 2 required: need at least two groups")
        for i, g in enumerate(groups):
            if g.ndim != 2 or g.shape[1] != self.grid.m:
                raise ValidationError(
                    f"group {i + 1} curves have length {g.shape[-1]}, grid has m={self.grid.m}"
                )
            if g.shape[0] < 2:
                raise ValidationError(f"group {i + 1} has {g.shape[0]} curve(s); need n_i >= 2")
            if not np.all(np.isfinite(g)):
                raise ValidationError(f"group {i + 1} contains non-finite values")
        labels = tuple(self.labels) or _default_labels(len(groups))
        if len(labels) != len(groups):
            raise ValidationError("one label per group required")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "labels", labels)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(g.shape[0] for g in self.groups)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def m(self) -> int:
        return self.grid.m

    def replace_groups(self, groups) -> "FunctionalDataset":
        """Same grid and labels, new curves (used by resampling)."""
        return FunctionalDataset(self.grid, tuple(groups), self.labels)

    def smoothed(self, n_basis: int) -> "FunctionalDataset":
        """Every curve projected onto the n_basis-term Fourier span."""
        proj = smoothing_matrix(self.grid, n_basis)
        return self.replace_groups(g @ proj.T for g in self.groups)


def _open_text(source, mode: str):
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(os.fspath(source), mode, encoding="utf-8", newline=""), True


def load_dataset(source) -> FunctionalDataset:
    """Read the CSV curve format.

    Optional first row ``#grid,t_1,...,t_m`` fixes the grid (trapezoid
    weights); other ``#``-prefixed rows are comments. Data rows are
    ``label,v_1,...,v_m``; groups are ordered by first appearance of their
    label. Without a grid row the grid is uniform on [0, 1].
    """
    stream, owned = _open_text(source, "r")
    try:
        grid_points = None
        order: list[str] = []
        rows: dict[str, list[np.ndarray]] = {}
        width = None
        for idx, row in enumerate(csv.reader(stream), start=1):
            if not row:
                continue
            head = row[0].strip()
            if head.startswith("#"):
                if head == "#grid":
                    if idx != 1:
                        raise ValidationError(f"row {idx}: #grid row must come first")
                    try:
                        grid_points = np.array([float(v) for v in row[1:]])
                    except ValueError as exc:
                        raise ValidationError(f"row {idx}: bad grid value ({exc})") from None
                    if np.any(np.diff(grid_points) <= 0):
                        raise ValidationError("row 1: grid points must be strictly increasing")
                continue
            try:
                values = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ValidationError(f"row {idx}: bad numeric value ({exc})") from None
            if not np.all(np.isfinite(values)):
                raise ValidationError(f"row {idx}: non-finite value")
            if width is None:
                width = values.size
                if width < 2:
                    raise ValidationError(f"row {idx}: a curve needs at least 2 values")
            elif values.size != width:
                raise ValidationError(
                    f"row {idx}: ragged row has {values.size} values, expected {width}"
                )
            if head not in rows:
                order.append(head)
                rows[head] = []
            rows[head].append(values)
        if width is None:
            raise ValidationError("no data rows found")
        if len(order) < 2:
            raise ValidationError(f"K >= 2 required: found {len(order)} group label(s)")
        if grid_points is None:
            grid = Grid.uniform(width)
        else:
            if grid_points.size != width:
                raise ValidationError(
                    f"grid row has {grid_points.size} points, data rows have {width}"
                )
            grid = Grid.from_points(grid_points)
        return FunctionalDataset(
            grid, tuple(np.vstack(rows[label]) for label in order), tuple(order)
        )
    finally:
        if owned:
            stream.close()


def save_dataset(dataset: FunctionalDataset, target, comments=()) -> None:
    """Write the CSV curve format; the grid row is always emitted and values
    round-trip exactly (shortest-representation floats)."""
    stream, owned = _open_text(target, "w")
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["#grid"] + [repr(float(t)) for t in dataset.grid.points])
        for comment in comments:
            stream.write(f"#{comment}\n")
        for label, group in zip(dataset.labels, dataset.groups):
            for curve in group:
                writer.writerow([label] + [repr(float(v)) for v in curve])
    finally:
        if owned:
            stream.close()
